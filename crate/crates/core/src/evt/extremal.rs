use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::poisson::strip_membership;
use super::{EiEstimate, EiMetadata, EiMethod};
use crate::error::{Error, Result};
use crate::lattice::Trajectory;
use crate::observables::{threshold_from_quantile, ObservableSeries};

/// Default truncation of the return-time estimator. Only immediate returns
/// are counted; longer windows mostly pick up unrelated re-entries whose
/// mass grows like `k_max · μ(S)`.
pub const DEFAULT_K_MAX: usize = 0;
pub const DEFAULT_MIN_VISITS: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub exceedance_count: usize,
    pub cluster_count: usize,
    /// Lengths of the maximal runs of at least two consecutive exceedances.
    pub cluster_sizes: Vec<usize>,
    /// Index gaps between consecutive exceedances.
    pub waiting_times: Vec<usize>,
}

impl ClusterStats {
    fn exceedance_times(indicator: &[bool]) -> Vec<usize> {
        indicator
            .iter()
            .enumerate()
            .filter_map(|(i, &e)| e.then_some(i))
            .collect()
    }
}

pub fn extract_clusters(indicator: &[bool]) -> ClusterStats {
    let times = ClusterStats::exceedance_times(indicator);
    let waiting_times: Vec<usize> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let mut cluster_sizes = Vec::new();
    let mut run = 0usize;
    for &e in indicator.iter().chain(std::iter::once(&false)) {
        if e {
            run += 1;
        } else {
            if run >= 2 {
                cluster_sizes.push(run);
            }
            run = 0;
        }
    }
    ClusterStats {
        exceedance_count: times.len(),
        cluster_count: cluster_sizes.len(),
        cluster_sizes,
        waiting_times,
    }
}

/// Maxima of consecutive blocks of `block` values; a trailing partial block
/// is dropped.
pub fn block_maxima(values: &[f64], block: usize) -> Vec<f64> {
    if block == 0 {
        return Vec::new();
    }
    values
        .chunks_exact(block)
        .map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

/// Normalized histogram of the waiting times.
pub fn waiting_time_epdf(stats: &ClusterStats) -> Result<BTreeMap<usize, f64>> {
    if stats.waiting_times.is_empty() {
        return Err(Error::Insufficient("no waiting times".into()));
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &w in &stats.waiting_times {
        *counts.entry(w).or_default() += 1;
    }
    let total = stats.waiting_times.len() as f64;
    Ok(counts.into_iter().map(|(w, c)| (w, c as f64 / total)).collect())
}

pub fn epdf_to_csv(epdf: &BTreeMap<usize, f64>) -> String {
    let mut out = String::from("waiting_time,probability\n");
    for (w, p) in epdf {
        out.push_str(&format!("{w},{p:.16e}\n"));
    }
    out
}

/// Süveges' maximum-likelihood estimator from the gaps between exceedances.
///
/// With gaps `T_i`, `S_i = T_i - 1`, `N_C = #{S_i > 0}`, `A = (1-q) Σ S_i`
/// and `M` the number of gaps,
/// `θ = (A + M + N_C - sqrt((A + M + N_C)² - 8 N_C A)) / (2A)`.
///
/// Conventions: no run of two consecutive exceedances gives `θ = 1`; every
/// gap equal to one gives `θ = 0`. Both are flagged.
pub fn suveges_ei(indicator: &[bool], q: f64) -> EiEstimate {
    let times = ClusterStats::exceedance_times(indicator);
    let metadata = EiMetadata {
        quantile: Some(q),
        samples: Some(indicator.len()),
        ..EiMetadata::default()
    };
    let flagged = |theta: f64, flag: &str| {
        let mut e = EiEstimate::new(theta, EiMethod::Suveges);
        e.flag = Some(flag.to_string());
        e.metadata = metadata.clone();
        e
    };
    if times.len() < 2 {
        return flagged(1.0, "fewer than two exceedances");
    }
    if !times.windows(2).any(|w| w[1] - w[0] == 1) {
        return flagged(1.0, "no clusters");
    }
    let m = (times.len() - 1) as f64;
    let mut n_c = 0usize;
    let mut s_sum = 0usize;
    for w in times.windows(2) {
        let s = w[1] - w[0] - 1;
        if s > 0 {
            n_c += 1;
            s_sum += s;
        }
    }
    let a = (1.0 - q) * s_sum as f64;
    if n_c == 0 || a <= 0.0 {
        return flagged(0.0, "all exceedances consecutive");
    }
    let n_c = n_c as f64;
    let b = a + m + n_c;
    let theta = (b - (b * b - 8.0 * n_c * a).max(0.0).sqrt()) / (2.0 * a);
    let mut est = EiEstimate::new(theta, EiMethod::Suveges);
    let th = est.theta;
    if th > 0.0 && th < 1.0 {
        let info = (m - n_c) / (1.0 - th).powi(2) + 2.0 * n_c / (th * th);
        if info > 0.0 {
            est.uncertainty = Some(info.recip().sqrt());
        }
    }
    est.metadata = metadata;
    est
}

/// Thresholds `series` at its `q`-quantile and applies [`suveges_ei`].
pub fn suveges_from_series(series: &ObservableSeries, q: f64) -> Result<EiEstimate> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParameter(format!("quantile {q} outside (0, 1)")));
    }
    let u = threshold_from_quantile(&series.values, q)?;
    Ok(suveges_ei(&series.exceedances(u), q))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QkEstimate {
    /// `q[k]`: fraction of visits whose first return takes exactly `k+1` steps.
    pub q: Vec<f64>,
    pub theta: f64,
    /// Fraction of visits with no return within `k_max + 1` steps.
    pub tail: f64,
    pub visits: usize,
}

impl QkEstimate {
    pub fn to_estimate(&self) -> EiEstimate {
        let mut e = EiEstimate::new(self.theta, EiMethod::ReturnTimeQk);
        let v = self.visits as f64;
        e.uncertainty = Some((self.theta * (1.0 - self.theta) / v).sqrt());
        e.metadata.samples = Some(self.visits);
        e
    }
}

/// Return-time estimator on a strip-membership series. Only visits whose
/// whole return window fits in the series are counted.
pub fn qk_from_membership(membership: &[bool], k_max: usize, min_visits: usize) -> Result<QkEstimate> {
    let window = k_max + 1;
    let mut q = vec![0usize; window];
    let mut visits = 0usize;
    let last = membership.len().saturating_sub(window);
    for t in 0..last {
        if !membership[t] {
            continue;
        }
        visits += 1;
        if let Some(r) = membership[t + 1..=t + window].iter().position(|&m| m) {
            q[r] += 1;
        }
    }
    if visits < min_visits.max(1) {
        return Err(Error::Insufficient(format!(
            "{visits} strip visits, at least {} required",
            min_visits.max(1)
        )));
    }
    let v = visits as f64;
    let q: Vec<f64> = q.into_iter().map(|c| c as f64 / v).collect();
    let tail = (1.0 - q.iter().sum::<f64>()).clamp(0.0, 1.0);
    Ok(QkEstimate {
        q,
        theta: tail,
        tail,
        visits,
    })
}

pub fn qk_return_estimator(
    traj: &Trajectory,
    accuracy: f64,
    k_max: usize,
    min_visits: usize,
) -> Result<QkEstimate> {
    if !(accuracy > 0.0) {
        return Err(Error::InvalidParameter(format!("accuracy {accuracy} must be positive")));
    }
    let membership: Vec<bool> = traj.states().map(|x| strip_membership(x, accuracy)).collect();
    qk_from_membership(&membership, k_max, min_visits)
}
