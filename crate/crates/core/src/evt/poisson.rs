use statrs::function::factorial::{ln_binomial, ln_factorial};

use crate::error::{Error, Result};
use crate::lattice::Trajectory;

/// `e^{-t} t^k / k!`, evaluated in the log domain.
pub fn poisson_pmf(t: f64, k: u64) -> f64 {
    if t == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    (-t + k as f64 * t.ln() - ln_factorial(k)).exp()
}

/// Pólya–Aeppli law: a Poisson number of clusters with rate `t(1-p)`, each
/// of geometric size `P(m) = (1-p) p^{m-1}`.
pub fn compound_poisson_pmf(t: f64, p: f64, k: u64) -> f64 {
    if p == 0.0 {
        return poisson_pmf(t, k);
    }
    let lambda = t * (1.0 - p);
    if k == 0 {
        return (-lambda).exp();
    }
    if lambda == 0.0 {
        return 0.0;
    }
    let (ln_l, ln_q, ln_p) = (lambda.ln(), (1.0 - p).ln(), p.ln());
    (1..=k)
        .map(|j| {
            let jf = j as f64;
            (-lambda + jf * ln_l - ln_factorial(j)
                + ln_binomial(k - 1, j - 1)
                + jf * ln_q
                + (k - j) as f64 * ln_p)
                .exp()
        })
        .sum()
}

/// Whether all sites agree to within `accuracy`: `max x_i - min x_i ≤ accuracy`.
#[inline]
pub fn strip_membership(x: &[f64], accuracy: f64) -> bool {
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo <= accuracy
}

/// Empirical measure of the strip along a trajectory.
pub fn strip_measure(traj: &Trajectory, accuracy: f64) -> Result<f64> {
    if traj.is_empty() {
        return Err(Error::Insufficient("empty trajectory".into()));
    }
    let hits = traj.states().filter(|x| strip_membership(x, accuracy)).count();
    Ok(hits as f64 / traj.len() as f64)
}

/// Visits to the strip among the first `⌊t / μ(S)⌋` membership flags.
pub fn count_visits_in(membership: &[bool], t: f64, mu_strip: f64) -> Result<usize> {
    if !(mu_strip > 0.0) || !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need t ≥ 0 and μ(S) > 0, got t = {t}, μ(S) = {mu_strip}"
        )));
    }
    let horizon = (t / mu_strip).floor();
    if horizon > membership.len() as f64 {
        return Err(Error::Insufficient(format!(
            "horizon {horizon} exceeds trajectory length {}",
            membership.len()
        )));
    }
    Ok(membership[..horizon as usize].iter().filter(|&&m| m).count())
}

pub fn count_visits(traj: &Trajectory, accuracy: f64, t: f64, mu_strip: f64) -> Result<usize> {
    let membership: Vec<bool> = traj.states().map(|x| strip_membership(x, accuracy)).collect();
    count_visits_in(&membership, t, mu_strip)
}

/// `½ Σ |p_k - q_k|`, missing entries treated as zero.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    0.5 * (0..n)
        .map(|k| (p.get(k).copied().unwrap_or(0.0) - q.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}
