//! Scalar observables along lattice trajectories.
//!
//! All four observables are `-log` of a distance, so they blow up to `+∞`
//! exactly on their target set (the target configuration for localization,
//! the diagonal or a union of partial diagonals for the synchronization
//! kinds). Distances are plain interval distances.

use std::fmt::Write as _;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticeState, Trajectory, TrajectoryConfig};

/// How the end sites of the chain see their neighbours in the local
/// synchronization observable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// End sites have a single neighbour.
    #[default]
    Chain,
    /// Site `n` is also a neighbour of site 1.
    Ring,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservableSpec {
    Localization { target: LatticeState },
    GlobalSync,
    LocalSync { boundary: Boundary },
    /// Zero-based, half-open index ranges.
    BlockSync { blocks: Vec<Range<usize>> },
}

impl ObservableSpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            ObservableSpec::Localization { target } if target.n() != n => {
                Err(Error::InvalidParameter(format!(
                    "localization target has {} components, lattice has {n}",
                    target.n()
                )))
            }
            ObservableSpec::BlockSync { blocks } => validate_blocks(blocks, n),
            _ if n < 2 => Err(Error::InvalidParameter(
                "synchronization needs at least two sites".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Evaluate on a raw state slice. Inputs are assumed validated.
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            ObservableSpec::Localization { target } => localization(x, target.components()),
            ObservableSpec::GlobalSync => global_sync(x),
            ObservableSpec::LocalSync { boundary } => local_sync(x, *boundary),
            ObservableSpec::BlockSync { blocks } => block_sync(x, blocks),
        }
    }

    /// Short tag used in file names and CSV metadata.
    pub fn tag(&self) -> &'static str {
        match self {
            ObservableSpec::Localization { .. } => "localization",
            ObservableSpec::GlobalSync => "global_sync",
            ObservableSpec::LocalSync {
                boundary: Boundary::Chain,
            } => "local_sync",
            ObservableSpec::LocalSync {
                boundary: Boundary::Ring,
            } => "local_sync_ring",
            ObservableSpec::BlockSync { .. } => "block_sync",
        }
    }
}

pub fn validate_blocks(blocks: &[Range<usize>], n: usize) -> Result<()> {
    if blocks.is_empty() {
        return Err(Error::InvalidBlocks("no blocks given".into()));
    }
    let mut sorted: Vec<&Range<usize>> = blocks.iter().collect();
    sorted.sort_by_key(|r| r.start);
    for b in &sorted {
        if b.end <= b.start || b.len() < 2 {
            return Err(Error::InvalidBlocks(format!(
                "block {}..{} has fewer than two sites",
                b.start, b.end
            )));
        }
        if b.end > n {
            return Err(Error::InvalidBlocks(format!(
                "block {}..{} exceeds lattice size {n}",
                b.start, b.end
            )));
        }
    }
    if let Some(w) = sorted.windows(2).find(|w| w[0].end > w[1].start) {
        return Err(Error::InvalidBlocks(format!(
            "blocks {}..{} and {}..{} overlap",
            w[0].start, w[0].end, w[1].start, w[1].end
        )));
    }
    Ok(())
}

#[inline]
fn neg_log(d: f64) -> f64 {
    -d.ln()
}

#[inline]
fn spread(x: &[f64]) -> f64 {
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    hi - lo
}

/// `-log Σ_i |x_i - z_i|`.
#[inline]
pub fn localization(x: &[f64], target: &[f64]) -> f64 {
    neg_log(x.iter().zip(target).map(|(a, b)| (a - b).abs()).sum())
}

/// `-log max_{i≠j} |x_i - x_j|`; the widest pair is max minus min.
#[inline]
pub fn global_sync(x: &[f64]) -> f64 {
    neg_log(spread(x))
}

/// `-log max |x_i - x_{i±1}|`.
#[inline]
pub fn local_sync(x: &[f64], boundary: Boundary) -> f64 {
    let mut gap = x.windows(2).map(|w| (w[0] - w[1]).abs()).fold(0.0, f64::max);
    if boundary == Boundary::Ring && x.len() > 2 {
        gap = gap.max((x[0] - x[x.len() - 1]).abs());
    }
    neg_log(gap)
}

/// `-log` of the largest within-block pairwise gap; sites outside blocks are ignored.
#[inline]
pub fn block_sync(x: &[f64], blocks: &[Range<usize>]) -> f64 {
    neg_log(
        blocks
            .iter()
            .map(|b| spread(&x[b.clone()]))
            .fold(0.0, f64::max),
    )
}

pub fn eval_localization(state: &LatticeState, target: &LatticeState) -> Result<f64> {
    ObservableSpec::Localization {
        target: target.clone(),
    }
    .validate(state.n())?;
    Ok(localization(state.components(), target.components()))
}

pub fn eval_global_sync(state: &LatticeState) -> Result<f64> {
    ObservableSpec::GlobalSync.validate(state.n())?;
    Ok(global_sync(state.components()))
}

pub fn eval_local_sync(state: &LatticeState, boundary: Boundary) -> Result<f64> {
    ObservableSpec::LocalSync { boundary }.validate(state.n())?;
    Ok(local_sync(state.components(), boundary))
}

pub fn eval_block_sync(state: &LatticeState, blocks: &[Range<usize>]) -> Result<f64> {
    validate_blocks(blocks, state.n())?;
    Ok(block_sync(state.components(), blocks))
}

/// Where a series came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub trajectory: TrajectoryConfig,
    pub observable: ObservableSpec,
}

/// `X_k = f(T̂^k x)`; may contain `+∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableSeries {
    pub values: Vec<f64>,
    pub provenance: Option<Provenance>,
}

impl ObservableSeries {
    pub fn from_values(values: Vec<f64>) -> Self {
        Self {
            values,
            provenance: None,
        }
    }

    pub fn from_trajectory(traj: &Trajectory, spec: &ObservableSpec) -> Result<Self> {
        spec.validate(traj.n())?;
        Ok(Self::from_values(traj.states().map(|s| spec.eval(s)).collect()))
    }

    /// Generate the trajectory and evaluate on the fly, without storing states.
    pub fn generate(config: &TrajectoryConfig, spec: &ObservableSpec) -> Result<Self> {
        spec.validate(config.map.n)?;
        let mut values = Vec::with_capacity(config.length);
        config.for_each_state(|_, x| values.push(spec.eval(x)))?;
        Ok(Self {
            values,
            provenance: Some(Provenance {
                trajectory: config.clone(),
                observable: spec.clone(),
            }),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Indicator of `X_k > u`; `+∞` exceeds every finite threshold.
    pub fn exceedances(&self, threshold: f64) -> Vec<bool> {
        self.values.iter().map(|&v| v > threshold).collect()
    }

    /// CSV `step,value` with the literal `inf` for infinities.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,value\n");
        for (k, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{k},{}", fmt_value(*v));
        }
        out
    }
}

/// Formats finite values with 17 significant digits, infinities as `inf`/`-inf`.
pub fn fmt_value(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.16e}")
    }
}

/// `M_k = max(X_0, …, X_{k-1})` for `k = 1..=len`.
pub fn running_maximum(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Insufficient("running maximum of an empty series".into()));
    }
    let mut acc = f64::NEG_INFINITY;
    Ok(values
        .iter()
        .map(|&v| {
            acc = acc.max(v);
            acc
        })
        .collect())
}

/// Label of the quantile convention, recorded in output metadata.
pub const QUANTILE_CONVENTION: &str = "linear interpolation between order statistics, h = (N-1) q";

/// Empirical `q`-quantile of the finite values, linearly interpolated
/// between order statistics at position `(N-1)q`.
pub fn threshold_from_quantile(values: &[f64], q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParameter(format!("quantile {q} outside (0, 1)")));
    }
    let mut finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return Err(Error::Degenerate(
            "no finite values to take a quantile of".into(),
        ));
    }
    finite.sort_unstable_by(f64::total_cmp);
    let h = (finite.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(finite.len() - 1);
    let frac = h - lo as f64;
    Ok(finite[lo] + frac * (finite[hi] - finite[lo]))
}
