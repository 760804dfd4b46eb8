//! Declarative sweep configuration, read from a flat TOML file.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evt::{DEFAULT_K_MAX, DEFAULT_MIN_VISITS, MIN_FIT_SAMPLES};
use crate::lattice::{AffineBranch, LatticeState, LocalMap, MapSpec, NoiseSpec, DEFAULT_BURN_IN};
use crate::observables::{Boundary, ObservableSpec};
use crate::spectral::{DEFAULT_NU_LADDER, DEFAULT_SAMPLES_PER_AXIS};

/// Reference coupling bound for the tripling map; values above it draw a
/// warning.
pub const GAMMA_WARNING: f64 = 2.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ObservableKind {
    #[default]
    #[serde(alias = "global", alias = "psi")]
    GlobalSync,
    #[serde(alias = "local", alias = "theta")]
    LocalSync,
    #[serde(alias = "phi")]
    Localization,
    #[serde(alias = "block")]
    BlockSync,
}

impl ObservableKind {
    pub fn tag(self) -> &'static str {
        match self {
            ObservableKind::GlobalSync => "global_sync",
            ObservableKind::LocalSync => "local_sync",
            ObservableKind::Localization => "localization",
            ObservableKind::BlockSync => "block_sync",
        }
    }
}

/// Every key is optional; unset keys take the defaults documented in the
/// README.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Slope of the map `x ↦ slope·x mod 1`; ignored when `branches` is set.
    pub slope: u32,
    /// Interior and end points `0 = b_0 < … < b_m = 1` of a general map.
    pub boundaries: Option<Vec<f64>>,
    /// `[slope, offset]` per branch of a general map.
    pub branches: Option<Vec<[f64; 2]>>,

    pub n: Option<usize>,
    /// Inclusive `[first, last]`.
    pub n_range: Option<[usize; 2]>,
    pub n_values: Option<Vec<usize>>,

    pub gamma: Option<f64>,
    /// `[start, stop, step]`, stop inclusive.
    pub gamma_range: Option<[f64; 3]>,
    pub gamma_values: Option<Vec<f64>>,

    pub epsilon: Vec<f64>,
    pub length: usize,
    pub burn_in: usize,
    pub quantile: f64,
    pub realizations: usize,
    pub seed: u64,

    pub observable: ObservableKind,
    pub boundary: Boundary,
    /// Zero-based half-open `[start, end)` blocks for `block_sync`.
    pub blocks: Option<Vec<[usize; 2]>>,
    /// Target configuration for `localization`; defaults to the origin.
    pub target: Option<Vec<f64>>,

    pub k_max: usize,
    pub min_visits: usize,
    pub min_exceedances: usize,
    pub block_size: usize,

    /// Steps of the series excerpt in waiting-time reports.
    pub excerpt: usize,

    /// Rescaled time for visit counts.
    pub t: f64,
    pub accuracy: f64,
    pub ensemble: usize,
    pub calibration_length: usize,

    pub bins: Option<usize>,
    pub iterations: usize,
    /// Diagonal-tube half-width; defaults to two bin widths.
    pub band: Option<f64>,

    pub k: usize,
    pub samples_per_axis: usize,
    pub nu: Vec<f64>,
    pub lambda2_iterations: usize,
    pub export_operator: bool,

    /// Full-scale presets in `reproduce`.
    pub full_scale: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            slope: 3,
            boundaries: None,
            branches: None,
            n: None,
            n_range: None,
            n_values: None,
            gamma: None,
            gamma_range: None,
            gamma_values: None,
            epsilon: vec![0.0],
            length: 10_000,
            burn_in: DEFAULT_BURN_IN,
            quantile: 0.98,
            realizations: 10,
            seed: 0,
            observable: ObservableKind::GlobalSync,
            boundary: Boundary::Chain,
            blocks: None,
            target: None,
            k_max: DEFAULT_K_MAX,
            min_visits: DEFAULT_MIN_VISITS,
            min_exceedances: MIN_FIT_SAMPLES,
            block_size: 100,
            excerpt: 1_000,
            t: 1.0,
            accuracy: 0.01,
            ensemble: 10_000,
            calibration_length: 1_000_000,
            bins: None,
            iterations: 100_000,
            band: None,
            k: 900,
            samples_per_axis: DEFAULT_SAMPLES_PER_AXIS,
            nu: DEFAULT_NU_LADDER.to_vec(),
            lambda2_iterations: 200,
            export_operator: false,
            full_scale: false,
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// `[start, stop, step]` with `stop` included up to rounding.
pub fn float_range(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !start.is_finite() || !stop.is_finite() || stop < start {
        return Err(config_err(format!("bad range [{start}, {stop}, {step}]")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    // Round to 12 decimals so 0.1 + 0.2 style drift never leaks into files.
    Ok((0..count)
        .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Fails for seeds above `i64::MAX`, which TOML integers cannot hold.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err(e.to_string()))
    }

    pub fn local_map(&self) -> Result<LocalMap> {
        match (&self.boundaries, &self.branches) {
            (Some(b), Some(br)) => LocalMap::new(
                b.clone(),
                br.iter()
                    .map(|&[slope, offset]| AffineBranch { slope, offset })
                    .collect(),
            ),
            (None, None) => LocalMap::multiplier(self.slope),
            _ => Err(config_err("`boundaries` and `branches` must be given together")),
        }
    }

    pub fn ns(&self) -> Result<Vec<usize>> {
        let ns = match (self.n, self.n_range, &self.n_values) {
            (None, None, None) => vec![2],
            (Some(n), None, None) => vec![n],
            (None, Some([a, b]), None) if a <= b => (a..=b).collect(),
            (None, None, Some(v)) => v.clone(),
            (None, Some(_), None) => return Err(config_err("n_range must be [first, last] with first <= last")),
            _ => return Err(config_err("give only one of n, n_range, n_values")),
        };
        if ns.is_empty() || ns.iter().any(|&n| n < 2) {
            return Err(config_err("n values must be nonempty and >= 2"));
        }
        Ok(ns)
    }

    pub fn gammas(&self) -> Result<Vec<f64>> {
        let gs = match (self.gamma, self.gamma_range, &self.gamma_values) {
            (None, None, None) => float_range(0.0, 0.6, 0.1)?,
            (Some(g), None, None) => vec![g],
            (None, Some([a, b, s]), None) => float_range(a, b, s)?,
            (None, None, Some(v)) => v.clone(),
            _ => return Err(config_err("give only one of gamma, gamma_range, gamma_values")),
        };
        if gs.is_empty() || gs.iter().any(|g| !(0.0..1.0).contains(g)) {
            return Err(config_err("gamma values must be nonempty and in [0, 1)"));
        }
        Ok(gs)
    }

    pub fn observable_spec(&self, n: usize) -> Result<ObservableSpec> {
        let spec = match self.observable {
            ObservableKind::GlobalSync => ObservableSpec::GlobalSync,
            ObservableKind::LocalSync => ObservableSpec::LocalSync {
                boundary: self.boundary,
            },
            ObservableKind::Localization => {
                let target = match &self.target {
                    Some(t) => LatticeState::new(t.clone())?,
                    None => LatticeState::diagonal(0.0, n)?,
                };
                ObservableSpec::Localization { target }
            }
            ObservableKind::BlockSync => {
                let blocks: Vec<Range<usize>> = self
                    .blocks
                    .as_ref()
                    .ok_or_else(|| config_err("block_sync needs `blocks`"))?
                    .iter()
                    .map(|&[a, b]| a..b)
                    .collect();
                ObservableSpec::BlockSync { blocks }
            }
        };
        spec.validate(n)?;
        Ok(spec)
    }

    pub fn map_spec(&self, n: usize, gamma: f64) -> Result<MapSpec> {
        MapSpec::new(self.local_map()?, n, gamma)
    }

    pub fn validate(&self) -> Result<()> {
        let map = self.local_map()?;
        let ns = self.ns()?;
        self.gammas()?;
        if self.epsilon.is_empty() {
            return Err(config_err("epsilon list is empty"));
        }
        for &e in &self.epsilon {
            NoiseSpec::new(e)?;
        }
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return Err(config_err(format!("quantile {} outside (0, 1)", self.quantile)));
        }
        if self.length == 0 || self.realizations == 0 || self.block_size == 0 {
            return Err(config_err("length, realizations and block_size must be positive"));
        }
        if !(self.t >= 0.0) || !(self.accuracy > 0.0 && self.accuracy < 1.0) {
            return Err(config_err("need t >= 0 and accuracy in (0, 1)"));
        }
        if self.nu.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
            return Err(config_err("nu values must lie in (0, 1)"));
        }
        if self.samples_per_axis == 0 || self.k == 0 {
            return Err(config_err("k and samples_per_axis must be positive"));
        }
        for &n in &ns {
            self.observable_spec(n)?;
        }
        if map.branches().is_empty() {
            return Err(config_err("local map has no branches"));
        }
        Ok(())
    }

    /// Non-fatal remarks recorded in the manifest.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Ok(gs) = self.gammas() {
            if let Some(g) = gs.iter().copied().filter(|&g| g >= GAMMA_WARNING).reduce(f64::max) {
                out.push(format!("gamma up to {g} is at or above the reference bound 2/3"));
            }
        }
        if self.full_scale {
            out.push("full-scale presets requested; expect long run times".into());
        }
        out
    }
}
