//! Extreme-value statistics: likelihood fits of the GEV and GPD families,
//! extremal-index estimators and visit-count laws.

mod extremal;
mod gev;
mod gpd;
mod optimize;
mod poisson;

pub use extremal::{
    block_maxima, epdf_to_csv, extract_clusters, qk_from_membership, qk_return_estimator, suveges_ei, suveges_from_series,
    waiting_time_epdf, ClusterStats, QkEstimate, DEFAULT_K_MAX, DEFAULT_MIN_VISITS,
};
pub use gev::{fit_gev_mle, fit_gev_mle_with_floor, gev_cdf, gev_log_pdf, GevParams};
pub use gpd::{fit_gpd_mle, fit_gpd_mle_with_floor, gpd_cdf, gpd_log_pdf};
pub use poisson::{
    compound_poisson_pmf, count_visits, count_visits_in, poisson_pmf, strip_membership,
    strip_measure, total_variation,
};

use serde::{Deserialize, Serialize};

/// Default minimum sample size for likelihood fits.
pub const MIN_FIT_SAMPLES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gev,
    Gpd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamErrors {
    pub xi: f64,
    /// Absent for GPD fits, where the location is the fixed threshold.
    pub mu: Option<f64>,
    pub sigma: f64,
}

/// Maximum-likelihood fit of a GEV (block maxima) or GPD (excesses) model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvtFitResult {
    pub family: Family,
    pub xi: f64,
    /// GEV location, or the threshold for GPD fits.
    pub mu: f64,
    pub sigma: f64,
    pub log_likelihood: f64,
    /// Log-likelihood at the probability-weighted-moments starting point.
    pub initial_log_likelihood: f64,
    pub n_samples: usize,
    pub iterations: usize,
    pub standard_errors: Option<ParamErrors>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EiMethod {
    Suveges,
    ReturnTimeQk,
    TheoreticalFormula,
    SpectralUlam,
}

impl EiMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            EiMethod::Suveges => "suveges",
            EiMethod::ReturnTimeQk => "return_time_qk",
            EiMethod::TheoreticalFormula => "theoretical_formula",
            EiMethod::SpectralUlam => "spectral_ulam",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EiMetadata {
    pub quantile: Option<f64>,
    pub n: Option<usize>,
    pub gamma: Option<f64>,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
}

/// An extremal-index value in `[0, 1]` with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EiEstimate {
    pub theta: f64,
    pub method: EiMethod,
    pub uncertainty: Option<f64>,
    /// Set when a degenerate-input convention was applied.
    pub flag: Option<String>,
    pub metadata: EiMetadata,
}

impl EiEstimate {
    pub fn new(theta: f64, method: EiMethod) -> Self {
        Self {
            theta: theta.clamp(0.0, 1.0),
            method,
            uncertainty: None,
            flag: None,
            metadata: EiMetadata::default(),
        }
    }
}

/// Flat JSON record shared by fits and EI estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EstimateRecord {
    pub method: String,
    pub theta: Option<f64>,
    pub xi: Option<f64>,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub n: Option<usize>,
    pub gamma: Option<f64>,
    pub epsilon: Option<f64>,
    pub quantile: Option<f64>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
}

impl From<&EiEstimate> for EstimateRecord {
    fn from(e: &EiEstimate) -> Self {
        Self {
            method: e.method.as_str().into(),
            theta: Some(e.theta),
            n: e.metadata.n,
            gamma: e.metadata.gamma,
            epsilon: e.metadata.epsilon,
            quantile: e.metadata.quantile,
            seed: e.metadata.seed,
            samples: e.metadata.samples,
            ..Default::default()
        }
    }
}

impl From<&EvtFitResult> for EstimateRecord {
    fn from(f: &EvtFitResult) -> Self {
        Self {
            method: match f.family {
                Family::Gev => "gev_mle".into(),
                Family::Gpd => "gpd_mle".into(),
            },
            xi: Some(f.xi),
            mu: Some(f.mu),
            sigma: Some(f.sigma),
            samples: Some(f.n_samples),
            ..Default::default()
        }
    }
}
