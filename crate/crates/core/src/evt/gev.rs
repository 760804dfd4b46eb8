use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use super::optimize::{minimize, standard_errors};
use super::{EvtFitResult, Family, ParamErrors, MIN_FIT_SAMPLES};
use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GevParams {
    pub mu: f64,
    pub sigma: f64,
    pub xi: f64,
}

/// `ln(1 + y) / y`, continuous through `y = 0`.
#[inline]
pub(crate) fn log1p_ratio(y: f64) -> f64 {
    if y == 0.0 {
        1.0
    } else {
        y.ln_1p() / y
    }
}

/// `exp{-[1 + ξ(y-μ)/σ]^{-1/ξ}}`, with the Gumbel limit at `ξ = 0`.
pub fn gev_cdf(y: f64, params: GevParams) -> Result<f64> {
    let GevParams { mu, sigma, xi } = params;
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("GEV scale {sigma} must be positive")));
    }
    let s = (y - mu) / sigma;
    if xi == 0.0 {
        return Ok((-(-s).exp()).exp());
    }
    let t = 1.0 + xi * s;
    if t <= 0.0 {
        // Outside the support: below the lower endpoint for ξ > 0, above the
        // upper endpoint for ξ < 0.
        return Ok(if xi > 0.0 { 0.0 } else { 1.0 });
    }
    Ok((-(-s * log1p_ratio(xi * s)).exp()).exp())
}

/// GEV log-density; `-∞` outside the support.
#[inline]
pub fn gev_log_pdf(y: f64, params: GevParams) -> f64 {
    let GevParams { mu, sigma, xi } = params;
    let s = (y - mu) / sigma;
    let xs = xi * s;
    if xs <= -1.0 {
        return f64::NEG_INFINITY;
    }
    // (1/ξ) ln t written as s·ln(1+ξs)/(ξs) stays smooth through ξ = 0.
    let inv_log = s * log1p_ratio(xs);
    -sigma.ln() - xs.ln_1p() - inv_log - (-inv_log).exp()
}

fn nll(data: &[f64], p: &[f64]) -> f64 {
    let params = GevParams {
        mu: p[0],
        sigma: p[1].exp(),
        xi: p[2],
    };
    let mut total = 0.0;
    for &x in data {
        let l = gev_log_pdf(x, params);
        if !l.is_finite() {
            return f64::INFINITY;
        }
        total -= l;
    }
    total
}

/// Hosking's probability-weighted-moments estimator.
fn pwm_start(sorted: &[f64]) -> GevParams {
    let n = sorted.len() as f64;
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    for (i, &x) in sorted.iter().enumerate() {
        let i = i as f64;
        b0 += x;
        b1 += x * i / (n - 1.0);
        b2 += x * i * (i - 1.0) / ((n - 1.0) * (n - 2.0));
    }
    b0 /= n;
    b1 /= n;
    b2 /= n;
    let c = (2.0 * b1 - b0) / (3.0 * b2 - b0) - 2f64.ln() / 3f64.ln();
    let k = 7.8590 * c + 2.9554 * c * c;
    if !k.is_finite() || k.abs() < 1e-6 {
        let sigma = (2.0 * b1 - b0) / 2f64.ln();
        return GevParams {
            mu: b0 - EULER_GAMMA * sigma,
            sigma,
            xi: 0.0,
        };
    }
    let g = gamma(1.0 + k);
    let sigma = (2.0 * b1 - b0) * k / (g * (1.0 - 2f64.powf(-k)));
    GevParams {
        mu: b0 + sigma * (g - 1.0) / k,
        sigma,
        xi: -k,
    }
}

fn standardize(values: &[f64], min_samples: usize) -> Result<(Vec<f64>, f64, f64)> {
    if values.len() < min_samples.max(3) {
        return Err(Error::Insufficient(format!(
            "{} samples, at least {} required",
            values.len(),
            min_samples.max(3)
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("samples must be finite".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if !(sd > 0.0) || values.iter().all(|&v| v == values[0]) {
        return Err(Error::Degenerate("all samples are equal".into()));
    }
    Ok((values.iter().map(|v| (v - mean) / sd).collect(), mean, sd))
}

/// Maximum-likelihood GEV fit of block maxima.
///
/// Works on standardized data so the result is location/scale equivariant
/// up to rounding.
pub fn fit_gev_mle(block_maxima: &[f64]) -> Result<EvtFitResult> {
    fit_gev_mle_with_floor(block_maxima, MIN_FIT_SAMPLES)
}

pub fn fit_gev_mle_with_floor(block_maxima: &[f64], min_samples: usize) -> Result<EvtFitResult> {
    let (z, mean, sd) = standardize(block_maxima, min_samples)?;
    let mut sorted = z.clone();
    sorted.sort_unstable_by(f64::total_cmp);

    let objective = |p: &[f64]| nll(&z, p);
    let mut start = pwm_start(&sorted);
    let mut x0 = vec![start.mu, start.sigma.max(1e-3).ln(), start.xi];
    if !objective(&x0).is_finite() {
        // PWM guess puts a sample outside the support; fall back to Gumbel moments.
        let sigma = 6f64.sqrt() / std::f64::consts::PI;
        start = GevParams {
            mu: -EULER_GAMMA * sigma,
            sigma,
            xi: 0.0,
        };
        x0 = vec![start.mu, sigma.ln(), 0.0];
    }
    let initial = -objective(&x0);
    let m = minimize(objective, &x0)?;

    let natural = |p: &[f64]| nll(&z, &[p[0], p[1].max(1e-300).ln(), p[2]]);
    let est = [m.x[0], m.x[1].exp(), m.x[2]];
    let se = standard_errors(&natural, &est).map(|e| ParamErrors {
        mu: Some(e[0] * sd),
        sigma: e[1] * sd,
        xi: e[2],
    });
    let n = z.len() as f64;
    Ok(EvtFitResult {
        family: Family::Gev,
        xi: est[2],
        mu: mean + sd * est[0],
        sigma: sd * est[1],
        log_likelihood: -m.f - n * sd.ln(),
        initial_log_likelihood: initial - n * sd.ln(),
        n_samples: z.len(),
        iterations: m.iterations,
        standard_errors: se,
    })
}
