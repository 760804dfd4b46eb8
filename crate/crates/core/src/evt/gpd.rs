use super::gev::log1p_ratio;
use super::optimize::{minimize, standard_errors};
use super::{EvtFitResult, Family, ParamErrors, MIN_FIT_SAMPLES};
use crate::error::{Error, Result};

/// GPD log-density of an excess `y ≥ 0`.
#[inline]
pub fn gpd_log_pdf(y: f64, sigma: f64, xi: f64) -> f64 {
    if y < 0.0 {
        return f64::NEG_INFINITY;
    }
    let s = y / sigma;
    let xs = xi * s;
    if xs <= -1.0 {
        return f64::NEG_INFINITY;
    }
    -sigma.ln() - xs.ln_1p() - s * log1p_ratio(xs)
}

/// `1 - (1 + ξ y/σ)^{-1/ξ}`.
pub fn gpd_cdf(y: f64, sigma: f64, xi: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("GPD scale {sigma} must be positive")));
    }
    if y <= 0.0 {
        return Ok(0.0);
    }
    let s = y / sigma;
    if xi * s <= -1.0 {
        return Ok(1.0);
    }
    Ok(-(-s * log1p_ratio(xi * s)).exp_m1())
}

fn nll(excess: &[f64], p: &[f64]) -> f64 {
    let sigma = p[0].exp();
    let mut total = 0.0;
    for &y in excess {
        let l = gpd_log_pdf(y, sigma, p[1]);
        if !l.is_finite() {
            return f64::INFINITY;
        }
        total -= l;
    }
    total
}

/// Maximum-likelihood GPD fit of the excesses `y - u` of `exceedances` over
/// `threshold`. The reported `mu` is the threshold.
pub fn fit_gpd_mle(exceedances: &[f64], threshold: f64) -> Result<EvtFitResult> {
    fit_gpd_mle_with_floor(exceedances, threshold, MIN_FIT_SAMPLES)
}

pub fn fit_gpd_mle_with_floor(
    exceedances: &[f64],
    threshold: f64,
    min_samples: usize,
) -> Result<EvtFitResult> {
    if exceedances.len() < min_samples.max(3) {
        return Err(Error::Insufficient(format!(
            "{} exceedances, at least {} required",
            exceedances.len(),
            min_samples.max(3)
        )));
    }
    if !threshold.is_finite() || exceedances.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("exceedances must be finite".into()));
    }
    if exceedances.iter().any(|&v| v < threshold) {
        return Err(Error::InvalidParameter("value below the threshold".into()));
    }
    let n = exceedances.len() as f64;
    let mean_excess = exceedances.iter().map(|v| v - threshold).sum::<f64>() / n;
    if !(mean_excess > 0.0) || exceedances.iter().all(|&v| v == exceedances[0]) {
        return Err(Error::Degenerate("all excesses are equal".into()));
    }
    let mut y: Vec<f64> = exceedances.iter().map(|v| (v - threshold) / mean_excess).collect();
    y.sort_unstable_by(f64::total_cmp);

    // Hosking-Wallis probability-weighted moments: a0 = mean, a1 = E[Y(1-F)].
    let a0 = 1.0;
    let a1 = y
        .iter()
        .enumerate()
        .map(|(i, &v)| v * (1.0 - (i as f64 + 0.65) / n))
        .sum::<f64>()
        / n;
    let mut xi0 = 2.0 - a0 / (a0 - 2.0 * a1);
    let mut sigma0 = 2.0 * a0 * a1 / (a0 - 2.0 * a1);
    let objective = |p: &[f64]| nll(&y, p);
    if !(sigma0 > 0.0) || !xi0.is_finite() || !objective(&[sigma0.ln(), xi0]).is_finite() {
        xi0 = 0.0;
        sigma0 = 1.0;
    }
    let x0 = [sigma0.ln(), xi0];
    let initial = -objective(&x0);
    let m = minimize(objective, &x0)?;

    let natural = |p: &[f64]| nll(&y, &[p[0].max(1e-300).ln(), p[1]]);
    let est = [m.x[0].exp(), m.x[1]];
    let se = standard_errors(&natural, &est).map(|e| ParamErrors {
        xi: e[1],
        mu: None,
        sigma: e[0] * mean_excess,
    });
    Ok(EvtFitResult {
        family: Family::Gpd,
        xi: est[1],
        mu: threshold,
        sigma: est[0] * mean_excess,
        log_likelihood: -m.f - n * mean_excess.ln(),
        initial_log_likelihood: initial - n * mean_excess.ln(),
        n_samples: y.len(),
        iterations: m.iterations,
        standard_errors: se,
    })
}
