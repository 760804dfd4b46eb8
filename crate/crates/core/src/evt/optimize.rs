//! Quasi-Newton minimisation of small smooth objectives with numerical
//! derivatives. Objectives return `+∞` outside their domain.

use crate::error::{Error, Result};

pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
}

const MAX_ITER: usize = 500;
const GTOL: f64 = 1e-8;

fn gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], fx: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-6 * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        g[i] = match (fp.is_finite(), fm.is_finite()) {
            (true, true) => (fp - fm) / (2.0 * h),
            (true, false) => (fp - fx) / h,
            (false, true) => (fx - fm) / h,
            (false, false) => 0.0,
        };
    }
    g
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

/// BFGS with Armijo backtracking.
pub(crate) fn minimize<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64]) -> Result<Minimum> {
    let d = x0.len();
    let identity = |d: usize| -> Vec<f64> {
        (0..d * d).map(|k| if k / d == k % d { 1.0 } else { 0.0 }).collect()
    };
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    if !fx.is_finite() {
        return Err(Error::InvalidParameter(
            "starting point lies outside the objective's domain".into(),
        ));
    }
    let mut g = gradient(&f, &x, fx);
    let mut h = identity(d);
    let mut fresh = true;

    for iter in 0..MAX_ITER {
        let scale = 1.0 + fx.abs();
        if inf_norm(&g) <= GTOL * scale {
            return Ok(Minimum { x, f: fx, iterations: iter });
        }
        let mut dir: Vec<f64> = (0..d)
            .map(|i| -(0..d).map(|j| h[i * d + j] * g[j]).sum::<f64>())
            .collect();
        let mut slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            h = identity(d);
            fresh = true;
            dir = g.iter().map(|v| -v).collect();
            slope = -g.iter().map(|v| v * v).sum::<f64>();
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + alpha * b).collect();
            let ft = f(&trial);
            if ft.is_finite() && ft <= fx + 1e-4 * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }

        let Some((xn, fxn)) = accepted else {
            if !fresh {
                h = identity(d);
                fresh = true;
                continue;
            }
            // No descent left along the steepest direction: numerical optimum.
            let gn = inf_norm(&g);
            if gn <= 1e-5 * scale {
                return Ok(Minimum { x, f: fx, iterations: iter });
            }
            return Err(Error::NonConvergence {
                iterations: iter,
                gradient_norm: gn,
            });
        };

        let gn = gradient(&f, &xn, fxn);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let converged_f = (fx - fxn).abs() <= 1e-15 * scale;
        x = xn;
        fx = fxn;
        g = gn;
        if converged_f && inf_norm(&g) <= 1e-5 * scale {
            return Ok(Minimum { x, f: fx, iterations: iter + 1 });
        }
        if sy > 1e-12 * s.iter().map(|v| v * v).sum::<f64>().sqrt() {
            // H ← (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..d)
                .map(|i| (0..d).map(|j| h[i * d + j] * y[j]).sum())
                .collect();
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..d {
                for j in 0..d {
                    h[i * d + j] += -rho * (hy[i] * s[j] + s[i] * hy[j])
                        + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
            fresh = false;
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITER,
        gradient_norm: inf_norm(&g),
    })
}

/// Central-difference Hessian.
pub(crate) fn hessian<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> Vec<f64> {
    let d = x.len();
    let mut hm = vec![0.0; d * d];
    let steps: Vec<f64> = x.iter().map(|v| 1e-4 * v.abs().max(1.0)).collect();
    let eval = |di: usize, si: f64, dj: usize, sj: f64| {
        let mut p = x.to_vec();
        p[di] += si * steps[di];
        p[dj] += sj * steps[dj];
        f(&p)
    };
    for i in 0..d {
        for j in i..d {
            let v = (eval(i, 1.0, j, 1.0) - eval(i, 1.0, j, -1.0) - eval(i, -1.0, j, 1.0)
                + eval(i, -1.0, j, -1.0))
                / (4.0 * steps[i] * steps[j]);
            hm[i * d + j] = v;
            hm[j * d + i] = v;
        }
    }
    hm
}

/// Gauss-Jordan inverse; `None` when singular.
pub(crate) fn invert(m: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut a = m.to_vec();
    let mut inv: Vec<f64> = (0..d * d).map(|k| if k / d == k % d { 1.0 } else { 0.0 }).collect();
    for col in 0..d {
        let pivot = (col..d).max_by(|&r, &s| a[r * d + col].abs().total_cmp(&a[s * d + col].abs()))?;
        if a[pivot * d + col].abs() < 1e-300 {
            return None;
        }
        for k in 0..d {
            a.swap(col * d + k, pivot * d + k);
            inv.swap(col * d + k, pivot * d + k);
        }
        let p = a[col * d + col];
        for k in 0..d {
            a[col * d + k] /= p;
            inv[col * d + k] /= p;
        }
        for r in 0..d {
            if r != col {
                let factor = a[r * d + col];
                for k in 0..d {
                    a[r * d + k] -= factor * a[col * d + k];
                    inv[r * d + k] -= factor * inv[col * d + k];
                }
            }
        }
    }
    Some(inv)
}

/// Standard errors from the inverse observed information; `None` unless the
/// Hessian is positive definite.
pub(crate) fn standard_errors<F: Fn(&[f64]) -> f64>(nll: &F, x: &[f64]) -> Option<Vec<f64>> {
    let d = x.len();
    let inv = invert(&hessian(nll, x), d)?;
    (0..d)
        .map(|i| {
            let v = inv[i * d + i];
            (v > 0.0 && v.is_finite()).then(|| v.sqrt())
        })
        .collect()
}
