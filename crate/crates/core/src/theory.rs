//! Closed-form predictions used as oracles for the estimators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{circle_distance, jacobian_det, step, LatticeState, LocalMap, MapSpec};

/// Default number of quadrature cells for [`ei_sync_formula`].
pub const DEFAULT_QUADRATURE_CELLS: usize = 10_000;

const PERIOD_TOLERANCE: f64 = 1e-9;

/// Parameters shared by the synchronization formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryInputs {
    pub n: usize,
    pub gamma: f64,
    /// Expansion bound `λ = 1 / inf |T'|`.
    pub lambda: f64,
    pub sup_h: Option<f64>,
    pub inf_h: Option<f64>,
}

impl TheoryInputs {
    pub fn new(n: usize, gamma: f64, lambda: f64) -> Self {
        Self {
            n,
            gamma,
            lambda,
            sup_h: None,
            inf_h: None,
        }
    }

    pub fn for_map(spec: &MapSpec) -> Self {
        Self::new(spec.n, spec.gamma, spec.lambda())
    }

    pub fn with_density_bounds(mut self, sup_h: f64, inf_h: f64) -> Self {
        self.sup_h = Some(sup_h);
        self.inf_h = Some(inf_h);
        self
    }

    pub fn check(&self) -> Result<()> {
        check_basic(self.n, self.gamma, self.lambda)
    }
}

fn check_basic(n: usize, gamma: f64, lambda: f64) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("n = {n}, need n >= 2")));
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidParameter(format!("lambda = {lambda} outside (0, 1)")));
    }
    if !(gamma >= 0.0 && gamma < 1.0 - lambda) {
        return Err(Error::Hypothesis {
            gamma,
            limit: 1.0 - lambda,
        });
    }
    Ok(())
}

/// `1 - |det D(T̂^p)(z)|^{-1}` for a period-`p` orbit.
pub fn ei_periodic_point(orbit: &[LatticeState], spec: &MapSpec) -> Result<f64> {
    if orbit.is_empty() {
        return Err(Error::InvalidParameter("empty orbit".into()));
    }
    let p = orbit.len();
    let mut log_det = 0.0;
    for (t, z) in orbit.iter().enumerate() {
        let image = step(z, spec)?;
        let next = &orbit[(t + 1) % p];
        let mismatch = image
            .components()
            .iter()
            .zip(next.components())
            .map(|(&a, &b)| circle_distance(a, b))
            .fold(0.0, f64::max);
        if mismatch > PERIOD_TOLERANCE {
            return Err(Error::NotPeriodic { step: t, mismatch });
        }
        log_det += jacobian_det(z, spec)?.ln();
    }
    Ok(-(-log_det).exp_m1())
}

/// `θ_n = 1 - (1-γ)^{1-n} ∫ ĥ/|T'|^{n-1} / ∫ ĥ`, with `trace(x) = ĥ(x,…,x)`.
///
/// Midpoint rule on a grid aligned with the branch boundaries of `map`.
pub fn ei_sync_formula<F: Fn(f64) -> f64>(
    inputs: &TheoryInputs,
    map: &LocalMap,
    trace: F,
    cells: usize,
) -> Result<f64> {
    inputs.check()?;
    if cells == 0 {
        return Err(Error::InvalidParameter("quadrature needs at least one cell".into()));
    }
    let m = (inputs.n - 1) as f64;
    let ln_coupling = (1.0 - inputs.gamma).ln();
    let (mut num, mut den) = (0.0, 0.0);
    for (w, br) in map.boundaries().windows(2).zip(map.branches()) {
        let (a, b) = (w[0], w[1]);
        let k = (((b - a) * cells as f64).round() as usize).max(1);
        let h = (b - a) / k as f64;
        let weight = (-m * (br.slope.abs().ln() + ln_coupling)).exp();
        for i in 0..k {
            let hx = trace(a + (i as f64 + 0.5) * h);
            if !hx.is_finite() || hx < 0.0 {
                return Err(Error::Degenerate(format!("density trace value {hx}")));
            }
            den += hx * h;
            num += hx * h * weight;
        }
    }
    if !(den > 0.0) {
        return Err(Error::Degenerate("density trace integrates to zero".into()));
    }
    Ok((1.0 - num / den).clamp(0.0, 1.0))
}

/// `1 - (λ / (1-γ))^{n-1}`.
pub fn ei_sync_flat_asymptotic(n: usize, gamma: f64, lambda: f64) -> Result<f64> {
    check_basic(n, gamma, lambda)?;
    let ln_ratio = (n - 1) as f64 * (lambda.ln() - (1.0 - gamma).ln());
    Ok(-ln_ratio.exp_m1())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Q0Bound {
    pub value: f64,
    /// The bound says nothing when it exceeds one.
    pub exceeds_one: bool,
}

/// `λ^{n-1} sup ĥ / ((1-γ)^{n-1} inf ĥ)`, an upper bound on `q_0`.
pub fn ei_upper_bound_q0(inputs: &TheoryInputs) -> Result<Q0Bound> {
    inputs.check()?;
    let (sup_h, inf_h) = match (inputs.sup_h, inputs.inf_h) {
        (Some(s), Some(i)) if i > 0.0 && s >= i => (s, i),
        _ => {
            return Err(Error::InvalidParameter(
                "density bounds need 0 < inf_h <= sup_h".into(),
            ))
        }
    };
    let m = (inputs.n - 1) as f64;
    let value = (m * (inputs.lambda.ln() - (1.0 - inputs.gamma).ln())).exp() * sup_h / inf_h;
    Ok(Q0Bound {
        value,
        exceeds_one: value > 1.0,
    })
}

fn check_accuracy(a_c: f64) -> Result<()> {
    if !(a_c > 0.0 && a_c < 1.0) {
        return Err(Error::InvalidParameter(format!("accuracy {a_c} outside (0, 1)")));
    }
    Ok(())
}

fn check_theta(theta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidParameter(format!("theta {theta} outside [0, 1]")));
    }
    Ok(())
}

/// Probability of *not* having synchronized to accuracy `a_c` within `m`
/// iterations: `exp(-θ m a_c^{n-1})`.
pub fn first_sync_probability(m: f64, a_c: f64, n: usize, theta: f64) -> Result<f64> {
    check_accuracy(a_c)?;
    check_theta(theta)?;
    if !(m >= 0.0) || n < 2 {
        return Err(Error::InvalidParameter(format!("m = {m}, n = {n}")));
    }
    if m == 0.0 || theta == 0.0 {
        return Ok(1.0);
    }
    let ln_tau = m.ln() + (n - 1) as f64 * a_c.ln();
    Ok((-theta * ln_tau.exp()).exp())
}

/// Probability of having synchronized within `m` iterations.
pub fn sync_by_probability(m: f64, a_c: f64, n: usize, theta: f64) -> Result<f64> {
    Ok(1.0 - first_sync_probability(m, a_c, n, theta)?)
}

/// Probability of no visit to an `a_c`-neighbourhood of a point within `m`
/// iterations: `exp(-m a_c^n)`.
pub fn first_localization_probability(m: f64, a_c: f64, n: usize) -> Result<f64> {
    check_accuracy(a_c)?;
    if !(m >= 0.0) || n < 1 {
        return Err(Error::InvalidParameter(format!("m = {m}, n = {n}")));
    }
    if m == 0.0 {
        return Ok(1.0);
    }
    Ok((-(m.ln() + n as f64 * a_c.ln()).exp()).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncIterations {
    /// `log10` of the real-valued solution before rounding up.
    pub log10: f64,
    /// `⌈m⌉` when it is below `2^53`.
    pub exact: Option<u64>,
}

/// Smallest `m` with synchronization probability at least `p_target`.
pub fn iterations_for_sync(p_target: f64, a_c: f64, n: usize, theta: f64) -> Result<SyncIterations> {
    check_accuracy(a_c)?;
    check_theta(theta)?;
    if !(p_target > 0.0 && p_target < 1.0) || n < 2 {
        return Err(Error::InvalidParameter(format!("target {p_target}, n = {n}")));
    }
    if theta == 0.0 {
        return Err(Error::Degenerate("theta = 0 never synchronizes".into()));
    }
    let ln_m = (-(-p_target).ln_1p()).ln() - theta.ln() - (n - 1) as f64 * a_c.ln();
    let log10 = ln_m / std::f64::consts::LN_10;
    let exact = (ln_m < 53.0 * std::f64::consts::LN_2).then(|| ln_m.exp().ceil() as u64);
    Ok(SyncIterations { log10, exact })
}

/// `Leb(S_{m,γ}) / Leb(S_m) = (1-γ)^{1-n}`.
pub fn leb_ratio(n: usize, gamma: f64) -> Result<f64> {
    if n < 1 || !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!("n = {n}, gamma = {gamma}")));
    }
    Ok((-((n - 1) as f64) * (1.0 - gamma).ln()).exp())
}

/// `(2ν)^{n-1}`, an upper bound for the Lebesgue measure of the strip.
pub fn strip_measure_upper_bound(n: usize, nu: f64) -> Result<f64> {
    if n < 2 || !(nu > 0.0 && nu < 1.0) {
        return Err(Error::InvalidParameter(format!("n = {n}, nu = {nu}")));
    }
    Ok((2.0 * nu).powi(n as i32 - 1))
}

/// One row of the flat-density prediction table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryRow {
    pub n: usize,
    pub gamma: f64,
    pub theta_theory: f64,
    pub theta_asymptotic: f64,
    /// `q_0` bound with `sup ĥ = inf ĥ`.
    pub bound_q0: f64,
}

/// Flat-density predictions on an `(n, γ)` grid. Points violating
/// `γ < 1 - λ` are skipped.
pub fn theory_table(map: &LocalMap, ns: &[usize], gammas: &[f64]) -> Result<Vec<TheoryRow>> {
    let lambda = map.expansion_bound();
    let mut rows = Vec::new();
    for &n in ns {
        for &gamma in gammas {
            let inputs = TheoryInputs::new(n, gamma, lambda).with_density_bounds(1.0, 1.0);
            match inputs.check() {
                Err(Error::Hypothesis { .. }) => continue,
                other => other?,
            }
            rows.push(TheoryRow {
                n,
                gamma,
                theta_theory: ei_sync_formula(&inputs, map, |_| 1.0, DEFAULT_QUADRATURE_CELLS)?,
                theta_asymptotic: ei_sync_flat_asymptotic(n, gamma, lambda)?,
                bound_q0: ei_upper_bound_q0(&inputs)?.value,
            });
        }
    }
    Ok(rows)
}

pub fn theory_csv(rows: &[TheoryRow]) -> String {
    let mut out = String::from("n,gamma,theta_theory,theta_asymptotic,bound_q0\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.16e},{:.16e},{:.16e}\n",
            r.n, r.gamma, r.theta_theory, r.theta_asymptotic, r.bound_q0
        ));
    }
    out
}
