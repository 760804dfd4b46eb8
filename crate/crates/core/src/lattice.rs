//! The globally coupled lattice
//!
//! ```text
//! T̂(x)_i = (1 - γ) T(x_i) + (γ / n) Σ_j T(x_j)
//! ```
//!
//! built from a piecewise-affine expanding circle map `T`, plus its noisy
//! variant and reproducible trajectory generation.

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Reduce to `[0, 1)`; an exact `1.0` produced by rounding maps to `0.0`.
#[inline]
pub fn wrap_unit(v: f64) -> f64 {
    let r = v.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Circle distance between two points of `[0, 1)`.
#[inline]
pub fn circle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    d.min(1.0 - d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineBranch {
    pub slope: f64,
    pub offset: f64,
}

/// A piecewise-affine expanding map of the circle.
///
/// Branch `i` covers `[boundaries[i], boundaries[i + 1])` and acts as
/// `x ↦ slope·x + offset (mod 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalMap {
    boundaries: Vec<f64>,
    branches: Vec<AffineBranch>,
}

impl LocalMap {
    pub fn new(boundaries: Vec<f64>, branches: Vec<AffineBranch>) -> Result<Self> {
        if boundaries.len() < 2 || branches.len() + 1 != boundaries.len() {
            return Err(Error::InvalidParameter(format!(
                "{} boundaries cannot delimit {} branches",
                boundaries.len(),
                branches.len()
            )));
        }
        if boundaries[0] != 0.0 || *boundaries.last().unwrap() != 1.0 {
            return Err(Error::InvalidParameter(
                "branch boundaries must start at 0 and end at 1".into(),
            ));
        }
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "branch boundaries must be strictly increasing".into(),
            ));
        }
        for b in &branches {
            if !(b.slope.is_finite() && b.offset.is_finite()) || b.slope.abs() <= 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "branch slope {} is not expanding",
                    b.slope
                )));
            }
        }
        Ok(Self {
            boundaries,
            branches,
        })
    }

    /// `x ↦ m·x mod 1`, with `m` full branches.
    pub fn multiplier(m: u32) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidParameter(format!(
                "multiplier {m} is not expanding"
            )));
        }
        let mf = f64::from(m);
        let boundaries = (0..=m)
            .map(|i| if i == m { 1.0 } else { f64::from(i) / mf })
            .collect();
        let branches = (0..m)
            .map(|i| AffineBranch {
                slope: mf,
                offset: -f64::from(i),
            })
            .collect();
        Self::new(boundaries, branches)
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn branches(&self) -> &[AffineBranch] {
        &self.branches
    }

    /// `λ = sup |T'|^{-1}`, strictly below one.
    pub fn expansion_bound(&self) -> f64 {
        let min_slope = self
            .branches
            .iter()
            .map(|b| b.slope.abs())
            .fold(f64::INFINITY, f64::min);
        1.0 / min_slope
    }

    /// True when every branch has the same absolute slope.
    pub fn has_constant_slope(&self) -> bool {
        let s = self.branches[0].slope.abs();
        self.branches.iter().all(|b| b.slope.abs() == s)
    }

    /// Branch containing `x`; boundary points belong to the branch on their right.
    #[inline]
    pub fn branch_index(&self, x: f64) -> usize {
        let interior = &self.boundaries[1..self.boundaries.len() - 1];
        interior.partition_point(|&b| b <= x)
    }

    #[inline]
    pub(crate) fn apply_unchecked(&self, x: f64) -> f64 {
        let b = &self.branches[self.branch_index(x)];
        wrap_unit(b.slope * x + b.offset)
    }

    pub fn apply(&self, x: f64) -> Result<f64> {
        check_unit(x)?;
        Ok(self.apply_unchecked(x))
    }

    /// `|T'(x)|` on the branch containing `x`.
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        self.branches[self.branch_index(x)].slope.abs()
    }

    /// Whether `x` is an interior boundary where either the circle value or
    /// the slope jumps.
    pub fn is_discontinuity(&self, x: f64) -> bool {
        let Some(i) = self.boundaries[1..self.boundaries.len() - 1]
            .iter()
            .position(|&b| b == x)
        else {
            return false;
        };
        let left = &self.branches[i];
        let right = &self.branches[i + 1];
        let left_limit = wrap_unit(left.slope * x + left.offset);
        let right_value = wrap_unit(right.slope * x + right.offset);
        left.slope != right.slope || circle_distance(left_limit, right_value) > 1e-12
    }
}

fn check_unit(x: f64) -> Result<()> {
    if (0.0..1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain { value: x })
    }
}

/// Local map, lattice size and coupling strength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub local_map: LocalMap,
    pub n: usize,
    pub gamma: f64,
}

impl MapSpec {
    pub fn new(local_map: LocalMap, n: usize, gamma: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "lattice size {n} must be at least 2"
            )));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidParameter(format!(
                "coupling {gamma} outside [0, 1)"
            )));
        }
        Ok(Self {
            local_map,
            n,
            gamma,
        })
    }

    /// The reference lattice built on `x ↦ 3x mod 1`.
    pub fn tripling(n: usize, gamma: f64) -> Result<Self> {
        Self::new(LocalMap::multiplier(3)?, n, gamma)
    }

    pub fn lambda(&self) -> f64 {
        self.local_map.expansion_bound()
    }

    /// `γ < 1 - λ`, the regime where the diagonal extremal-index formulas apply.
    pub fn satisfies_ei_hypothesis(&self) -> bool {
        self.gamma < 1.0 - self.lambda()
    }
}

/// A point of `[0, 1)^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LatticeState(Vec<f64>);

impl LatticeState {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        for &x in &components {
            check_unit(x)?;
        }
        Ok(Self(components))
    }

    pub fn diagonal(value: f64, n: usize) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Self {
        Self((0..n).map(|_| rng.random::<f64>()).collect())
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for LatticeState {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LatticeState> for Vec<f64> {
    fn from(s: LatticeState) -> Self {
        s.0
    }
}

/// One deterministic lattice step from `x` into `out`.
#[inline]
pub fn step_into(spec: &MapSpec, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(x.len(), out.len());
    let mut sum = 0.0;
    for (o, &xi) in out.iter_mut().zip(x) {
        *o = spec.local_map.apply_unchecked(xi);
        sum += *o;
    }
    let mean = sum / x.len() as f64;
    let keep = 1.0 - spec.gamma;
    let pull = spec.gamma * mean;
    for o in out.iter_mut() {
        let v = keep * *o + pull;
        *o = if v >= 1.0 { 0.0 } else { v };
    }
}

fn check_state(state: &LatticeState, spec: &MapSpec) -> Result<()> {
    if state.n() != spec.n {
        return Err(Error::InvalidParameter(format!(
            "state has {} components, lattice has {}",
            state.n(),
            spec.n
        )));
    }
    Ok(())
}

pub fn step(state: &LatticeState, spec: &MapSpec) -> Result<LatticeState> {
    check_state(state, spec)?;
    let mut out = vec![0.0; spec.n];
    step_into(spec, state.components(), &mut out);
    Ok(LatticeState(out))
}

/// Additive noise of intensity `ε`, `ω_i` i.i.d. uniform on `[-0.5, 0.5]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct NoiseSpec {
    pub epsilon: f64,
}

impl NoiseSpec {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise intensity {epsilon} must be finite and non-negative"
            )));
        }
        Ok(Self { epsilon })
    }

    pub fn none() -> Self {
        Self { epsilon: 0.0 }
    }

    pub fn is_deterministic(&self) -> bool {
        self.epsilon == 0.0
    }
}

/// Shift each component by `ε·ω_i` and reduce mod 1.
#[inline]
pub fn perturb_in_place(x: &mut [f64], epsilon: f64, omega: &[f64]) {
    for (xi, &w) in x.iter_mut().zip(omega) {
        *xi = wrap_unit(*xi + epsilon * w);
    }
}

#[inline]
fn perturb_from_rng(x: &mut [f64], epsilon: f64, rng: &mut ChaCha8Rng) {
    for xi in x.iter_mut() {
        let w = rng.random::<f64>() - 0.5;
        *xi = wrap_unit(*xi + epsilon * w);
    }
}

/// Deterministic step followed by the given noise vector.
pub fn step_with_noise(
    state: &LatticeState,
    spec: &MapSpec,
    noise: NoiseSpec,
    omega: &[f64],
) -> Result<LatticeState> {
    check_state(state, spec)?;
    if omega.len() != spec.n {
        return Err(Error::InvalidParameter("noise vector length mismatch".into()));
    }
    let mut out = vec![0.0; spec.n];
    step_into(spec, state.components(), &mut out);
    perturb_in_place(&mut out, noise.epsilon, omega);
    Ok(LatticeState(out))
}

/// Noisy step drawing `ω` from `rng`. With `ε = 0` no randomness is consumed.
pub fn step_noisy(
    state: &LatticeState,
    spec: &MapSpec,
    noise: NoiseSpec,
    rng: &mut ChaCha8Rng,
) -> Result<LatticeState> {
    check_state(state, spec)?;
    let mut out = vec![0.0; spec.n];
    step_into(spec, state.components(), &mut out);
    if !noise.is_deterministic() {
        perturb_from_rng(&mut out, noise.epsilon, rng);
    }
    Ok(LatticeState(out))
}

/// `|det DT̂(x)| = (1-γ)^{n-1} Π_k |T'(x_k)|`.
pub fn jacobian_det(state: &LatticeState, spec: &MapSpec) -> Result<f64> {
    check_state(state, spec)?;
    let mut prod = (1.0 - spec.gamma).powi(spec.n as i32 - 1);
    for (index, &x) in state.components().iter().enumerate() {
        if spec.local_map.is_discontinuity(x) {
            return Err(Error::OnBoundary { index, value: x });
        }
        prod *= spec.local_map.derivative(x);
    }
    Ok(prod)
}

fn check_coupling(n: usize, gamma: f64) -> Result<()> {
    if n < 2 || !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!(
            "coupling matrix needs n >= 2 and gamma in [0, 1), got n = {n}, gamma = {gamma}"
        )));
    }
    Ok(())
}

/// Row-major `C_γ = (1-γ) I + (γ/n) 𝟙𝟙ᵀ`.
pub fn coupling_matrix(n: usize, gamma: f64) -> Result<Vec<f64>> {
    check_coupling(n, gamma)?;
    let off = gamma / n as f64;
    Ok((0..n * n)
        .map(|k| if k / n == k % n { 1.0 - gamma + off } else { off })
        .collect())
}

/// `det C_γ = (1-γ)^{n-1}`.
pub fn coupling_det(n: usize, gamma: f64) -> Result<f64> {
    check_coupling(n, gamma)?;
    Ok((1.0 - gamma).powi(n as i32 - 1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    #[default]
    RandomUniform,
    Explicit(LatticeState),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub map: MapSpec,
    pub noise: NoiseSpec,
    pub length: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Realization index; selects an independent random stream under `seed`.
    pub stream: u64,
    pub initial: InitialState,
}

pub const DEFAULT_BURN_IN: usize = 1_000;

impl TrajectoryConfig {
    pub fn new(map: MapSpec, length: usize) -> Self {
        Self {
            map,
            noise: NoiseSpec::none(),
            length,
            burn_in: DEFAULT_BURN_IN,
            seed: 0,
            stream: 0,
            initial: InitialState::RandomUniform,
        }
    }

    pub fn with_noise(mut self, noise: NoiseSpec) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn with_seed(mut self, seed: u64, stream: u64) -> Self {
        self.seed = seed;
        self.stream = stream;
        self
    }

    pub fn with_initial(mut self, initial: LatticeState) -> Self {
        self.initial = InitialState::Explicit(initial);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::InvalidParameter("trajectory length must be positive".into()));
        }
        NoiseSpec::new(self.noise.epsilon)?;
        if let InitialState::Explicit(s) = &self.initial {
            check_state(s, &self.map)?;
        }
        Ok(())
    }

    /// Run the configured trajectory, handing each retained state to `visit`
    /// together with its index (0 is the first state after burn-in).
    pub fn for_each_state<F: FnMut(usize, &[f64])>(&self, mut visit: F) -> Result<()> {
        self.validate()?;
        let n = self.map.n;
        let mut rng = rng::stream(self.seed, self.stream);
        let mut x = match &self.initial {
            InitialState::RandomUniform => LatticeState::random(&mut rng, n).into_inner(),
            InitialState::Explicit(s) => s.components().to_vec(),
        };
        let mut next = vec![0.0; n];
        let total = self.burn_in + self.length;
        for t in 0..total {
            if t >= self.burn_in {
                visit(t - self.burn_in, &x);
            }
            if t + 1 == total {
                break;
            }
            step_into(&self.map, &x, &mut next);
            if !self.noise.is_deterministic() {
                perturb_from_rng(&mut next, self.noise.epsilon, &mut rng);
            }
            std::mem::swap(&mut x, &mut next);
        }
        Ok(())
    }
}

/// Row-major sequence of lattice states.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    n: usize,
    data: Vec<f64>,
}

impl Trajectory {
    pub fn from_states(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || data.len() % n != 0 {
            return Err(Error::InvalidParameter("ragged trajectory data".into()));
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.data[k * self.n..(k + 1) * self.n]
    }

    pub fn states(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.n)
    }

    /// CSV with header `step,x_1,...,x_n`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step");
        for i in 1..=self.n {
            let _ = write!(out, ",x_{i}");
        }
        out.push('\n');
        for (k, s) in self.states().enumerate() {
            let _ = write!(out, "{k}");
            for x in s {
                let _ = write!(out, ",{x:.16e}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn simulate(config: &TrajectoryConfig) -> Result<Trajectory> {
    let mut data = Vec::with_capacity(config.length * config.map.n);
    config.for_each_state(|_, x| data.extend_from_slice(x))?;
    Trajectory::from_states(config.map.n, data)
}
