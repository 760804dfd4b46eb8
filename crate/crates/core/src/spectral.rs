//! Ulam discretization of the transfer operator for `n = 2` and the
//! eigenvalue deficit of the operator with a hole around the diagonal.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evt::{EiEstimate, EiMethod};
use crate::lattice::{step_into, MapSpec};
use crate::rng;

pub const MAX_BINS: usize = 2_000;
/// Samples per axis within a cell; a multiple of 3 keeps the uncoupled
/// tripling operator exact.
pub const DEFAULT_SAMPLES_PER_AXIS: usize = 12;
pub const EIGEN_TOLERANCE: f64 = 1e-12;
pub const MAX_EIGEN_ITERATIONS: usize = 100_000;
const INVARIANT_RESIDUAL: f64 = 1e-10;

/// Row-stochastic Ulam matrix stored column-wise, so that `v ↦ vP` is a
/// gather over each column.
#[derive(Debug, Clone, PartialEq)]
pub struct UlamOperator {
    pub k: usize,
    pub samples_per_axis: usize,
    col_ptr: Vec<usize>,
    rows: Vec<u32>,
    values: Vec<f64>,
}

impl UlamOperator {
    pub fn cells(&self) -> usize {
        self.k * self.k
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn samples_per_cell(&self) -> usize {
        self.samples_per_axis * self.samples_per_axis
    }

    /// Centre of cell `c = i k + j`, with `i` along the first axis.
    pub fn centre(&self, c: usize) -> (f64, f64) {
        let h = 1.0 / self.k as f64;
        (((c / self.k) as f64 + 0.5) * h, ((c % self.k) as f64 + 0.5) * h)
    }

    /// `out = v P`.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().with_min_len(1024).for_each(|(j, o)| {
            let (a, b) = (self.col_ptr[j], self.col_ptr[j + 1]);
            *o = self.rows[a..b]
                .iter()
                .zip(&self.values[a..b])
                .map(|(&i, &p)| v[i as usize] * p)
                .sum();
        });
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cells()];
        for (&i, &p) in self.rows.iter().zip(&self.values) {
            sums[i as usize] += p;
        }
        sums
    }

    /// Entries `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out: Vec<(usize, usize, f64)> = (0..self.cells())
            .flat_map(|j| {
                (self.col_ptr[j]..self.col_ptr[j + 1])
                    .map(move |p| (self.rows[p] as usize, j, self.values[p]))
            })
            .collect();
        out.sort_unstable_by_key(|&(i, j, _)| (i, j));
        out
    }

    /// Sparse triplet CSV `row,col,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,col,value\n");
        for (i, j, v) in self.triplets() {
            out.push_str(&format!("{i},{j},{v:.16e}\n"));
        }
        out
    }
}

/// Builds the Ulam matrix of `T̂` on a `k × k` grid from jittered stratified
/// samples: each cell is split into `s × s` strata with one point per stratum.
pub fn build_ulam(spec: &MapSpec, k: usize, samples_per_axis: usize, seed: u64) -> Result<UlamOperator> {
    if spec.n != 2 {
        return Err(Error::InvalidParameter(format!(
            "Ulam discretization supports n = 2 only, got n = {}",
            spec.n
        )));
    }
    if k == 0 || samples_per_axis == 0 {
        return Err(Error::InvalidParameter("k and samples per axis must be positive".into()));
    }
    if k > MAX_BINS {
        return Err(Error::MemoryBudget(format!("k = {k} exceeds {MAX_BINS}")));
    }
    let cells = k * k;
    let s = samples_per_axis;
    let per_cell = (s * s) as f64;
    let kf = k as f64;
    let bin = |x: f64| ((x * kf) as usize).min(k - 1);

    let row_lists: Vec<Vec<(u32, u32)>> = (0..cells)
        .into_par_iter()
        .with_min_len(256)
        .map(|c| {
            let mut rng = rng::stream(seed, c as u64);
            let (ci, cj) = ((c / k) as f64, (c % k) as f64);
            let mut dest = Vec::with_capacity(s * s);
            let mut out = [0.0; 2];
            for a in 0..s {
                for b in 0..s {
                    // Jitter stays off the stratum edges so aligned images
                    // never round onto a neighbouring cell.
                    let ua = 0.05 + 0.9 * rng.random::<f64>();
                    let ub = 0.05 + 0.9 * rng.random::<f64>();
                    let x = [
                        (ci + (a as f64 + ua) / s as f64) / kf,
                        (cj + (b as f64 + ub) / s as f64) / kf,
                    ];
                    step_into(spec, &x, &mut out);
                    dest.push((bin(out[0]) * k + bin(out[1])) as u32);
                }
            }
            dest.sort_unstable();
            let mut row: Vec<(u32, u32)> = Vec::new();
            for d in dest {
                match row.last_mut() {
                    Some((j, n)) if *j == d => *n += 1,
                    _ => row.push((d, 1)),
                }
            }
            row
        })
        .collect();

    let mut col_ptr = vec![0usize; cells + 1];
    for row in &row_lists {
        for &(j, _) in row {
            col_ptr[j as usize + 1] += 1;
        }
    }
    for j in 0..cells {
        col_ptr[j + 1] += col_ptr[j];
    }
    let nnz = col_ptr[cells];
    let mut fill = col_ptr.clone();
    let mut rows = vec![0u32; nnz];
    let mut values = vec![0.0; nnz];
    for (i, row) in row_lists.iter().enumerate() {
        for &(j, n) in row {
            let p = &mut fill[j as usize];
            rows[*p] = i as u32;
            values[*p] = n as f64 / per_cell;
            *p += 1;
        }
    }
    Ok(UlamOperator {
        k,
        samples_per_axis: s,
        col_ptr,
        rows,
        values,
    })
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Leading left eigenvector as a probability vector over cells.
pub fn invariant_density_ulam(op: &UlamOperator) -> Result<Vec<f64>> {
    let start = vec![1.0 / op.cells() as f64; op.cells()];
    invariant_density_from(op, start)
}

pub fn invariant_density_from(op: &UlamOperator, start: Vec<f64>) -> Result<Vec<f64>> {
    if start.len() != op.cells() || start.iter().any(|&x| x < 0.0) || !(l1(&start) > 0.0) {
        return Err(Error::InvalidParameter("start vector must be nonnegative and nonzero".into()));
    }
    let mut v = start;
    let total = l1(&v);
    v.iter_mut().for_each(|x| *x /= total);
    let mut next = vec![0.0; v.len()];
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_EIGEN_ITERATIONS {
        op.apply(&v, &mut next);
        let total = l1(&next);
        next.iter_mut().for_each(|x| *x /= total);
        residual = v.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut v, &mut next);
        if residual < INVARIANT_RESIDUAL {
            return Ok(v);
        }
    }
    Err(Error::EigenNonConvergence {
        iterations: MAX_EIGEN_ITERATIONS,
        residual,
    })
}

/// Modulus of the second eigenvalue of the unperturbed operator, by power
/// iteration on zero-sum vectors (which `vP` preserves).
pub fn second_eigenvalue_modulus(op: &UlamOperator, seed: u64, iterations: usize) -> Result<f64> {
    let cells = op.cells();
    let mut rng = rng::stream(seed, u64::MAX);
    let mut v: Vec<f64> = (0..cells).map(|_| rng.random::<f64>() - 0.5).collect();
    let project = |v: &mut Vec<f64>| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter_mut().for_each(|x| *x -= mean);
        let norm = l1(v);
        v.iter_mut().for_each(|x| *x /= norm);
    };
    project(&mut v);
    let mut next = vec![0.0; cells];
    let warmup = iterations / 2;
    let mut log_sum = 0.0;
    for t in 0..iterations.max(2) {
        op.apply(&v, &mut next);
        let mean = next.iter().sum::<f64>() / cells as f64;
        next.iter_mut().for_each(|x| *x -= mean);
        let ratio = l1(&next);
        if !(ratio > 0.0) {
            return Ok(0.0);
        }
        if t >= warmup {
            log_sum += ratio.ln();
        }
        next.iter_mut().for_each(|x| *x /= ratio);
        std::mem::swap(&mut v, &mut next);
    }
    let counted = iterations.max(2) - warmup;
    Ok((log_sum / counted as f64).exp())
}

/// `P̃ v = (v 1_D) P`: mass on the hole cells is discarded before each step.
#[derive(Debug, Clone)]
pub struct PerturbedOperator<'a> {
    pub base: &'a UlamOperator,
    pub nu: f64,
    /// Cells whose centre satisfies `|c_1 - c_2| ≤ ν`.
    pub hole: Vec<bool>,
    /// Cells meeting the strip whose membership depends on the point chosen.
    pub boundary_cells: usize,
}

impl<'a> PerturbedOperator<'a> {
    pub fn new(base: &'a UlamOperator, nu: f64) -> Result<Self> {
        if !(nu >= 0.0) {
            return Err(Error::InvalidParameter(format!("nu = {nu} must be nonnegative")));
        }
        let h = 1.0 / base.k as f64;
        let mut boundary_cells = 0;
        let hole = (0..base.cells())
            .map(|c| {
                let (x, y) = base.centre(c);
                let d = (x - y).abs();
                let inside = d <= nu;
                let (lo, hi) = ((d - h).max(0.0), d + h);
                if lo <= nu && nu < hi {
                    boundary_cells += 1;
                }
                inside
            })
            .collect();
        Ok(Self {
            base,
            nu,
            hole,
            boundary_cells,
        })
    }

    /// Arbitrary hole given as a per-cell mask; `nu` is recorded as NaN.
    pub fn with_hole(base: &'a UlamOperator, hole: Vec<bool>) -> Result<Self> {
        if hole.len() != base.cells() {
            return Err(Error::InvalidParameter("hole mask has the wrong size".into()));
        }
        Ok(Self {
            base,
            nu: f64::NAN,
            hole,
            boundary_cells: 0,
        })
    }

    pub fn hole_size(&self) -> usize {
        self.hole.iter().filter(|&&h| h).count()
    }

    pub fn apply(&self, v: &[f64], scratch: &mut Vec<f64>, out: &mut [f64]) {
        scratch.clear();
        scratch.extend(v.iter().zip(&self.hole).map(|(&x, &h)| if h { 0.0 } else { x }));
        self.base.apply(scratch, out);
    }

    /// Invariant mass of the hole.
    pub fn strip_mass(&self, invariant: &[f64]) -> f64 {
        invariant.iter().zip(&self.hole).filter(|(_, &h)| h).map(|(x, _)| x).sum()
    }
}

/// Leading eigenvalue of `P̃` by power iteration, started from `start`.
pub fn perturbed_leading_eigenvalue(pert: &PerturbedOperator, start: &[f64]) -> Result<f64> {
    let cells = pert.base.cells();
    let holes = pert.hole_size();
    if holes == 0 {
        return Ok(1.0);
    }
    if holes == cells {
        return Ok(0.0);
    }
    let mut v: Vec<f64> = start.to_vec();
    let total = l1(&v);
    if !(total > 0.0) {
        return Err(Error::InvalidParameter("start vector has zero mass".into()));
    }
    v.iter_mut().for_each(|x| *x /= total);
    let mut next = vec![0.0; cells];
    let mut scratch = Vec::with_capacity(cells);
    let mut rho = f64::NAN;
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_EIGEN_ITERATIONS {
        pert.apply(&v, &mut scratch, &mut next);
        let r = l1(&next);
        if r == 0.0 {
            return Ok(0.0);
        }
        next.iter_mut().for_each(|x| *x /= r);
        residual = v.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum::<f64>();
        let converged = (r - rho).abs() < EIGEN_TOLERANCE && residual < 1e-9;
        rho = r;
        std::mem::swap(&mut v, &mut next);
        if converged {
            return Ok(rho);
        }
    }
    Err(Error::EigenNonConvergence {
        iterations: MAX_EIGEN_ITERATIONS,
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralRow {
    pub k: usize,
    pub nu: f64,
    pub rho: f64,
    pub mu_strip: f64,
    pub theta_hat: f64,
    pub hole_cells: usize,
    pub boundary_cells: usize,
}

/// `θ̂ = (1 - ρ) / μ(S_ν)` at a single `ν`.
pub fn spectral_row(op: &UlamOperator, invariant: &[f64], nu: f64) -> Result<SpectralRow> {
    let pert = PerturbedOperator::new(op, nu)?;
    let mu_strip = pert.strip_mass(invariant);
    if !(mu_strip > 0.0) {
        return Err(Error::Degenerate(format!("strip of width {nu} carries no invariant mass")));
    }
    let rho = perturbed_leading_eigenvalue(&pert, invariant)?;
    Ok(SpectralRow {
        k: op.k,
        nu,
        rho,
        mu_strip,
        theta_hat: (1.0 - rho) / mu_strip,
        hole_cells: pert.hole_size(),
        boundary_cells: pert.boundary_cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub rows: Vec<SpectralRow>,
    /// Least-squares line in `ν` evaluated at `ν = 0` (unclamped).
    pub theta_extrapolated: f64,
}

pub const DEFAULT_NU_LADDER: [f64; 3] = [0.04, 0.02, 0.01];

/// Evaluates the eigenvalue deficit on a ladder of strip widths and
/// extrapolates linearly to `ν = 0`.
pub fn spectral_ladder(op: &UlamOperator, invariant: &[f64], nus: &[f64]) -> Result<SpectralReport> {
    if nus.is_empty() {
        return Err(Error::InvalidParameter("empty nu ladder".into()));
    }
    let rows = nus
        .iter()
        .map(|&nu| spectral_row(op, invariant, nu))
        .collect::<Result<Vec<_>>>()?;
    let theta_extrapolated = if rows.len() == 1 {
        rows[0].theta_hat
    } else {
        let m = rows.len() as f64;
        let mx = rows.iter().map(|r| r.nu).sum::<f64>() / m;
        let my = rows.iter().map(|r| r.theta_hat).sum::<f64>() / m;
        let sxy: f64 = rows.iter().map(|r| (r.nu - mx) * (r.theta_hat - my)).sum();
        let sxx: f64 = rows.iter().map(|r| (r.nu - mx).powi(2)).sum();
        if sxx > 0.0 {
            my - sxy / sxx * mx
        } else {
            my
        }
    };
    Ok(SpectralReport {
        rows,
        theta_extrapolated,
    })
}

impl SpectralReport {
    pub fn to_estimate(&self) -> EiEstimate {
        let mut e = EiEstimate::new(self.theta_extrapolated, EiMethod::SpectralUlam);
        if !(0.0..=1.0).contains(&self.theta_extrapolated) {
            e.flag = Some(format!("raw extrapolation {} clamped", self.theta_extrapolated));
        }
        e
    }
}

/// Single-`ν` estimate; see [`spectral_ladder`] for the extrapolated value.
pub fn ei_spectral(op: &UlamOperator, invariant: &[f64], nu: f64) -> Result<EiEstimate> {
    let row = spectral_row(op, invariant, nu)?;
    let mut e = EiEstimate::new(row.theta_hat, EiMethod::SpectralUlam);
    if !(0.0..=1.0).contains(&row.theta_hat) {
        e.flag = Some(format!("raw estimate {} clamped", row.theta_hat));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tripling(gamma: f64, k: usize) -> UlamOperator {
        build_ulam(&MapSpec::tripling(2, gamma).unwrap(), k, DEFAULT_SAMPLES_PER_AXIS, 1).unwrap()
    }

    #[test]
    fn uncoupled_operator_is_exact() {
        let op = tripling(0.0, 30);
        let t = op.triplets();
        assert_eq!(t.len(), 9 * op.cells());
        assert!(t.iter().all(|&(_, _, v)| v == 1.0 / 9.0));
        let inv = invariant_density_ulam(&op).unwrap();
        let u = 1.0 / op.cells() as f64;
        assert!(inv.iter().all(|&p| (p - u).abs() < 1e-6 * u));
    }

    #[test]
    fn rows_are_stochastic() {
        let op = tripling(0.3, 45);
        assert!(op.row_sums().iter().all(|s| (s - 1.0).abs() < 1e-9));
        assert!(op.to_csv().starts_with("row,col,value\n"));
    }

    #[test]
    fn invariant_density_independent_of_start() {
        let op = tripling(0.3, 30);
        let a = invariant_density_ulam(&op).unwrap();
        let start: Vec<f64> = (0..op.cells()).map(|c| 1.0 + (c % 7) as f64).collect();
        let b = invariant_density_from(&op, start).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-8));
        let mut next = vec![0.0; a.len()];
        op.apply(&a, &mut next);
        assert!(a.iter().zip(&next).map(|(x, y)| (x - y).abs()).sum::<f64>() < 1e-9);
    }

    #[test]
    fn trivial_holes() {
        let op = tripling(0.1, 30);
        let inv = invariant_density_ulam(&op).unwrap();
        let none = PerturbedOperator::with_hole(&op, vec![false; op.cells()]).unwrap();
        assert_eq!(none.hole_size(), 0);
        assert_eq!(perturbed_leading_eigenvalue(&none, &inv).unwrap(), 1.0);
        let all = PerturbedOperator::new(&op, 1.0).unwrap();
        assert_eq!(perturbed_leading_eigenvalue(&all, &inv).unwrap(), 0.0);
    }

    #[test]
    fn larger_hole_lowers_rho() {
        let op = tripling(0.2, 60);
        let inv = invariant_density_ulam(&op).unwrap();
        let mut prev = 1.0;
        for nu in [0.02, 0.05, 0.1, 0.2] {
            let pert = PerturbedOperator::new(&op, nu).unwrap();
            let rho = perturbed_leading_eigenvalue(&pert, &inv).unwrap();
            assert!(rho > 0.0 && rho <= prev + 1e-12, "nu={nu} rho={rho}");
            prev = rho;
        }
    }

    #[test]
    fn uncoupled_deficit_tends_to_two_thirds() {
        let op = tripling(0.0, 300);
        let inv = invariant_density_ulam(&op).unwrap();
        let report = spectral_ladder(&op, &inv, &DEFAULT_NU_LADDER).unwrap();
        assert!((report.theta_extrapolated - 2.0 / 3.0).abs() < 0.05, "{report:?}");
        let est = report.to_estimate();
        assert_eq!(est.method, EiMethod::SpectralUlam);
    }

    #[test]
    fn second_eigenvalue_is_inside_unit_disk() {
        let op = tripling(0.3, 60);
        let l2 = second_eigenvalue_modulus(&op, 3, 400).unwrap();
        assert!(l2 < 1.0 - 1e-3, "lambda2 = {l2}");
    }

    #[test]
    fn rejects_unsupported_sizes() {
        let spec = MapSpec::tripling(3, 0.1).unwrap();
        assert!(build_ulam(&spec, 30, 3, 0).is_err());
        let spec = MapSpec::tripling(2, 0.1).unwrap();
        assert!(matches!(build_ulam(&spec, 3000, 3, 0), Err(Error::MemoryBudget(_))));
    }
}
