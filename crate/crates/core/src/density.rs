//! Histogram estimates of the invariant density and its diagonal trace.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{circle_distance, MapSpec, NoiseSpec, TrajectoryConfig, DEFAULT_BURN_IN};

/// Upper bound on the histogram storage of one estimate, all threads included.
pub const DEFAULT_MEMORY_BUDGET: usize = 1 << 30;

/// Default bins per axis: 300 for `n = 2`, 100 for `n = 3`.
pub fn default_bins(n: usize) -> usize {
    if n == 2 {
        300
    } else {
        100
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityConfig {
    pub map: MapSpec,
    pub noise: NoiseSpec,
    pub realizations: usize,
    pub iterations: usize,
    pub bins: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub memory_budget: usize,
}

impl DensityConfig {
    pub fn new(map: MapSpec, realizations: usize, iterations: usize, seed: u64) -> Self {
        let bins = default_bins(map.n);
        Self {
            map,
            noise: NoiseSpec::none(),
            realizations,
            iterations,
            bins,
            burn_in: DEFAULT_BURN_IN,
            seed,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }

    pub fn with_bins(mut self, bins: usize) -> Self {
        self.bins = bins;
        self
    }
}

/// Dense `bins^n` histogram on the unit cube, last axis fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityHistogram {
    pub n: usize,
    pub bins_per_axis: usize,
    pub counts: Vec<u64>,
    pub total_samples: u64,
}

impl DensityHistogram {
    pub fn empty(n: usize, bins: usize) -> Result<Self> {
        let cells = cell_count(n, bins)?;
        Ok(Self {
            n,
            bins_per_axis: bins,
            counts: vec![0; cells],
            total_samples: 0,
        })
    }

    pub fn from_counts(n: usize, bins: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != cell_count(n, bins)? {
            return Err(Error::InvalidParameter("count array has the wrong size".into()));
        }
        let total_samples = counts.iter().sum();
        Ok(Self {
            n,
            bins_per_axis: bins,
            counts,
            total_samples,
        })
    }

    #[inline]
    pub fn bin_of(&self, x: f64) -> usize {
        ((x * self.bins_per_axis as f64) as usize).min(self.bins_per_axis - 1)
    }

    #[inline]
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.bins_per_axis + i)
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.n];
        for slot in idx.iter_mut().rev() {
            *slot = flat % self.bins_per_axis;
            flat /= self.bins_per_axis;
        }
        idx
    }

    #[inline]
    pub fn record(&mut self, x: &[f64]) {
        let k = x.iter().fold(0, |acc, &v| acc * self.bins_per_axis + self.bin_of(v));
        self.counts[k] += 1;
        self.total_samples += 1;
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.n != other.n || self.bins_per_axis != other.bins_per_axis {
            return Err(Error::InvalidParameter("cannot merge histograms of different shape".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total_samples += other.total_samples;
        Ok(())
    }

    pub fn cell_volume(&self) -> f64 {
        (self.bins_per_axis as f64).powi(-(self.n as i32))
    }

    /// Normalized density per unit volume in each bin.
    pub fn densities(&self) -> Vec<f64> {
        let scale = 1.0 / (self.total_samples.max(1) as f64 * self.cell_volume());
        self.counts.iter().map(|&c| c as f64 * scale).collect()
    }

    /// Binomial standard error of each bin's density.
    pub fn standard_errors(&self) -> Vec<f64> {
        let total = self.total_samples.max(1) as f64;
        let vol = self.cell_volume();
        self.counts
            .iter()
            .map(|&c| {
                let p = c as f64 / total;
                (p * (1.0 - p) / total).sqrt() / vol
            })
            .collect()
    }

    /// Bin centre along one axis.
    pub fn centre(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.bins_per_axis as f64
    }

    /// CSV rows `bin_index_1,...,bin_index_n,density`.
    pub fn to_csv(&self) -> String {
        let mut out: String = (1..=self.n).map(|i| format!("bin_index_{i},")).collect();
        out.push_str("density\n");
        for (k, d) in self.densities().into_iter().enumerate() {
            for i in self.multi_index(k) {
                out.push_str(&format!("{i},"));
            }
            out.push_str(&format!("{d:.10e}\n"));
        }
        out
    }
}

fn cell_count(n: usize, bins: usize) -> Result<usize> {
    if !(2..=3).contains(&n) {
        return Err(Error::InvalidParameter(format!("density estimation needs n in {{2, 3}}, got {n}")));
    }
    if bins == 0 {
        return Err(Error::InvalidParameter("bins must be positive".into()));
    }
    bins.checked_pow(n as u32)
        .ok_or_else(|| Error::MemoryBudget(format!("{bins}^{n} cells overflow")))
}

/// Ensemble histogram of `realizations` independent orbits. Each realization
/// uses its own random stream, so the result does not depend on scheduling.
pub fn estimate_density(config: &DensityConfig) -> Result<DensityHistogram> {
    let cells = cell_count(config.map.n, config.bins)?;
    let copies = rayon::current_num_threads().min(config.realizations.max(1)) + 1;
    let bytes = cells
        .checked_mul(std::mem::size_of::<u64>() * copies)
        .unwrap_or(usize::MAX);
    if bytes > config.memory_budget {
        return Err(Error::MemoryBudget(format!(
            "{cells} cells x {copies} copies need {bytes} bytes, budget {}",
            config.memory_budget
        )));
    }
    if config.realizations == 0 || config.iterations == 0 {
        return Err(Error::InvalidParameter("need at least one realization and iteration".into()));
    }
    let (n, bins) = (config.map.n, config.bins);
    (0..config.realizations as u64)
        .into_par_iter()
        .try_fold(
            || DensityHistogram::empty(n, bins).expect("shape checked above"),
            |mut hist, r| {
                TrajectoryConfig::new(config.map.clone(), config.iterations)
                    .with_noise(config.noise)
                    .with_burn_in(config.burn_in)
                    .with_seed(config.seed, r)
                    .for_each_state(|_, x| hist.record(x))?;
                Ok::<_, Error>(hist)
            },
        )
        .try_reduce(
            || DensityHistogram::empty(n, bins).expect("shape checked above"),
            |mut a, b| {
                a.merge(&b)?;
                Ok(a)
            },
        )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalTrace {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub band_width: f64,
}

impl DiagonalTrace {
    /// Piecewise-constant interpolation on the uniform grid.
    pub fn eval(&self, x: f64) -> f64 {
        let k = ((x * self.grid.len() as f64) as usize).min(self.grid.len() - 1);
        self.values[k]
    }

    /// CSV `x,trace_value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,trace_value\n");
        for (x, v) in self.grid.iter().zip(&self.values) {
            out.push_str(&format!("{x:.10e},{v:.10e}\n"));
        }
        out
    }
}

/// Average density over the tube `max_i |x_i - x| ≤ ν` (distance on the
/// circle) around each diagonal bin centre.
pub fn diagonal_trace(hist: &DensityHistogram, band: f64) -> Result<DiagonalTrace> {
    let bins = hist.bins_per_axis;
    if band < 1.0 / bins as f64 - 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "band {band} narrower than one bin width {}",
            1.0 / bins as f64
        )));
    }
    let dens = hist.densities();
    let mut grid = Vec::with_capacity(bins);
    let mut values = Vec::with_capacity(bins);
    for k in 0..bins {
        let x = hist.centre(k);
        let axis: Vec<usize> = (0..bins)
            .filter(|&i| circle_distance(hist.centre(i), x) <= band + 1e-12)
            .collect();
        if axis.is_empty() {
            return Err(Error::Degenerate(format!("empty tube at x = {x}")));
        }
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut idx = vec![0usize; hist.n];
        loop {
            let flat = idx.iter().fold(0, |acc, &j| acc * bins + axis[j]);
            sum += dens[flat];
            count += 1;
            // Odometer over the tube's axis offsets.
            let mut d = hist.n;
            while d > 0 {
                d -= 1;
                idx[d] += 1;
                if idx[d] < axis.len() {
                    break;
                }
                idx[d] = 0;
            }
            if idx.iter().all(|&j| j == 0) {
                break;
            }
        }
        grid.push(x);
        values.push(sum / count as f64);
    }
    Ok(DiagonalTrace {
        grid,
        values,
        band_width: band,
    })
}

/// `max_x |trace_ν(x) - trace_{2ν}(x)| / ν` for the narrow band `ν`.
pub fn trace_oscillation(narrow: &DiagonalTrace, wide: &DiagonalTrace) -> Result<f64> {
    if narrow.grid.len() != wide.grid.len() || !(wide.band_width > narrow.band_width) {
        return Err(Error::InvalidParameter(
            "traces need a common grid and a wider second band".into(),
        ));
    }
    Ok(narrow
        .values
        .iter()
        .zip(&wide.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / narrow.band_width)
}
