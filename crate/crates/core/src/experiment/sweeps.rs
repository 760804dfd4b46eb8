//! Parameter sweeps over `(n, γ, ε)` grids. Every grid point draws its
//! streams from a seed derived from the master seed and the point's
//! coordinates, so results do not depend on scheduling or on which other
//! points are in the grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ObservableKind};
use super::output::{num, point_tag, Csv, RunOutput};
use crate::density::{default_bins, diagonal_trace, estimate_density, trace_oscillation, DensityConfig};
use crate::error::{Error, Result};
use crate::evt::{
    block_maxima, compound_poisson_pmf, count_visits_in, extract_clusters,
    fit_gev_mle_with_floor, fit_gpd_mle_with_floor, poisson_pmf, qk_from_membership,
    strip_membership, suveges_ei, total_variation, waiting_time_epdf, EstimateRecord,
};
use crate::lattice::{simulate, LocalMap, NoiseSpec, TrajectoryConfig};
use crate::observables::{threshold_from_quantile, ObservableSeries, ObservableSpec};
use crate::rng::derive_seed;
use crate::spectral::{build_ulam, invariant_density_ulam, second_eigenvalue_modulus, spectral_ladder};
use crate::theory::{
    ei_periodic_point, ei_sync_flat_asymptotic, ei_sync_formula, theory_csv, theory_table,
    TheoryInputs, DEFAULT_QUADRATURE_CELLS,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub n: usize,
    pub gamma: f64,
    pub epsilon: f64,
}

impl GridPoint {
    pub fn seed(&self, master: u64) -> u64 {
        derive_seed(master, &[self.n as u64, self.gamma.to_bits(), self.epsilon.to_bits()])
    }

    pub fn tag(&self) -> String {
        point_tag(self.n, self.gamma, self.epsilon)
    }
}

pub fn grid(cfg: &ExperimentConfig) -> Result<Vec<GridPoint>> {
    cfg.validate()?;
    let gammas = cfg.gammas()?;
    let mut out = Vec::new();
    for n in cfg.ns()? {
        for &gamma in &gammas {
            for &epsilon in &cfg.epsilon {
                out.push(GridPoint { n, gamma, epsilon });
            }
        }
    }
    Ok(out)
}

pub fn trajectory_config(cfg: &ExperimentConfig, p: &GridPoint, realization: usize) -> Result<TrajectoryConfig> {
    Ok(TrajectoryConfig::new(cfg.map_spec(p.n, p.gamma)?, cfg.length)
        .with_noise(NoiseSpec::new(p.epsilon)?)
        .with_burn_in(cfg.burn_in)
        .with_seed(p.seed(cfg.seed), realization as u64))
}

/// Deterministic flat-density reference for the configured observable:
/// the `n`-site formula for global synchronization, the two-site formula for
/// local synchronization, the periodic-point formula for localization at a
/// fixed point.
pub fn theory_reference(cfg: &ExperimentConfig, map: &LocalMap, n: usize, gamma: f64) -> (f64, f64) {
    let lambda = map.expansion_bound();
    let flat = |m: usize| {
        let th = ei_sync_formula(&TheoryInputs::new(m, gamma, lambda), map, |_| 1.0, DEFAULT_QUADRATURE_CELLS)
            .unwrap_or(f64::NAN);
        (th, ei_sync_flat_asymptotic(m, gamma, lambda).unwrap_or(f64::NAN))
    };
    match cfg.observable {
        ObservableKind::GlobalSync => flat(n),
        ObservableKind::LocalSync => flat(2),
        ObservableKind::Localization => {
            let th = match (cfg.observable_spec(n), cfg.map_spec(n, gamma)) {
                (Ok(ObservableSpec::Localization { target }), Ok(spec)) => {
                    ei_periodic_point(&[target], &spec).unwrap_or(f64::NAN)
                }
                _ => f64::NAN,
            };
            (th, f64::NAN)
        }
        ObservableKind::BlockSync => (f64::NAN, f64::NAN),
    }
}

/// Sample mean and standard deviation over the finite entries.
pub fn mean_sd(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let sd = if v.len() < 2 {
        f64::NAN
    } else {
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    };
    (m, sd)
}

fn join_flags(flags: Vec<String>) -> Option<String> {
    (!flags.is_empty()).then(|| flags.join("; "))
}

/// One realization of one grid point, or an aggregate over realizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EiRow {
    pub n: usize,
    pub gamma: f64,
    pub epsilon: f64,
    /// Realization index, `mean` or `sd`.
    pub label: String,
    pub theta_suveges: f64,
    pub theta_qk: f64,
    pub theta_theory: f64,
    pub theta_asymptotic: f64,
    pub xi_gpd: f64,
    pub exceedances: f64,
    pub flag: Option<String>,
}

impl EiRow {
    pub fn is_aggregate(&self) -> bool {
        self.label == "mean" || self.label == "sd"
    }
}

struct EiCell {
    row: EiRow,
    records: Vec<EstimateRecord>,
}

fn ei_realization(cfg: &ExperimentConfig, p: &GridPoint, r: usize, theory: (f64, f64)) -> EiCell {
    let mut row = EiRow {
        n: p.n,
        gamma: p.gamma,
        epsilon: p.epsilon,
        label: r.to_string(),
        theta_suveges: f64::NAN,
        theta_qk: f64::NAN,
        theta_theory: theory.0,
        theta_asymptotic: theory.1,
        xi_gpd: f64::NAN,
        exceedances: f64::NAN,
        flag: None,
    };
    let mut records = Vec::new();
    let mut flags = Vec::new();
    let series = cfg
        .observable_spec(p.n)
        .and_then(|spec| ObservableSeries::generate(&trajectory_config(cfg, p, r)?, &spec))
        .and_then(|s| threshold_from_quantile(&s.values, cfg.quantile).map(|u| (s, u)));
    let (series, u) = match series {
        Ok(v) => v,
        Err(e) => {
            row.flag = Some(e.to_string());
            return EiCell { row, records };
        }
    };
    let q = cfg.quantile;
    let stamp = |mut rec: EstimateRecord| {
        rec.n = Some(p.n);
        rec.gamma = Some(p.gamma);
        rec.epsilon = Some(p.epsilon);
        rec.quantile = Some(q);
        rec.seed = Some(cfg.seed);
        rec
    };
    let indicator = series.exceedances(u);
    row.exceedances = indicator.iter().filter(|&&b| b).count() as f64;

    let sv = suveges_ei(&indicator, q);
    row.theta_suveges = sv.theta;
    if let Some(f) = &sv.flag {
        flags.push(format!("suveges: {f}"));
    }
    records.push(stamp(EstimateRecord::from(&sv)));

    match qk_from_membership(&indicator, cfg.k_max, cfg.min_visits) {
        Ok(e) => {
            row.theta_qk = e.theta;
            records.push(stamp(EstimateRecord::from(&e.to_estimate())));
        }
        Err(e) => flags.push(format!("qk: {e}")),
    }

    let exceed: Vec<f64> = series.values.iter().copied().filter(|&v| v > u && v.is_finite()).collect();
    match fit_gpd_mle_with_floor(&exceed, u, cfg.min_exceedances) {
        Ok(fit) => {
            row.xi_gpd = fit.xi;
            records.push(stamp(EstimateRecord::from(&fit)));
        }
        Err(e) => flags.push(format!("gpd: {e}")),
    }
    row.flag = join_flags(flags);
    EiCell { row, records }
}

fn aggregate_rows(rows: &[EiRow]) -> [EiRow; 2] {
    let first = &rows[0];
    let stat = |f: fn(&EiRow) -> f64| mean_sd(rows.iter().map(f));
    let cols = [
        stat(|r| r.theta_suveges),
        stat(|r| r.theta_qk),
        stat(|r| r.xi_gpd),
        stat(|r| r.exceedances),
    ];
    let flagged = rows.iter().filter(|r| r.flag.is_some()).count();
    let flag = (flagged > 0).then(|| format!("{flagged} of {} realizations flagged", rows.len()));
    let make = |label: &str, pick: fn((f64, f64)) -> f64, theory: (f64, f64)| EiRow {
        n: first.n,
        gamma: first.gamma,
        epsilon: first.epsilon,
        label: label.into(),
        theta_suveges: pick(cols[0]),
        theta_qk: pick(cols[1]),
        theta_theory: theory.0,
        theta_asymptotic: theory.1,
        xi_gpd: pick(cols[2]),
        exceedances: pick(cols[3]),
        flag: flag.clone(),
    };
    [
        make("mean", |c| c.0, (first.theta_theory, first.theta_asymptotic)),
        make("sd", |c| c.1, (f64::NAN, f64::NAN)),
    ]
}

/// Per-realization rows for every grid point, each point followed by its
/// `mean` and `sd` rows. Estimator failures flag the row instead of aborting.
pub fn ei_sweep_rows(cfg: &ExperimentConfig) -> Result<(Vec<EiRow>, Vec<EstimateRecord>)> {
    let points = grid(cfg)?;
    let map = cfg.local_map()?;
    let theories: Vec<(f64, f64)> = points
        .iter()
        .map(|p| theory_reference(cfg, &map, p.n, p.gamma))
        .collect();
    let tasks: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|i| (0..cfg.realizations).map(move |r| (i, r)))
        .collect();
    let cells: Vec<EiCell> = tasks
        .par_iter()
        .map(|&(i, r)| ei_realization(cfg, &points[i], r, theories[i]))
        .collect();
    let mut rows = Vec::with_capacity(cells.len() + 2 * points.len());
    let mut records = Vec::new();
    for chunk in cells.chunks(cfg.realizations) {
        let point_rows: Vec<EiRow> = chunk.iter().map(|c| c.row.clone()).collect();
        let agg = aggregate_rows(&point_rows);
        rows.extend(point_rows);
        rows.extend(agg);
        records.extend(chunk.iter().flat_map(|c| c.records.iter().cloned()));
    }
    Ok((rows, records))
}

pub fn ei_rows_csv(rows: &[EiRow], observable: &str) -> String {
    let mut csv = Csv::new(&[
        "n",
        "gamma",
        "epsilon",
        "observable",
        "realization",
        "theta_suveges",
        "theta_qk",
        "theta_theory",
        "theta_asymptotic",
        "xi_gpd",
        "exceedances",
        "flag",
    ]);
    for r in rows {
        csv.row([
            r.n.to_string(),
            num(r.gamma),
            num(r.epsilon),
            observable.to_string(),
            r.label.clone(),
            num(r.theta_suveges),
            num(r.theta_qk),
            num(r.theta_theory),
            num(r.theta_asymptotic),
            num(r.xi_gpd),
            num(r.exceedances),
            r.flag.clone().unwrap_or_default(),
        ]);
    }
    csv.finish()
}

pub fn run_ei_sweep(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let (rows, records) = ei_sweep_rows(cfg)?;
    let mut out = RunOutput::default();
    out.push("ei_sweep.csv", ei_rows_csv(&rows, cfg.observable.tag()));
    out.push("ei_estimates.json", serde_json::to_string_pretty(&records)? + "\n");
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GevRow {
    pub n: usize,
    pub gamma: f64,
    pub epsilon: f64,
    pub realization: usize,
    pub xi_gev: f64,
    pub mu_gev: f64,
    pub sigma_gev: f64,
    pub xi_gpd: f64,
    pub sigma_gpd: f64,
    pub threshold: f64,
    pub flag: Option<String>,
}

fn gev_realization(cfg: &ExperimentConfig, p: &GridPoint, r: usize) -> GevRow {
    let mut row = GevRow {
        n: p.n,
        gamma: p.gamma,
        epsilon: p.epsilon,
        realization: r,
        xi_gev: f64::NAN,
        mu_gev: f64::NAN,
        sigma_gev: f64::NAN,
        xi_gpd: f64::NAN,
        sigma_gpd: f64::NAN,
        threshold: f64::NAN,
        flag: None,
    };
    let series = match cfg
        .observable_spec(p.n)
        .and_then(|spec| ObservableSeries::generate(&trajectory_config(cfg, p, r)?, &spec))
    {
        Ok(s) => s,
        Err(e) => {
            row.flag = Some(e.to_string());
            return row;
        }
    };
    let mut flags = Vec::new();
    match fit_gev_mle_with_floor(&block_maxima(&series.values, cfg.block_size), cfg.min_exceedances) {
        Ok(f) => {
            row.xi_gev = f.xi;
            row.mu_gev = f.mu;
            row.sigma_gev = f.sigma;
        }
        Err(e) => flags.push(format!("gev: {e}")),
    }
    match threshold_from_quantile(&series.values, cfg.quantile) {
        Ok(u) => {
            row.threshold = u;
            let exceed: Vec<f64> = series.values.iter().copied().filter(|&v| v > u && v.is_finite()).collect();
            match fit_gpd_mle_with_floor(&exceed, u, cfg.min_exceedances) {
                Ok(f) => {
                    row.xi_gpd = f.xi;
                    row.sigma_gpd = f.sigma;
                }
                Err(e) => flags.push(format!("gpd: {e}")),
            }
        }
        Err(e) => flags.push(format!("threshold: {e}")),
    }
    row.flag = join_flags(flags);
    row
}

pub fn gev_sweep_rows(cfg: &ExperimentConfig) -> Result<Vec<GevRow>> {
    let points = grid(cfg)?;
    let tasks: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|i| (0..cfg.realizations).map(move |r| (i, r)))
        .collect();
    Ok(tasks
        .par_iter()
        .map(|&(i, r)| gev_realization(cfg, &points[i], r))
        .collect())
}

pub fn run_gev_sweep(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let rows = gev_sweep_rows(cfg)?;
    let mut csv = Csv::new(&[
        "n", "gamma", "epsilon", "observable", "realization", "xi_gev", "mu_gev", "sigma_gev", "xi_gpd",
        "sigma_gpd", "threshold", "flag",
    ]);
    for r in &rows {
        csv.row([
            r.n.to_string(),
            num(r.gamma),
            num(r.epsilon),
            cfg.observable.tag().to_string(),
            r.realization.to_string(),
            num(r.xi_gev),
            num(r.mu_gev),
            num(r.sigma_gev),
            num(r.xi_gpd),
            num(r.sigma_gpd),
            num(r.threshold),
            r.flag.clone().unwrap_or_default(),
        ]);
    }
    let mut out = RunOutput::default();
    out.push("gev_sweep.csv", csv.finish());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaitingSummary {
    pub n: usize,
    pub gamma: f64,
    pub epsilon: f64,
    pub exceedances: usize,
    pub theta_suveges: f64,
    /// Empirical probability of a waiting time of one step.
    pub wait_one: f64,
    /// Same probability under a memoryless sequence at rate `1 - q`.
    pub wait_one_geometric: f64,
}

/// Pooled waiting-time histograms per grid point plus an excerpt of the
/// first realization's series with its exceedance marks.
pub fn run_waiting_time_report(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let points = grid(cfg)?;
    let q = cfg.quantile;
    let per_point: Vec<Result<(RunOutput, WaitingSummary)>> = points
        .par_iter()
        .map(|p| {
            let spec = cfg.observable_spec(p.n)?;
            let mut waits = Vec::new();
            let mut exceedances = 0;
            let mut thetas = Vec::new();
            let mut excerpt = String::new();
            for r in 0..cfg.realizations {
                let series = ObservableSeries::generate(&trajectory_config(cfg, p, r)?, &spec)?;
                let u = threshold_from_quantile(&series.values, q)?;
                let ind = series.exceedances(u);
                let stats = extract_clusters(&ind);
                exceedances += stats.exceedance_count;
                waits.extend(stats.waiting_times);
                thetas.push(suveges_ei(&ind, q).theta);
                if r == 0 {
                    let mut csv = Csv::new(&["step", "value", "exceedance", "threshold"]);
                    for (k, (&v, &e)) in series.values.iter().zip(&ind).take(cfg.excerpt).enumerate() {
                        csv.row([k.to_string(), num(v), (e as u8).to_string(), num(u)]);
                    }
                    excerpt = csv.finish();
                }
            }
            let pooled = crate::evt::ClusterStats {
                exceedance_count: exceedances,
                cluster_count: 0,
                cluster_sizes: vec![],
                waiting_times: waits,
            };
            let epdf = waiting_time_epdf(&pooled)?;
            let rate = 1.0 - q;
            let mut csv = Csv::new(&["waiting_time", "probability", "log10_probability", "geometric_reference"]);
            for (&w, &pr) in &epdf {
                let geo = rate * (1.0 - rate).powi(w as i32 - 1);
                csv.row([w.to_string(), num(pr), num(pr.log10()), num(geo)]);
            }
            let tag = p.tag();
            let mut out = RunOutput::default();
            out.push(format!("waiting_epdf_{tag}.csv"), csv.finish());
            out.push(format!("series_{tag}.csv"), excerpt);
            let summary = WaitingSummary {
                n: p.n,
                gamma: p.gamma,
                epsilon: p.epsilon,
                exceedances,
                theta_suveges: mean_sd(thetas).0,
                wait_one: epdf.get(&1).copied().unwrap_or(0.0),
                wait_one_geometric: rate,
            };
            Ok((out, summary))
        })
        .collect();
    let mut out = RunOutput::default();
    let mut csv = Csv::new(&[
        "n", "gamma", "epsilon", "exceedances", "theta_suveges", "wait_one", "wait_one_geometric",
    ]);
    for item in per_point {
        let (files, s) = item?;
        out.extend(files);
        csv.row([
            s.n.to_string(),
            num(s.gamma),
            num(s.epsilon),
            s.exceedances.to_string(),
            num(s.theta_suveges),
            num(s.wait_one),
            num(s.wait_one_geometric),
        ]);
    }
    out.push("waiting_summary.csv", csv.finish());
    Ok(out)
}

pub const MIN_ENSEMBLE: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompoundPoissonReport {
    pub n: usize,
    pub gamma: f64,
    pub epsilon: f64,
    pub t: f64,
    pub accuracy: f64,
    pub mu_strip: f64,
    pub theta_hat: f64,
    pub p: f64,
    pub horizon: usize,
    pub ensemble: usize,
    pub empirical: Vec<f64>,
    pub compound_poisson: Vec<f64>,
    pub poisson: Vec<f64>,
    pub tv_compound: f64,
    pub tv_poisson: f64,
}

impl CompoundPoissonReport {
    pub fn compound_closer(&self) -> bool {
        self.tv_compound < self.tv_poisson
    }
}

/// Calibrates `μ(S)` and `θ` on one long orbit, then compares the law of the
/// number of strip visits up to `⌊t/μ(S)⌋` over an ensemble of fresh orbits
/// with the compound and the pure Poisson laws.
pub fn compound_poisson_check(cfg: &ExperimentConfig, p: &GridPoint) -> Result<CompoundPoissonReport> {
    if cfg.ensemble < MIN_ENSEMBLE {
        return Err(Error::Insufficient(format!(
            "ensemble of {} orbits, at least {MIN_ENSEMBLE} required",
            cfg.ensemble
        )));
    }
    let base = trajectory_config(cfg, p, 0)?;
    let mut calibration = TrajectoryConfig {
        length: cfg.calibration_length,
        ..base.clone()
    };
    calibration.stream = u64::MAX;
    let mut membership = Vec::with_capacity(cfg.calibration_length);
    calibration.for_each_state(|_, x| membership.push(strip_membership(x, cfg.accuracy)))?;
    let hits = membership.iter().filter(|&&m| m).count();
    if hits == 0 {
        return Err(Error::Insufficient("calibration orbit never visits the strip".into()));
    }
    let mu_strip = hits as f64 / membership.len() as f64;
    let qk = qk_from_membership(&membership, 0, cfg.min_visits)?;
    let theta_hat = qk.theta;
    let horizon = (cfg.t / mu_strip).floor() as usize;
    if horizon == 0 {
        return Err(Error::Insufficient("rescaled horizon is zero".into()));
    }
    let counts: Vec<usize> = (0..cfg.ensemble)
        .into_par_iter()
        .map(|e| {
            let tc = TrajectoryConfig {
                length: horizon,
                stream: e as u64,
                ..base.clone()
            };
            let mut m = Vec::with_capacity(horizon);
            tc.for_each_state(|_, x| m.push(strip_membership(x, cfg.accuracy)))?;
            count_visits_in(&m, cfg.t, mu_strip)
        })
        .collect::<Result<_>>()?;
    let max_count = counts.iter().copied().max().unwrap_or(0);
    let support = max_count.max((cfg.t * 10.0) as usize + 60) + 1;
    let mut empirical = vec![0.0; support];
    for &c in &counts {
        empirical[c] += 1.0 / cfg.ensemble as f64;
    }
    let prob = 1.0 - theta_hat;
    let compound: Vec<f64> = (0..support as u64).map(|k| compound_poisson_pmf(cfg.t, prob, k)).collect();
    let poisson: Vec<f64> = (0..support as u64).map(|k| poisson_pmf(cfg.t, k)).collect();
    Ok(CompoundPoissonReport {
        n: p.n,
        gamma: p.gamma,
        epsilon: p.epsilon,
        t: cfg.t,
        accuracy: cfg.accuracy,
        mu_strip,
        theta_hat,
        p: prob,
        horizon,
        ensemble: cfg.ensemble,
        tv_compound: total_variation(&empirical, &compound),
        tv_poisson: total_variation(&empirical, &poisson),
        empirical,
        compound_poisson: compound,
        poisson,
    })
}

pub fn run_compound_poisson_check(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mut out = RunOutput::default();
    let mut summary = Csv::new(&[
        "n", "gamma", "epsilon", "t", "accuracy", "mu_strip", "theta_hat", "horizon", "ensemble", "tv_compound",
        "tv_poisson", "compound_closer",
    ]);
    let mut reports = Vec::new();
    for p in grid(cfg)? {
        let r = compound_poisson_check(cfg, &p)?;
        let mut csv = Csv::new(&["k", "empirical", "compound_poisson", "poisson"]);
        let last = r.empirical.iter().rposition(|&v| v > 0.0).unwrap_or(0);
        let shown = r
            .compound_poisson
            .iter()
            .rposition(|&v| v > 1e-12)
            .unwrap_or(0)
            .max(last);
        for k in 0..=shown {
            csv.row([k.to_string(), num(r.empirical[k]), num(r.compound_poisson[k]), num(r.poisson[k])]);
        }
        out.push(format!("visits_{}.csv", p.tag()), csv.finish());
        summary.row([
            r.n.to_string(),
            num(r.gamma),
            num(r.epsilon),
            num(r.t),
            num(r.accuracy),
            num(r.mu_strip),
            num(r.theta_hat),
            r.horizon.to_string(),
            r.ensemble.to_string(),
            num(r.tv_compound),
            num(r.tv_poisson),
            r.compound_closer().to_string(),
        ]);
        reports.push(r);
    }
    out.push("compound_poisson.csv", summary.finish());
    out.push("compound_poisson.json", serde_json::to_string_pretty(&reports)? + "\n");
    Ok(out)
}

pub fn run_density(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let map = cfg.local_map()?;
    let mut out = RunOutput::default();
    let mut summary = Csv::new(&[
        "n", "gamma", "epsilon", "bins", "band", "realizations", "iterations", "theta_trace", "theta_flat",
        "oscillation", "mean_standard_error",
    ]);
    for p in grid(cfg)? {
        let bins = cfg.bins.unwrap_or_else(|| default_bins(p.n));
        let mut dc = DensityConfig::new(cfg.map_spec(p.n, p.gamma)?, cfg.realizations, cfg.iterations, p.seed(cfg.seed))
            .with_bins(bins);
        dc.noise = NoiseSpec::new(p.epsilon)?;
        dc.burn_in = cfg.burn_in;
        let hist = estimate_density(&dc)?;
        let band = cfg.band.unwrap_or(2.0 / bins as f64);
        let narrow = diagonal_trace(&hist, band)?;
        let wide = diagonal_trace(&hist, 2.0 * band)?;
        let oscillation = trace_oscillation(&narrow, &wide)?;
        let inputs = TheoryInputs::new(p.n, p.gamma, map.expansion_bound());
        let theta_trace = ei_sync_formula(&inputs, &map, |x| narrow.eval(x), DEFAULT_QUADRATURE_CELLS)
            .unwrap_or(f64::NAN);
        let theta_flat = ei_sync_flat_asymptotic(p.n, p.gamma, map.expansion_bound()).unwrap_or(f64::NAN);
        let se = hist.standard_errors();
        let mean_se = se.iter().sum::<f64>() / se.len() as f64;
        let tag = p.tag();
        out.push(format!("density_{tag}.csv"), hist.to_csv());
        out.push(format!("trace_{tag}.csv"), narrow.to_csv());
        summary.row([
            p.n.to_string(),
            num(p.gamma),
            num(p.epsilon),
            bins.to_string(),
            num(band),
            cfg.realizations.to_string(),
            cfg.iterations.to_string(),
            num(theta_trace),
            num(theta_flat),
            num(oscillation),
            num(mean_se),
        ]);
    }
    out.push("density_summary.csv", summary.finish());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralPointReport {
    pub gamma: f64,
    pub k: usize,
    pub samples_per_cell: usize,
    pub rows: Vec<crate::spectral::SpectralRow>,
    pub theta_extrapolated: f64,
    pub theta_theory: f64,
    pub lambda2: f64,
}

pub fn spectral_point(cfg: &ExperimentConfig, gamma: f64) -> Result<(SpectralPointReport, Option<String>)> {
    let spec = cfg.map_spec(2, gamma)?;
    let seed = GridPoint { n: 2, gamma, epsilon: 0.0 }.seed(cfg.seed);
    let op = build_ulam(&spec, cfg.k, cfg.samples_per_axis, seed)?;
    let inv = invariant_density_ulam(&op)?;
    let ladder = spectral_ladder(&op, &inv, &cfg.nu)?;
    let lambda2 = if cfg.lambda2_iterations > 0 {
        second_eigenvalue_modulus(&op, seed, cfg.lambda2_iterations)?
    } else {
        f64::NAN
    };
    let map = cfg.local_map()?;
    let report = SpectralPointReport {
        gamma,
        k: cfg.k,
        samples_per_cell: op.samples_per_cell(),
        rows: ladder.rows,
        theta_extrapolated: ladder.theta_extrapolated,
        theta_theory: ei_sync_flat_asymptotic(2, gamma, map.expansion_bound()).unwrap_or(f64::NAN),
        lambda2,
    };
    Ok((report, cfg.export_operator.then(|| op.to_csv())))
}

pub fn run_spectral(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    if cfg.ns()? != [2] {
        return Err(Error::Config("the spectral computation supports n = 2 only".into()));
    }
    let mut out = RunOutput::default();
    let mut rows = Csv::new(&["gamma", "k", "nu", "rho", "mu_strip", "theta_hat", "hole_cells", "boundary_cells"]);
    let mut summary = Csv::new(&["gamma", "k", "theta_extrapolated", "theta_theory", "lambda2"]);
    for gamma in cfg.gammas()? {
        let (rep, operator) = spectral_point(cfg, gamma)?;
        for r in &rep.rows {
            rows.row([
                num(gamma),
                r.k.to_string(),
                num(r.nu),
                num(r.rho),
                num(r.mu_strip),
                num(r.theta_hat),
                r.hole_cells.to_string(),
                r.boundary_cells.to_string(),
            ]);
        }
        summary.row([
            num(gamma),
            rep.k.to_string(),
            num(rep.theta_extrapolated),
            num(rep.theta_theory),
            num(rep.lambda2),
        ]);
        let tag = format!("g{gamma:.2}");
        out.push(format!("spectral_{tag}.json"), serde_json::to_string_pretty(&rep)? + "\n");
        if let Some(csv) = operator {
            out.push(format!("operator_{tag}.csv"), csv);
        }
    }
    out.push("spectral.csv", rows.finish());
    out.push("spectral_summary.csv", summary.finish());
    Ok(out)
}

pub fn run_theory(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let rows = theory_table(&cfg.local_map()?, &cfg.ns()?, &cfg.gammas()?)?;
    let mut out = RunOutput::default();
    out.push("theory.csv", theory_csv(&rows));
    Ok(out)
}

/// One trajectory (the first grid point, realization 0) with its observable.
pub fn run_simulate(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let points = grid(cfg)?;
    let p = points[0];
    let tc = trajectory_config(cfg, &p, 0)?;
    let traj = simulate(&tc)?;
    let series = ObservableSeries::from_trajectory(&traj, &cfg.observable_spec(p.n)?)?;
    let mut out = RunOutput::default();
    if points.len() > 1 {
        out.warnings.push(format!("simulate uses only the first grid point ({})", p.tag()));
    }
    out.push("trajectory.csv", traj.to_csv());
    out.push("observable.csv", series.to_csv());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            gamma_values: Some(vec![0.1, 0.3]),
            realizations: 3,
            length: 3_000,
            ..Default::default()
        }
    }

    #[test]
    fn aggregates_match_realizations() {
        let (rows, records) = ei_sweep_rows(&small()).unwrap();
        assert_eq!(rows.len(), 2 * 5);
        let block = &rows[..5];
        let (m, sd) = mean_sd(block[..3].iter().map(|r| r.theta_suveges));
        assert_eq!(block[3].theta_suveges, m);
        assert_eq!(block[4].theta_suveges, sd);
        assert!(records.iter().any(|r| r.method == "suveges"));
    }

    #[test]
    fn sweep_is_deterministic_and_point_local() {
        let a = run_ei_sweep(&small()).unwrap();
        let b = run_ei_sweep(&small()).unwrap();
        assert_eq!(a, b);
        let single = ExperimentConfig {
            gamma: Some(0.3),
            gamma_values: None,
            ..small()
        };
        let (all, _) = ei_sweep_rows(&small()).unwrap();
        let (one, _) = ei_sweep_rows(&single).unwrap();
        // NaN columns make direct comparison useless; compare the rendering.
        assert_eq!(ei_rows_csv(&all[5..], "g"), ei_rows_csv(&one, "g"));
    }

    #[test]
    fn failures_flag_rows() {
        let cfg = ExperimentConfig {
            length: 200,
            ..small()
        };
        let (rows, _) = ei_sweep_rows(&cfg).unwrap();
        assert!(rows.iter().all(|r| r.flag.is_some()));
        assert!(rows.iter().filter(|r| !r.is_aggregate()).all(|r| r.theta_suveges.is_finite()));
    }

    #[test]
    fn small_runs_produce_expected_files() {
        let cfg = small();
        assert!(run_gev_sweep(&cfg).unwrap().get("gev_sweep.csv").is_some());
        let w = run_waiting_time_report(&cfg).unwrap();
        assert!(w.get("waiting_summary.csv").is_some());
        assert!(w.get("waiting_epdf_n2_g0.10_e0.csv").is_some());
        let t = run_theory(&cfg).unwrap();
        assert_eq!(std::str::from_utf8(t.get("theory.csv").unwrap()).unwrap().lines().count(), 3);
        let s = run_simulate(&cfg).unwrap();
        assert_eq!(s.warnings.len(), 1);
        let csv = std::str::from_utf8(s.get("trajectory.csv").unwrap()).unwrap();
        assert_eq!(csv.lines().count(), 3_001);
    }

    #[test]
    fn compound_poisson_runs() {
        let cfg = ExperimentConfig {
            gamma: Some(0.3),
            gamma_values: None,
            ensemble: 200,
            calibration_length: 50_000,
            ..small()
        };
        let out = run_compound_poisson_check(&cfg).unwrap();
        let reports: Vec<CompoundPoissonReport> =
            serde_json::from_slice(out.get("compound_poisson.json").unwrap()).unwrap();
        let r = &reports[0];
        assert!((r.empirical.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(r.horizon > 0 && r.theta_hat > 0.0 && r.theta_hat < 1.0);
        let tiny = ExperimentConfig { ensemble: 10, ..cfg };
        assert!(matches!(run_compound_poisson_check(&tiny), Err(Error::Insufficient(_))));
    }

    #[test]
    fn density_and_spectral_small() {
        let cfg = ExperimentConfig {
            gamma: Some(0.3),
            gamma_values: None,
            realizations: 2,
            iterations: 20_000,
            bins: Some(30),
            k: 60,
            samples_per_axis: 3,
            lambda2_iterations: 50,
            export_operator: true,
            ..small()
        };
        let d = run_density(&cfg).unwrap();
        assert!(d.get("density_n2_g0.30_e0.csv").is_some());
        assert!(d.get("trace_n2_g0.30_e0.csv").is_some());
        let s = run_spectral(&cfg).unwrap();
        assert!(s.get("spectral_g0.30.json").is_some());
        assert!(s.get("operator_g0.30.csv").is_some());
        let bad = ExperimentConfig { n: Some(3), ..cfg };
        assert!(run_spectral(&bad).unwrap_err().is_config());
    }
}
