//! Figure presets. Each preset fixes the protocol of one figure at desk
//! scale (or full scale with `full_scale`) and emits plot-ready CSVs.

use std::fmt;
use std::str::FromStr;

use super::config::{ExperimentConfig, ObservableKind};
use super::output::{num, Csv, RunOutput};
use super::sweeps::{ei_sweep_rows, gev_sweep_rows, run_density, run_waiting_time_report};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FigureId {
    Dens1,
    Dens,
    D32,
    ClmT,
    Clm,
    ClmCsi,
    GlobalPoisson,
    LocalPoisson,
}

impl FigureId {
    pub const ALL: [FigureId; 8] = [
        FigureId::Dens1,
        FigureId::Dens,
        FigureId::D32,
        FigureId::ClmT,
        FigureId::Clm,
        FigureId::ClmCsi,
        FigureId::GlobalPoisson,
        FigureId::LocalPoisson,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FigureId::Dens1 => "dens1",
            FigureId::Dens => "dens",
            FigureId::D32 => "d32",
            FigureId::ClmT => "CLM_t",
            FigureId::Clm => "CLM",
            FigureId::ClmCsi => "CLM_csi",
            FigureId::GlobalPoisson => "global_Poisson",
            FigureId::LocalPoisson => "local_Poisson",
        }
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FigureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FigureId::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownFigure(s.to_string()))
    }
}

/// The `(n, γ)` protocol of the large-lattice figures.
fn lattice_grid(base: &ExperimentConfig, gamma_step: f64) -> ExperimentConfig {
    ExperimentConfig {
        n_range: Some([4, if base.full_scale { 52 } else { 22 }]),
        gamma_range: Some([0.0, 0.64, gamma_step]),
        realizations: 1,
        length: 10_000,
        quantile: 0.98,
        seed: base.seed,
        full_scale: base.full_scale,
        ..Default::default()
    }
}

fn prefixed(mut out: RunOutput, prefix: &str) -> RunOutput {
    for f in &mut out.files {
        f.name = format!("{prefix}_{}", f.name);
    }
    out
}

fn scale_note(out: &mut RunOutput, base: &ExperimentConfig, desk: &str) {
    if !base.full_scale {
        out.warnings.push(format!("desk scale: {desk}"));
    }
}

fn d32(base: &ExperimentConfig) -> Result<RunOutput> {
    let mut out = RunOutput::default();
    for n in [2usize, 3] {
        let cfg = ExperimentConfig {
            n: Some(n),
            gamma_range: Some([0.0, 0.64, 0.02]),
            realizations: 10,
            length: 10_000,
            seed: base.seed,
            ..Default::default()
        };
        let (rows, _) = ei_sweep_rows(&cfg)?;
        let mut header = vec!["gamma".to_string()];
        header.extend((0..cfg.realizations).map(|r| format!("theta_r{r}")));
        header.extend(["theta_mean".to_string(), "theta_theory".to_string()]);
        let mut csv = Csv::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
        for block in rows.chunks(cfg.realizations + 2) {
            let mut fields = vec![num(block[0].gamma)];
            fields.extend(block[..cfg.realizations].iter().map(|r| num(r.theta_suveges)));
            fields.push(num(block[cfg.realizations].theta_suveges));
            fields.push(num(block[0].theta_theory));
            csv.row(fields);
        }
        out.push(format!("d32_n{n}.csv"), csv.finish());
    }
    Ok(out)
}

fn clm_t(base: &ExperimentConfig) -> Result<RunOutput> {
    let cfg = lattice_grid(base, 0.02);
    let (rows, _) = ei_sweep_rows(&cfg)?;
    let mut grid = Csv::new(&["n", "gamma", "theta_suveges", "flag"]);
    let mut asym = Csv::new(&["n", "gamma", "theta_asymptotic"]);
    for r in rows.iter().filter(|r| !r.is_aggregate()) {
        grid.row([r.n.to_string(), num(r.gamma), num(r.theta_suveges), r.flag.clone().unwrap_or_default()]);
        asym.row([r.n.to_string(), num(r.gamma), num(r.theta_asymptotic)]);
    }
    let mut out = RunOutput::default();
    out.push("CLM_t_grid.csv", grid.finish());
    out.push("CLM_t_asymptotic.csv", asym.finish());
    scale_note(&mut out, base, "n in 4..=22 (full scale: 4..=52)");
    Ok(out)
}

fn observable_noise_grid(base: &ExperimentConfig) -> Vec<ExperimentConfig> {
    [ObservableKind::GlobalSync, ObservableKind::LocalSync]
        .into_iter()
        .map(|observable| ExperimentConfig {
            observable,
            epsilon: vec![0.0, 1e-4, 1e-2],
            ..lattice_grid(base, 0.04)
        })
        .collect()
}

fn clm(base: &ExperimentConfig) -> Result<RunOutput> {
    let mut csv = Csv::new(&["observable", "epsilon", "n", "gamma", "theta_suveges", "flag"]);
    for cfg in observable_noise_grid(base) {
        let (rows, _) = ei_sweep_rows(&cfg)?;
        for r in rows.iter().filter(|r| !r.is_aggregate()) {
            csv.row([
                cfg.observable.tag().to_string(),
                num(r.epsilon),
                r.n.to_string(),
                num(r.gamma),
                num(r.theta_suveges),
                r.flag.clone().unwrap_or_default(),
            ]);
        }
    }
    let mut out = RunOutput::default();
    out.push("CLM.csv", csv.finish());
    scale_note(&mut out, base, "n in 4..=22, gamma step 0.04");
    Ok(out)
}

fn clm_csi(base: &ExperimentConfig) -> Result<RunOutput> {
    let mut csv = Csv::new(&["observable", "epsilon", "n", "gamma", "xi_gpd", "flag"]);
    for cfg in observable_noise_grid(base) {
        for r in gev_sweep_rows(&cfg)? {
            csv.row([
                cfg.observable.tag().to_string(),
                num(r.epsilon),
                r.n.to_string(),
                num(r.gamma),
                num(r.xi_gpd),
                r.flag.clone().unwrap_or_default(),
            ]);
        }
    }
    let mut out = RunOutput::default();
    out.push("CLM_csi.csv", csv.finish());
    scale_note(&mut out, base, "n in 4..=22, gamma step 0.04");
    Ok(out)
}

fn poisson_figure(figure: FigureId, base: &ExperimentConfig, observable: ObservableKind, n: usize) -> Result<RunOutput> {
    let cfg = ExperimentConfig {
        observable,
        n: Some(n),
        gamma: Some(0.3),
        epsilon: vec![0.0, 1e-4, 1e-2],
        realizations: 1,
        length: 10_000,
        seed: base.seed,
        ..Default::default()
    };
    Ok(prefixed(run_waiting_time_report(&cfg)?, figure.as_str()))
}

fn density_figure(figure: FigureId, base: &ExperimentConfig, n: usize) -> Result<RunOutput> {
    let full_iterations = if n == 2 { 10_000_000 } else { 1_000_000 };
    let cfg = ExperimentConfig {
        n: Some(n),
        gamma_values: Some(vec![0.3, 0.5, 0.6]),
        realizations: if base.full_scale { 300 } else { 30 },
        iterations: if base.full_scale { full_iterations } else { 100_000 },
        seed: base.seed,
        ..Default::default()
    };
    let mut out = prefixed(run_density(&cfg)?, figure.as_str());
    scale_note(
        &mut out,
        base,
        &format!("30 realizations x 1e5 iterations (full scale: 300 x {full_iterations:e})"),
    );
    Ok(out)
}

/// Emits the data behind `figure`. Only `seed` and `full_scale` are taken
/// from `base`; everything else is fixed by the preset.
pub fn reproduce(figure: FigureId, base: &ExperimentConfig) -> Result<RunOutput> {
    Ok(match figure {
        FigureId::Dens1 => density_figure(figure, base, 2)?,
        FigureId::Dens => density_figure(figure, base, 3)?,
        FigureId::D32 => d32(base)?,
        FigureId::ClmT => clm_t(base)?,
        FigureId::Clm => clm(base)?,
        FigureId::ClmCsi => clm_csi(base)?,
        FigureId::GlobalPoisson => poisson_figure(figure, base, ObservableKind::GlobalSync, 3)?,
        FigureId::LocalPoisson => poisson_figure(figure, base, ObservableKind::LocalSync, 10)?,
    })
}
