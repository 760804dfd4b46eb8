//! Experiment orchestration: sweeps, figure presets and run manifests.

mod config;
mod figures;
mod output;
mod sweeps;

pub use config::{float_range, ExperimentConfig, ObservableKind, GAMMA_WARNING};
pub use figures::{reproduce, FigureId};
pub use output::{num, point_tag, Csv, Manifest, OutputFile, RunOutput, MANIFEST_NAME};
pub use sweeps::{
    compound_poisson_check, ei_rows_csv, ei_sweep_rows, gev_sweep_rows, grid, mean_sd, run_compound_poisson_check,
    run_density, run_ei_sweep, run_gev_sweep, run_simulate, run_spectral, run_theory, run_waiting_time_report,
    spectral_point, theory_reference, trajectory_config, CompoundPoissonReport, EiRow, GevRow, GridPoint,
    SpectralPointReport, WaitingSummary, MIN_ENSEMBLE,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    EiSweep,
    GevSweep,
    WaitingTimes,
    CompoundPoisson,
    Density,
    Spectral,
    Theory,
    Reproduce(FigureId),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::EiSweep => "ei-sweep",
            Command::GevSweep => "gev-sweep",
            Command::WaitingTimes => "waiting-times",
            Command::CompoundPoisson => "compound-poisson",
            Command::Density => "density",
            Command::Spectral => "spectral",
            Command::Theory => "theory",
            Command::Reproduce(_) => "reproduce",
        }
    }

    pub fn figure(&self) -> Option<FigureId> {
        match self {
            Command::Reproduce(f) => Some(*f),
            _ => None,
        }
    }

    pub fn parse(name: &str, figure: Option<&str>) -> Result<Self> {
        Ok(match name {
            "simulate" => Command::Simulate,
            "ei-sweep" => Command::EiSweep,
            "gev-sweep" => Command::GevSweep,
            "waiting-times" => Command::WaitingTimes,
            "compound-poisson" => Command::CompoundPoisson,
            "density" => Command::Density,
            "spectral" => Command::Spectral,
            "theory" => Command::Theory,
            "reproduce" => Command::Reproduce(
                figure
                    .ok_or_else(|| Error::Config("reproduce needs a figure id".into()))?
                    .parse()?,
            ),
            other => return Err(Error::Config(format!("unknown command `{other}`"))),
        })
    }
}

/// Runs `command` and returns its outputs together with the manifest.
pub fn run(command: Command, config: &ExperimentConfig) -> Result<(RunOutput, Manifest)> {
    config.validate()?;
    let out = match command {
        Command::Simulate => run_simulate(config)?,
        Command::EiSweep => run_ei_sweep(config)?,
        Command::GevSweep => run_gev_sweep(config)?,
        Command::WaitingTimes => run_waiting_time_report(config)?,
        Command::CompoundPoisson => run_compound_poisson_check(config)?,
        Command::Density => run_density(config)?,
        Command::Spectral => run_spectral(config)?,
        Command::Theory => run_theory(config)?,
        Command::Reproduce(fig) => reproduce(fig, config)?,
    };
    let figure = command.figure().map(|f| f.as_str());
    let manifest = out.manifest(command.name(), figure, config);
    Ok((out, manifest))
}

/// Re-runs the experiment recorded in `manifest`.
pub fn rerun(manifest: &Manifest) -> Result<(RunOutput, Manifest)> {
    let command = Command::parse(&manifest.command, manifest.figure.as_deref())?;
    run(command, &manifest.config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_rerun_is_byte_identical() {
        let cfg = ExperimentConfig {
            gamma_values: Some(vec![0.2]),
            realizations: 2,
            length: 2_000,
            seed: 99,
            ..Default::default()
        };
        let (out, manifest) = run(Command::EiSweep, &cfg).unwrap();
        let back = Manifest::from_json(&manifest.to_json().unwrap()).unwrap();
        let (again, m2) = rerun(&back).unwrap();
        assert_eq!(out, again);
        assert_eq!(manifest, m2);
        assert!(back.mismatches(&again).is_empty());
    }

    #[test]
    fn command_names_round_trip() {
        for c in [
            Command::Simulate,
            Command::EiSweep,
            Command::GevSweep,
            Command::WaitingTimes,
            Command::CompoundPoisson,
            Command::Density,
            Command::Spectral,
            Command::Theory,
            Command::Reproduce(FigureId::Clm),
        ] {
            let fig = c.figure().map(|f| f.as_str());
            assert_eq!(Command::parse(c.name(), fig).unwrap(), c);
        }
        assert!(Command::parse("reproduce", None).is_err());
    }
}
