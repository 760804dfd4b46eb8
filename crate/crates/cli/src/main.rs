use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cml_extremes::experiment::{run, Command, ExperimentConfig, FigureId, Manifest};
use cml_extremes::Error;

/// Extreme-value experiments on coupled map lattices.
#[derive(Debug, Parser)]
#[command(name = "cml", version)]
struct Cli {
    /// TOML experiment config, or the manifest.json of an earlier run.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed; overrides the config.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "K")]
    threads: Option<usize>,

    /// Output directory [default: out/<command>].
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Trajectory and observable series for the first grid point.
    Simulate,
    /// Extremal-index estimates over the (n, gamma, epsilon) grid.
    EiSweep,
    /// GEV block-maxima and GPD exceedance fits over the grid.
    GevSweep,
    /// Waiting-time EPDFs and series excerpts.
    WaitingTimes,
    /// Strip-visit counts against Poisson and compound Poisson laws.
    CompoundPoisson,
    /// Invariant-density histograms and diagonal traces.
    Density,
    /// Ulam-operator estimates of the extremal index (n = 2).
    Spectral,
    /// Closed-form extremal indices and bounds.
    Theory,
    /// Data for one figure preset.
    Reproduce {
        /// One of dens1, dens, d32, CLM_t, CLM, CLM_csi, global_Poisson, local_Poisson.
        figure: String,
    },
}

enum Failure {
    Core(Error),
    Mismatch(Vec<String>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Core(e) if e.is_config() => 2,
            Failure::Core(Error::Io(_)) => 1,
            Failure::Core(_) | Failure::Mismatch(_) => 3,
        }
    }
}

fn command_of(sub: &Sub) -> Result<Command, Error> {
    Ok(match sub {
        Sub::Simulate => Command::Simulate,
        Sub::EiSweep => Command::EiSweep,
        Sub::GevSweep => Command::GevSweep,
        Sub::WaitingTimes => Command::WaitingTimes,
        Sub::CompoundPoisson => Command::CompoundPoisson,
        Sub::Density => Command::Density,
        Sub::Spectral => Command::Spectral,
        Sub::Theory => Command::Theory,
        Sub::Reproduce { figure } => Command::Reproduce(figure.parse::<FigureId>()?),
    })
}

/// A TOML config, or a manifest whose embedded config is reused.
fn load(path: &Path) -> Result<(ExperimentConfig, Option<Manifest>), Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    if text.trim_start().starts_with('{') {
        let manifest = Manifest::from_json(&text)
            .map_err(|e| Error::Config(format!("{} is not a valid manifest: {e}", path.display())))?;
        Ok((manifest.config.clone(), Some(manifest)))
    } else {
        Ok((ExperimentConfig::from_toml(&text)?, None))
    }
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(Error::Config("--threads must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let command = command_of(&cli.command)?;
    let (mut cfg, manifest) = match &cli.config {
        Some(path) => load(path)?,
        None => (ExperimentConfig::default(), None),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }

    let (out, fresh) = run(command, &cfg)?;
    for w in &fresh.warnings {
        eprintln!("warning: {w}");
    }
    let dir = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(command.name()));
    out.write_to(&dir, &fresh)?;
    println!("{}: wrote {} files to {}", command.name(), out.files.len() + 1, dir.display());

    // Re-running a manifest with the same command must reproduce its hashes.
    if let Some(m) = manifest {
        let same = m.command == fresh.command && m.figure == fresh.figure && m.config == fresh.config;
        if same {
            let bad = m.mismatches(&out);
            if !bad.is_empty() {
                return Err(Failure::Mismatch(bad));
            }
            println!("reproduced {} outputs byte-for-byte", m.outputs.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Core(e) => eprintln!("error: {e}"),
                Failure::Mismatch(names) => {
                    eprintln!("error: outputs differ from the manifest: {}", names.join(", "))
                }
            }
            ExitCode::from(f.exit_code())
        }
    }
}
