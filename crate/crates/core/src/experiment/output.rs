//! In-memory run outputs and the manifest that makes them reproducible.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFile {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunOutput {
    pub files: Vec<OutputFile>,
    pub warnings: Vec<String>,
}

impl RunOutput {
    pub fn push(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.push(OutputFile {
            name: name.into(),
            bytes: bytes.into(),
        });
    }

    pub fn extend(&mut self, other: RunOutput) {
        self.files.extend(other.files);
        self.warnings.extend(other.warnings);
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|f| f.name == name).map(|f| f.bytes.as_slice())
    }

    pub fn manifest(&self, command: &str, figure: Option<&str>, config: &ExperimentConfig) -> Manifest {
        let mut warnings = config.warnings();
        warnings.extend(self.warnings.iter().cloned());
        Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            figure: figure.map(str::to_string),
            config: config.clone(),
            outputs: self
                .files
                .iter()
                .map(|f| (f.name.clone(), hex::encode(Sha256::digest(&f.bytes))))
                .collect(),
            warnings,
        }
    }

    /// Writes every file and the manifest into `dir`.
    pub fn write_to(&self, dir: &Path, manifest: &Manifest) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for f in &self.files {
            std::fs::write(dir.join(&f.name), &f.bytes)?;
        }
        std::fs::write(dir.join(MANIFEST_NAME), manifest.to_json()?)?;
        Ok(())
    }
}

/// Everything needed to re-run an experiment and check its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub command: String,
    pub figure: Option<String>,
    pub config: ExperimentConfig,
    /// File name to SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

impl Manifest {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("manifest: {e}")))
    }

    /// Names of outputs whose hashes differ from `run`, plus missing ones.
    pub fn mismatches(&self, run: &RunOutput) -> Vec<String> {
        let fresh = run.manifest(&self.command, self.figure.as_deref(), &self.config).outputs;
        let mut bad: Vec<String> = self
            .outputs
            .iter()
            .filter(|(k, v)| fresh.get(*k) != Some(v))
            .map(|(k, _)| k.clone())
            .collect();
        bad.extend(fresh.keys().filter(|k| !self.outputs.contains_key(*k)).cloned());
        bad
    }
}

/// Shortest round-trip representation; `NaN`, `inf` and `-inf` literals.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v}")
    }
}

/// Simple CSV builder; fields never contain commas.
#[derive(Debug, Default)]
pub struct Csv {
    buf: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut buf = header.join(",");
        buf.push('\n');
        Self { buf }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut first = true;
        for f in fields {
            if !first {
                self.buf.push(',');
            }
            first = false;
            let _ = write!(self.buf, "{}", f.as_ref().replace(',', ";"));
        }
        self.buf.push('\n');
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

/// File-name fragment for a grid point, e.g. `n2_g0.30_e0`.
pub fn point_tag(n: usize, gamma: f64, epsilon: f64) -> String {
    let eps = if epsilon == 0.0 {
        "0".to_string()
    } else {
        format!("{epsilon:e}")
    };
    format!("n{n}_g{gamma:.2}_e{eps}")
}
