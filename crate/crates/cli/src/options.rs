//! Shared flags, config loading and output envelopes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::ValueEnum;
use serde::Serialize;

use psc_core::engine::Scheme;
use psc_core::{RunConfig, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Collapsed,
    Augmented,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Collapsed => Scheme::Collapsed,
            SchemeArg::Augmented => Scheme::Augmented,
        }
    }
}

/// Flags that override fields of the run configuration.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct RunFlags {
    /// JSON run configuration; unknown keys are rejected.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Total sweeps per chain, burn-in included.
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burn: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    /// Stick-breaking truncation level.
    #[arg(long)]
    pub truncation: Option<usize>,
    /// Number of trajectory grid points.
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Monte-Carlo trajectories per unit and draw in the estimands.
    #[arg(long)]
    pub n_mc: Option<usize>,
}

impl RunFlags {
    /// The config file (or defaults) with every given flag applied on top.
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.iters {
            cfg.chain.n_iter = v;
        }
        if let Some(v) = self.burn {
            cfg.chain.n_burn = v;
        }
        if let Some(v) = self.thin {
            cfg.chain.thin = v;
        }
        if let Some(v) = self.seed {
            cfg.chain.seed = v;
            cfg.estimands.seed = v;
        }
        if let Some(v) = self.chains {
            cfg.chain.n_chains = v;
        }
        if let Some(v) = self.scheme {
            cfg.chain.scheme = v.into();
        }
        if let Some(v) = self.truncation {
            cfg.model.truncation = v;
        }
        if let Some(v) = self.grid_points {
            cfg.grid.points = v;
            cfg.grid.values = None;
        }
        if let Some(v) = self.n_mc {
            cfg.estimands.n_mc = v;
        }
        cfg.chain.validate()?;
        anyhow::ensure!(cfg.model.truncation >= 1, "truncation must be at least 1");
        Ok(cfg)
    }
}

/// A JSON output: schema version, artifact kind and the payload's fields.
#[derive(Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub schema_version: u32,
    pub kind: &'a str,
    #[serde(flatten)]
    pub body: T,
}

pub fn write_json_output<T: Serialize>(path: &Path, kind: &str, body: T) -> anyhow::Result<()> {
    let env = Envelope {
        schema_version: SCHEMA_VERSION,
        kind,
        body,
    };
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, &env)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

pub fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

