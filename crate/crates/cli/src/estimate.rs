use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use psc_core::drawlog::{Dims, DrawLogReader};
use psc_core::estimands::{effects, pce_curve, EffectSummary};
use psc_core::io::write_curve_csv;
use psc_core::{Draw, EffectSpec, RunConfig, StratumSpec};

use crate::fit::load_problem;
use crate::options::{create, ensure_dir, write_json_output};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// The dataset the draw logs were fitted to.
    #[arg(long)]
    pub data: PathBuf,
    /// Draw logs written by `fit`; draws from all of them are pooled.
    #[arg(long, required = true, num_args = 1..)]
    pub draws: Vec<PathBuf>,
    /// JSON estimand specification.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Treatment values for the curves, overriding the spec.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub t: Option<Vec<f64>>,
    #[arg(long)]
    pub n_mc: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sample trajectories from the whole mixture instead of each unit's cluster.
    #[arg(long)]
    pub mixture: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    pub label: String,
    pub stratum: StratumSpec,
}

/// What to compute. A missing bound in a stratum is infinite.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateSpec {
    /// Treatment values for the curves; the fitted grid when absent.
    pub t: Option<Vec<f64>>,
    pub curves: Vec<CurveSpec>,
    pub effects: Vec<EffectSpec>,
}

#[derive(Serialize)]
struct EstimateRecord<'a> {
    config: &'a RunConfig,
    spec: &'a EstimateSpec,
    draws: usize,
    curves: Vec<CurveRecord>,
    effects: Vec<EffectRecord>,
}

#[derive(Serialize)]
struct CurveRecord {
    label: String,
    file: String,
    avg_stratum_fraction: f64,
    missing_draws: usize,
    failed_units: usize,
}

#[derive(Serialize)]
struct EffectRecord {
    label: String,
    mean: f64,
    sd: f64,
    lo95: f64,
    hi95: f64,
    missing_draws: usize,
}

impl From<EffectSummary> for EffectRecord {
    fn from(e: EffectSummary) -> Self {
        Self {
            label: e.label,
            mean: e.mean,
            sd: e.sd,
            lo95: e.lo95,
            hi95: e.hi95,
            missing_draws: e.missing_draws,
        }
    }
}

fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

/// Draws pooled over the logs and the configuration they share.
fn read_logs(paths: &[PathBuf]) -> anyhow::Result<(RunConfig, Dims, Vec<Draw>)> {
    let mut shared: Option<(String, Dims)> = None;
    let mut draws = Vec::new();
    for path in paths {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let mut reader = DrawLogReader::new(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
        let h = reader.header().clone();
        match &shared {
            None => shared = Some((h.config_json.clone(), h.dims)),
            Some((cfg, dims)) => anyhow::ensure!(
                *cfg == h.config_json && *dims == h.dims,
                "{} was written by a different run than {}",
                path.display(),
                paths[0].display()
            ),
        }
        draws.extend(reader.read_all().with_context(|| format!("reading {}", path.display()))?);
    }
    let (json, dims) = shared.context("no draw logs given")?;
    Ok((RunConfig::from_json(&json)?, dims, draws))
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let mut spec: EstimateSpec = {
        let text = std::fs::read_to_string(&args.spec).with_context(|| format!("reading {}", args.spec.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", args.spec.display()))?
    };
    anyhow::ensure!(
        !spec.curves.is_empty() || !spec.effects.is_empty(),
        "the spec lists no curves and no effects"
    );
    let (mut cfg, dims, draws) = read_logs(&args.draws)?;
    anyhow::ensure!(!draws.is_empty(), "the draw logs hold no draws");
    if let Some(v) = args.n_mc {
        cfg.estimands.n_mc = v;
    }
    if let Some(v) = args.seed {
        cfg.estimands.seed = v;
    }
    cfg.estimands.mixture |= args.mixture;
    let problem = load_problem(&args.data, &mut cfg)?;
    anyhow::ensure!(
        Dims::of(&problem) == dims,
        "dataset {} does not match the draw logs' dimensions",
        args.data.display()
    );
    if let Some(t) = args.t {
        spec.t = Some(t);
    }
    let t_query = spec.t.clone().unwrap_or_else(|| problem.data.grid.clone());
    ensure_dir(&args.out_dir)?;
    let echo = serde_json::to_string(&serde_json::json!({ "run": &cfg, "spec": &spec }))?;

    let mut curves = Vec::new();
    for c in &spec.curves {
        let curve = pce_curve(&problem, &draws, &c.stratum, &t_query, &cfg.estimands)
            .with_context(|| format!("curve {:?}", c.label))?;
        let file = format!("curve_{}.csv", file_stem(&c.label));
        write_curve_csv(create(&args.out_dir.join(&file))?, &curve, Some(&echo))?;
        if curve.missing_draws > 0 || curve.failed_units > 0 {
            log::warn!(
                "curve {:?}: {} draws with an empty stratum, {} unit draws without an accepted trajectory",
                c.label,
                curve.missing_draws,
                curve.failed_units
            );
        }
        curves.push(CurveRecord {
            label: c.label.clone(),
            file,
            avg_stratum_fraction: curve.avg_stratum_fraction,
            missing_draws: curve.missing_draws,
            failed_units: curve.failed_units,
        });
    }
    let effect_rows: Vec<EffectRecord> = if spec.effects.is_empty() {
        Vec::new()
    } else {
        effects(&problem, &draws, &spec.effects, &cfg.estimands)?
            .into_iter()
            .map(EffectRecord::from)
            .collect()
    };
    write_json_output(
        &args.out_dir.join("estimates.json"),
        "estimates",
        EstimateRecord {
            config: &cfg,
            spec: &spec,
            draws: draws.len(),
            curves,
            effects: effect_rows,
        },
    )?;
    log::info!("estimands from {} draws written to {}", draws.len(), args.out_dir.display());
    Ok(())
}
