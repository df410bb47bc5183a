use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use psc_core::drawlog::{write_summary_csv, Dims, DrawLogWriter};
use psc_core::engine::{run_chain, ChainDiagnostics, PosteriorDraws};
use psc_core::io::load_dataset;
use psc_core::{Problem, PscError, RunConfig};

use crate::options::{create, ensure_dir, write_json_output, RunFlags};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Dataset CSV with columns y, s, t, x1..xp.
    #[arg(long)]
    pub data: PathBuf,
    /// Directory receiving the draw logs, `summary.csv` and `fit.json`.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub run: RunFlags,
}

#[derive(Serialize)]
struct ChainRecord {
    chain: usize,
    seed: u64,
    retained: usize,
    draw_log: String,
    diagnostics: ChainDiagnostics,
    /// Set when the chain stopped early; its log holds the draws kept so far.
    error: Option<String>,
}

#[derive(Serialize)]
struct FitRecord<'a> {
    config: &'a RunConfig,
    data: String,
    chains: Vec<ChainRecord>,
}

/// Loads the dataset under `cfg`'s grid and pins the resolved grid into
/// `cfg` so the echoed configuration reproduces the run.
pub fn load_problem(data: &Path, cfg: &mut RunConfig) -> anyhow::Result<Problem> {
    let dataset = load_dataset(data, &cfg.grid)?;
    let far = dataset.far_from_grid();
    if !far.is_empty() {
        log::warn!(
            "{} treatments lie more than one grid spacing from the nearest grid point (first: unit {})",
            far.len(),
            far[0] + 1
        );
    }
    cfg.grid.values = Some(dataset.grid.clone());
    Ok(Problem::from_config(dataset, &cfg.model)?)
}

pub fn write_draw_log(path: &Path, problem: &Problem, post: &PosteriorDraws, config_json: &str) -> anyhow::Result<()> {
    let mut w = DrawLogWriter::new(create(path)?, Dims::of(problem), post.chain as u64, post.seed, config_json)?;
    for d in &post.draws {
        w.write(d)?;
    }
    w.finish()?;
    Ok(())
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let mut cfg = args.run.resolve()?;
    let problem = load_problem(&args.data, &mut cfg)?;
    ensure_dir(&args.out_dir)?;
    let config_json = cfg.to_json();
    log::info!(
        "fitting n={} M={} with {} chain(s) of {} sweeps",
        problem.n(),
        problem.m(),
        cfg.chain.n_chains,
        cfg.chain.n_iter
    );
    let outcomes: Vec<(PosteriorDraws, Option<String>)> = (0..cfg.chain.n_chains)
        .into_par_iter()
        .map(|c| match run_chain(&problem, &cfg.chain, c) {
            Ok(post) => (post, None),
            Err(PscError::ChainAborted {
                iteration,
                source,
                partial,
            }) => (*partial, Some(format!("aborted at iteration {iteration}: {source}"))),
            Err(e) => (
                PosteriorDraws {
                    chain: c,
                    seed: cfg.chain.seed,
                    draws: Vec::new(),
                    diagnostics: ChainDiagnostics::default(),
                },
                Some(e.to_string()),
            ),
        })
        .collect();

    let mut records = Vec::new();
    for (post, error) in &outcomes {
        let name = format!("chain{}.psc", post.chain);
        write_draw_log(&args.out_dir.join(&name), &problem, post, &config_json)?;
        if let Some(e) = error {
            log::error!("chain {}: {e}; {} draws written to {name}", post.chain, post.len());
        }
        records.push(ChainRecord {
            chain: post.chain,
            seed: post.seed,
            retained: post.len(),
            draw_log: name,
            diagnostics: post.diagnostics.clone(),
            error: error.clone(),
        });
    }
    let chains: Vec<PosteriorDraws> = outcomes.iter().map(|(p, _)| p.clone()).collect();
    write_summary_csv(create(&args.out_dir.join("summary.csv"))?, &chains, &config_json)?;
    write_json_output(
        &args.out_dir.join("fit.json"),
        "fit",
        FitRecord {
            config: &cfg,
            data: args.data.display().to_string(),
            chains: records,
        },
    )?;
    let failed = outcomes.iter().filter(|(_, e)| e.is_some()).count();
    anyhow::ensure!(failed == 0, "{failed} chain(s) stopped early; partial draws were written");
    for (post, _) in &outcomes {
        log::info!(
            "chain {}: {} draws, rho acceptance {:.2}",
            post.chain,
            post.len(),
            post.diagnostics.rho_accept
        );
    }
    Ok(())
}
