use std::path::PathBuf;

use anyhow::Context;
use serde::Serialize;

use psc_core::io::write_comment_header;
use psc_core::simgen::Scenario;
use psc_core::study::{run_cell, BiasRow, CellReport, Study, StudyFit};

use crate::options::{create, ensure_dir, write_json_output};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// main (n = 500), large (n = 1000) or misspecified (quadratic β truth).
    #[arg(long)]
    pub study: Study,
    #[arg(long, default_value_t = 50)]
    pub reps: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Cell k uses replicate seeds `seed + 1000 k + r`.
    #[arg(long, default_value_t = 10_000)]
    pub seed: u64,
    /// Variance of the simulated mediator process.
    #[arg(long, default_value_t = 1.0)]
    pub sigma_s2: f64,
    /// Population units behind each true effect.
    #[arg(long, default_value_t = 1_000_000)]
    pub oracle_pop: usize,
    /// JSON fit settings (model, chain, estimands, max_estimand_draws).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burn: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub n_mc: Option<usize>,
    /// Estimands use at most this many retained draws.
    #[arg(long)]
    pub max_draws: Option<usize>,
}

impl Args {
    fn fit(&self) -> anyhow::Result<StudyFit> {
        let mut fit: StudyFit = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => StudyFit::default(),
        };
        if let Some(v) = self.iters {
            fit.chain.n_iter = v;
        }
        if let Some(v) = self.burn {
            fit.chain.n_burn = v;
        }
        if let Some(v) = self.thin {
            fit.chain.thin = v;
        }
        if let Some(v) = self.n_mc {
            fit.estimands.n_mc = v;
        }
        if let Some(v) = self.max_draws {
            fit.max_estimand_draws = v;
        }
        fit.chain.validate()?;
        Ok(fit)
    }
}

#[derive(Serialize)]
struct StudyRecord<'a> {
    study: Study,
    fit: &'a StudyFit,
    base: &'a Scenario,
    reps: usize,
    seed: u64,
    oracle_pop: usize,
    cells: &'a [CellReport],
}

fn write_bias_csv(path: &std::path::Path, rows: &[&BiasRow], echo: &str) -> anyhow::Result<()> {
    let mut w = create(path)?;
    write_comment_header(&mut w, "bias", Some(echo))?;
    let mut out = csv::Writer::from_writer(&mut w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let fit = args.fit()?;
    anyhow::ensure!(args.reps > 0, "reps must be at least 1");
    let base = Scenario {
        sigma_s2: args.sigma_s2,
        ..Scenario::default()
    };
    base.validate()?;
    ensure_dir(&args.out_dir)?;
    let name = format!("{:?}", args.study).to_lowercase();
    let echo = serde_json::to_string(&serde_json::json!({ "study": args.study, "fit": &fit, "base": &base }))?;
    let cells = args.study.cells(&base);
    let mut reports: Vec<CellReport> = Vec::with_capacity(cells.len());
    for (k, cell) in cells.iter().enumerate() {
        log::info!(
            "cell {}/{}: rho*={} c={} n={}",
            k + 1,
            cells.len(),
            cell.rho_star,
            cell.c,
            cell.n
        );
        reports.push(run_cell(cell, args.reps, args.seed + 1000 * k as u64, &fit, args.oracle_pop)?);
        // Rewritten after every cell so an interrupted study keeps its results.
        write_json_output(
            &args.out_dir.join(format!("{name}.json")),
            "replicate",
            StudyRecord {
                study: args.study,
                fit: &fit,
                base: &base,
                reps: args.reps,
                seed: args.seed,
                oracle_pop: args.oracle_pop,
                cells: &reports,
            },
        )?;
        let rows: Vec<&BiasRow> = reports.iter().flat_map(|r| &r.bias).collect();
        write_bias_csv(&args.out_dir.join(format!("{name}_bias.csv")), &rows, &echo)?;
    }
    for r in reports.iter().flat_map(|r| &r.bias) {
        log::info!(
            "rho*={} c={} {}: truth {:.3} median bias {:+.3} coverage {:.2}",
            r.rho_star,
            r.c,
            r.estimand,
            r.truth,
            r.median_bias,
            r.coverage
        );
    }
    Ok(())
}
