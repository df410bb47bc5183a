use std::fs::File;
use std::io::{BufReader, Write};
use std::path::PathBuf;

use anyhow::Context;
use clap::Subcommand;

use psc_core::drawlog::DrawLogReader;
use psc_core::io::write_comment_header;
use psc_core::rho::{
    argmax, averaged_log_target, interquartile_width, log_marginal_rho_grid, rho_grid, theorem1_check, write_grid_csv,
};
use psc_core::simgen::Scenario;
use psc_core::{stats, RunConfig};

use crate::fit::load_problem;
use crate::options::create;

#[derive(Debug, Subcommand)]
pub enum Command {
    /// The collapsed ρ target on a grid, at one retained draw of a fit.
    Grid(GridArgs),
    /// Scaled derivative of the ρ target at ρ* across sample sizes and seeds.
    Concentration(ConcentrationArgs),
    /// The ρ target averaged over simulated replicates, per effect size.
    Sharpness(SharpnessArgs),
}

#[derive(Debug, Clone, clap::Args)]
pub struct RhoRange {
    #[arg(long, default_value_t = 0.1)]
    pub rho_min: f64,
    #[arg(long, default_value_t = 10.0)]
    pub rho_max: f64,
    #[arg(long, default_value_t = 0.1)]
    pub rho_step: f64,
}

impl RhoRange {
    fn grid(&self) -> anyhow::Result<Vec<f64>> {
        anyhow::ensure!(
            self.rho_min > 0.0 && self.rho_max > self.rho_min && self.rho_step > 0.0,
            "need 0 < rho-min < rho-max and a positive rho-step"
        );
        Ok(rho_grid(self.rho_min, self.rho_max, self.rho_step))
    }
}

#[derive(Debug, clap::Args)]
pub struct GridArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Draw log written by `fit`.
    #[arg(long)]
    pub draws: PathBuf,
    /// Zero-based index of the retained draw; the last one by default.
    #[arg(long)]
    pub index: Option<usize>,
    #[command(flatten)]
    pub range: RhoRange,
    /// Output CSV with columns rho, log_density.
    #[arg(long)]
    pub out: PathBuf,
}

/// Simulation settings shared by the replicate-based diagnostics.
#[derive(Debug, Clone, clap::Args)]
pub struct DesignArgs {
    #[arg(long, default_value_t = 3.0)]
    pub rho_star: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_s2: f64,
    #[arg(long, default_value_t = 0.5)]
    pub sigma2: f64,
    /// First replicate seed; replicate r uses seed + r.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

impl DesignArgs {
    fn scenario(&self) -> Scenario {
        Scenario {
            rho_star: self.rho_star,
            sigma_s2: self.sigma_s2,
            sigma2: self.sigma2,
            seed: self.seed,
            ..Scenario::default()
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct ConcentrationArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long, default_value_t = 0.25)]
    pub c: f64,
    #[arg(long, value_delimiter = ',', default_value = "200,800,3200")]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    /// Output CSV with columns n, seed, scaled_derivative.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct SharpnessArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.15,0.25")]
    pub c: Vec<f64>,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    /// β(t, t') = c rather than the linear surface.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub constant_beta: bool,
    #[command(flatten)]
    pub range: RhoRange,
    /// Output CSV with columns c, rho, log_density.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Grid(a) => grid(a),
        Command::Concentration(a) => concentration(a),
        Command::Sharpness(a) => sharpness(a),
    }
}

fn grid(a: GridArgs) -> anyhow::Result<()> {
    let file = File::open(&a.draws).with_context(|| format!("opening {}", a.draws.display()))?;
    let mut reader = DrawLogReader::new(BufReader::new(file))?;
    let mut cfg = RunConfig::from_json(&reader.header().config_json)?;
    let draws = reader.read_all()?;
    anyhow::ensure!(!draws.is_empty(), "{} holds no draws", a.draws.display());
    let k = a.index.unwrap_or(draws.len() - 1);
    let draw = draws
        .get(k)
        .with_context(|| format!("draw index {k} out of range (log has {})", draws.len()))?;
    let problem = load_problem(&a.data, &mut cfg)?;
    let points = log_marginal_rho_grid(&problem, &draw.mediator, &draw.outcome, &a.range.grid()?)?;
    let mut w = create(&a.out)?;
    let echo = serde_json::to_string(&serde_json::json!({ "run": &cfg, "draw_index": k }))?;
    write_comment_header(&mut w, "rho_grid", Some(&echo))?;
    write_grid_csv(&mut w, &points)?;
    w.flush()?;
    log::info!("argmax over the grid: {:?}", argmax(&points));
    Ok(())
}

fn concentration(a: ConcentrationArgs) -> anyhow::Result<()> {
    let base = Scenario {
        c: a.c,
        ..a.design.scenario()
    };
    let ns = a.n;
    anyhow::ensure!(ns.iter().all(|&n| n >= 2), "sample sizes must be at least 2");
    let seeds: Vec<u64> = (0..a.seeds).map(|s| base.seed + s).collect();
    let rows = theorem1_check(&base, &ns, &seeds)?;
    let mut w = create(&a.out)?;
    write_comment_header(&mut w, "rho_concentration", Some(&serde_json::to_string(&base)?))?;
    let mut out = csv::Writer::from_writer(&mut w);
    out.write_record(["n", "seed", "scaled_derivative"])?;
    for r in &rows {
        out.write_record([r.n.to_string(), r.seed.to_string(), r.scaled_derivative.to_string()])?;
    }
    out.flush()?;
    drop(out);
    w.flush()?;
    for &n in &ns {
        let v: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| r.scaled_derivative).collect();
        log::info!("n={n}: median scaled derivative {:.5}", stats::median(&v));
    }
    Ok(())
}

fn sharpness(a: SharpnessArgs) -> anyhow::Result<()> {
    let rhos = a.range.grid()?;
    let base = Scenario {
        n: a.n,
        constant_beta: a.constant_beta,
        ..a.design.scenario()
    };
    let prior = RunConfig::default().model.priors.rho;
    let mut w = create(&a.out)?;
    let echo = serde_json::json!({ "scenario": &base, "c": &a.c, "reps": a.reps, "prior": prior });
    write_comment_header(&mut w, "rho_sharpness", Some(&echo.to_string()))?;
    let mut out = csv::Writer::from_writer(&mut w);
    out.write_record(["c", "rho", "log_density"])?;
    for &c in &a.c {
        let sc = Scenario { c, ..base.clone() };
        let points = averaged_log_target(&sc, prior, &rhos, a.reps, base.seed)?;
        for p in &points {
            out.write_record([c.to_string(), p.rho.to_string(), p.log_density.to_string()])?;
        }
        log::info!(
            "c={c}: argmax {:?}, interquartile width {:.3}",
            argmax(&points),
            interquartile_width(&points)
        );
    }
    out.flush()?;
    drop(out);
    w.flush()?;
    Ok(())
}
