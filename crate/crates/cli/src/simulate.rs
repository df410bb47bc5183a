use std::path::PathBuf;

use anyhow::Context;
use clap::ValueEnum;

use psc_core::io::{save_dataset, write_json};
use psc_core::simgen::{generate, oracle_truth, standard_effects, Scenario};

use crate::options::ensure_dir;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Design {
    /// Three mediator clusters, linear β unless overridden.
    S5,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Directory receiving `data.csv` and `truth.json`.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "s5")]
    pub scenario: Design,
    /// JSON scenario; flags win over its fields. Unknown keys are rejected.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    /// Scale of the mediator effect on the outcome.
    #[arg(long)]
    pub c: Option<f64>,
    /// True kernel length scale ρ*.
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub sigma_s2: Option<f64>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Quadratic β surface in the truth.
    #[arg(long)]
    pub misspecified: bool,
    /// Constant β surface `β(t, t') = c`.
    #[arg(long)]
    pub constant_beta: bool,
    /// Population units for the true effects in the sidecar; 0 skips them.
    #[arg(long, default_value_t = 200_000)]
    pub oracle_pop: usize,
}

impl Args {
    fn scenario(&self) -> anyhow::Result<Scenario> {
        let mut sc = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => match self.scenario {
                Design::S5 => Scenario::default(),
            },
        };
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {$(
                if let Some(v) = self.$flag {
                    sc.$field = v;
                }
            )*};
        }
        set!(n => n, p => p, c => c, rho => rho_star, seed => seed, sigma_s2 => sigma_s2, sigma2 => sigma2, grid_points => grid_points);
        sc.misspecified |= self.misspecified;
        sc.constant_beta |= self.constant_beta;
        sc.validate()?;
        Ok(sc)
    }
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let sc = args.scenario()?;
    ensure_dir(&args.out_dir)?;
    let (data, mut truth) = generate(&sc)?;
    if args.oracle_pop > 0 {
        truth.effects = oracle_truth(&sc, &standard_effects(), args.oracle_pop, sc.seed ^ 0x5eed)?;
    }
    let data_path = args.out_dir.join("data.csv");
    save_dataset(&data_path, &data)?;
    write_json(&args.out_dir.join("truth.json"), &truth)?;
    log::info!("wrote {} units to {}", data.n(), data_path.display());
    Ok(())
}
