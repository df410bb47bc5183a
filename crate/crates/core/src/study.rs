//! Repeated simulate → fit → estimate runs scored against the population
//! oracle, summarised as bias tables per (ρ*, c, estimand).

use serde::{Deserialize, Serialize};

use crate::config::{ModelConfig, OutcomeBasisConfig};
use crate::engine::{run_chain, ChainConfig, Draw};
use crate::error::{PscError, Result};
use crate::estimands::{effects, EffectSpec, EstimandOptions};
use crate::model::Problem;
use crate::simgen::{generate, oracle_truth, standard_effects, OracleValue, Scenario};
use crate::stats;

/// How each replicate is fitted and summarised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyFit {
    pub model: ModelConfig,
    pub chain: ChainConfig,
    pub estimands: EstimandOptions,
    /// Estimands use at most this many retained draws, evenly spaced.
    pub max_estimand_draws: usize,
}

impl Default for StudyFit {
    fn default() -> Self {
        Self {
            model: ModelConfig {
                outcome_basis: OutcomeBasisConfig::Polynomial { degree: 2 },
                ..ModelConfig::default()
            },
            chain: ChainConfig {
                n_iter: 4000,
                n_burn: 1000,
                thin: 6,
                ..ChainConfig::default()
            },
            estimands: EstimandOptions {
                n_mc: 50,
                ..EstimandOptions::default()
            },
            max_estimand_draws: 250,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub label: String,
    pub mean: f64,
    pub lo95: f64,
    pub hi95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub rho_star: f64,
    pub c: f64,
    pub n: usize,
    pub misspecified: bool,
    pub seed: u64,
    pub rho_mean: f64,
    pub sigma2_mean: f64,
    pub rho_accept: f64,
    pub effects: Vec<EffectEstimate>,
    /// Posterior mean of φ_{zᵢ} at the last grid point, averaged over the
    /// units of each true cluster.
    pub phi_end_by_true_cluster: [f64; 3],
}

fn evenly_spaced(draws: &[Draw], max: usize) -> Vec<Draw> {
    if draws.len() <= max || max == 0 {
        return draws.to_vec();
    }
    (0..max).map(|k| draws[k * draws.len() / max].clone()).collect()
}

/// Simulate, fit and summarise one replicate.
pub fn run_replicate(scenario: &Scenario, fit: &StudyFit, specs: &[EffectSpec]) -> Result<ReplicateResult> {
    let (data, truth) = generate(scenario)?;
    let problem = Problem::from_config(data, &fit.model)?;
    let chain = ChainConfig {
        seed: scenario.seed,
        ..fit.chain.clone()
    };
    let post = run_chain(&problem, &chain, 0)?;
    let rho = post.scalar(|d| d.mediator.kernel.rho);
    let sigma2 = post.scalar(|d| d.outcome.sigma2);
    let sub = evenly_spaced(&post.draws, fit.max_estimand_draws);
    let opts = EstimandOptions {
        seed: scenario.seed,
        ..fit.estimands.clone()
    };
    let est = effects(&problem, &sub, specs, &opts)?;
    let t_end = *problem.data.grid.last().expect("grid is not empty");
    let basis = &problem.model.mediator_basis;
    let mut phi_sum = [0.0; 3];
    let mut phi_cnt = [0usize; 3];
    for d in &post.draws {
        let cl = &d.mediator.clusters;
        let phi_c: Vec<f64> = (0..cl.truncation()).map(|c| basis.eval(t_end, cl.atom(c))).collect();
        for (i, &k) in truth.clusters.iter().enumerate() {
            phi_sum[k] += phi_c[cl.z[i]];
            phi_cnt[k] += 1;
        }
    }
    let phi_end = std::array::from_fn(|k| if phi_cnt[k] > 0 { phi_sum[k] / phi_cnt[k] as f64 } else { f64::NAN });
    Ok(ReplicateResult {
        rho_star: scenario.rho_star,
        c: scenario.c,
        n: scenario.n,
        misspecified: scenario.misspecified,
        seed: scenario.seed,
        rho_mean: stats::mean(&rho),
        sigma2_mean: stats::mean(&sigma2),
        rho_accept: post.diagnostics.rho_accept,
        effects: est
            .into_iter()
            .map(|e| EffectEstimate {
                label: e.label,
                mean: e.mean,
                lo95: e.lo95,
                hi95: e.hi95,
            })
            .collect(),
        phi_end_by_true_cluster: phi_end,
    })
}

/// One row of a bias table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub rho_star: f64,
    pub c: f64,
    pub n: usize,
    pub misspecified: bool,
    pub estimand: String,
    pub truth: f64,
    pub truth_se: f64,
    pub mean_estimate: f64,
    pub median_bias: f64,
    pub mean_bias: f64,
    pub rmse: f64,
    pub coverage: f64,
    pub reps: usize,
}

pub fn bias_rows(scenario: &Scenario, oracle: &[OracleValue], reps: &[ReplicateResult]) -> Vec<BiasRow> {
    oracle
        .iter()
        .map(|o| {
            let hits: Vec<&EffectEstimate> = reps
                .iter()
                .filter_map(|r| r.effects.iter().find(|e| e.label == o.label))
                .collect();
            let est: Vec<f64> = hits.iter().map(|e| e.mean).collect();
            let err: Vec<f64> = est.iter().map(|v| v - o.value).collect();
            let covered = hits.iter().filter(|e| e.lo95 <= o.value && o.value <= e.hi95).count();
            let k = est.len();
            let nan_if_empty = |v: f64| if k == 0 { f64::NAN } else { v };
            BiasRow {
                rho_star: scenario.rho_star,
                c: scenario.c,
                n: scenario.n,
                misspecified: scenario.misspecified,
                estimand: o.label.clone(),
                truth: o.value,
                truth_se: o.se,
                mean_estimate: nan_if_empty(stats::mean(&est)),
                median_bias: nan_if_empty(stats::median(&err)),
                mean_bias: nan_if_empty(stats::mean(&err)),
                rmse: nan_if_empty((err.iter().map(|e| e * e).sum::<f64>() / k as f64).sqrt()),
                coverage: nan_if_empty(covered as f64 / k as f64),
                reps: k,
            }
        })
        .collect()
}

/// A named grid of scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    /// n = 500, ρ* ∈ {3, 8}, c ∈ {0, 0.5, 1}, linear β.
    Main,
    /// As `Main` with n = 1000.
    Large,
    /// Quadratic β truth at c = 1, ρ* ∈ {3, 8}.
    Misspecified,
}

impl std::str::FromStr for Study {
    type Err = PscError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "main" => Ok(Study::Main),
            "large" => Ok(Study::Large),
            "misspecified" => Ok(Study::Misspecified),
            other => Err(PscError::Config(format!("unknown study {other:?}; expected main, large or misspecified"))),
        }
    }
}

impl Study {
    /// The study's scenarios. Fields the study does not vary (σ_S², σ², p,
    /// grid) come from `base`.
    pub fn cells(self, base: &Scenario) -> Vec<Scenario> {
        let mut out = Vec::new();
        let (n, cs, misspecified): (usize, &[f64], bool) = match self {
            Study::Main => (500, &[0.0, 0.5, 1.0], false),
            Study::Large => (1000, &[0.0, 0.5, 1.0], false),
            Study::Misspecified => (500, &[1.0], true),
        };
        for rho_star in [3.0, 8.0] {
            for &c in cs {
                out.push(Scenario {
                    n,
                    rho_star,
                    c,
                    misspecified,
                    ..base.clone()
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub scenario: Scenario,
    pub oracle: Vec<OracleValue>,
    pub replicates: Vec<ReplicateResult>,
    pub bias: Vec<BiasRow>,
}

/// Runs `reps` replicates with seeds `base_seed..` for one cell. The oracle
/// uses `oracle_pop` population units.
pub fn run_cell(cell: &Scenario, reps: usize, base_seed: u64, fit: &StudyFit, oracle_pop: usize) -> Result<CellReport> {
    let specs = standard_effects();
    let oracle = oracle_truth(cell, &specs, oracle_pop, base_seed ^ 0x5eed)?;
    let replicates = (0..reps as u64)
        .map(|r| {
            let sc = Scenario {
                seed: base_seed + r,
                ..cell.clone()
            };
            log::info!("replicate rho*={} c={} seed={}", sc.rho_star, sc.c, sc.seed);
            run_replicate(&sc, fit, &specs)
        })
        .collect::<Result<Vec<_>>>()?;
    let bias = bias_rows(cell, &oracle, &replicates);
    Ok(CellReport {
        scenario: cell.clone(),
        oracle,
        replicates,
        bias,
    })
}
