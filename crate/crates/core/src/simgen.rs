//! Synthetic datasets with three mediator clusters (flat, moderate and
//! strong monotone effects), plus a population oracle for the true causal
//! effects.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::BetaForm;
use crate::error::{PscError, Result};
use crate::estimands::{EffectSpec, StratumSpec};
use crate::linalg::psd_factor;
use crate::model::{data::linspace, kernel_cov, Dataset, KernelParams};
use crate::rng::{chain_rng, derive, stream_rng};
use crate::SCHEMA_VERSION;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub n: usize,
    pub p: usize,
    pub rho_star: f64,
    /// Scale of the mediator effect on the outcome.
    pub c: f64,
    /// Use the quadratic β surface for the truth.
    pub misspecified: bool,
    /// Use the constant surface `β(t, t') = c` instead (ignored when
    /// `misspecified` is set).
    pub constant_beta: bool,
    pub seed: u64,
    pub sigma_s2: f64,
    pub sigma2: f64,
    pub grid_points: usize,
    pub grid_range: (f64, f64),
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            n: 500,
            p: 5,
            rho_star: 3.0,
            c: 0.5,
            misspecified: false,
            constant_beta: false,
            seed: 1,
            sigma_s2: 1.0,
            sigma2: 0.5,
            grid_points: 10,
            grid_range: (-1.15, 1.15),
        }
    }
}

/// Mediator means of the three true clusters.
pub fn true_phi(cluster: usize, t: f64) -> f64 {
    match cluster {
        0 => 0.0,
        1 => 0.4 * (t + t.exp()),
        _ => t + t.exp(),
    }
}

/// `λ(t) = t + 0.3 t²`.
pub fn true_lambda(t: f64) -> f64 {
    t + 0.3 * t * t
}

/// Coefficients of the first five covariates; extra covariates get zero.
const ALPHA: [f64; 5] = [0.3, -0.2, 0.0, 0.0, 0.0];
const GAMMA: [f64; 5] = [-0.3, -0.2, 0.0, 0.3, 0.0];

fn padded(base: &[f64], p: usize) -> Vec<f64> {
    (0..p).map(|k| base.get(k).copied().unwrap_or(0.0)).collect()
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.grid_points < 2 {
            return Err(PscError::Config("scenario needs n >= 2 and at least 2 grid points".into()));
        }
        if !(self.rho_star > 0.0 && self.sigma_s2 > 0.0 && self.sigma2 > 0.0) {
            return Err(PscError::Config("rho_star, sigma_s2 and sigma2 must be positive".into()));
        }
        if !(self.grid_range.1 > self.grid_range.0) || !self.c.is_finite() {
            return Err(PscError::Config("invalid grid range or effect scale".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        linspace(self.grid_range.0, self.grid_range.1, self.grid_points)
    }

    pub fn alpha(&self) -> Vec<f64> {
        padded(&ALPHA, self.p)
    }

    pub fn gamma(&self) -> Vec<f64> {
        padded(&GAMMA, self.p)
    }

    pub fn beta_form(&self) -> BetaForm {
        if self.misspecified {
            BetaForm::Quadratic
        } else {
            BetaForm::Linear
        }
    }

    /// ζ of the true β surface in the `[1, t, t', t², t'²]` feature order.
    pub fn zeta(&self) -> Vec<f64> {
        let base: &[f64] = if self.misspecified {
            &[0.3, 0.1, 0.2, 0.1, 0.15]
        } else if self.constant_beta {
            &[1.0, 0.0, 0.0]
        } else {
            &[0.3, 0.1, 0.2]
        };
        base.iter().map(|v| self.c * v).collect()
    }

    /// `E[Y(t) | S = s, X = x]` under the truth.
    pub fn outcome_mean(&self, t: f64, s: &[f64], x: &[f64], grid: &[f64]) -> f64 {
        let form = self.beta_form();
        let zeta = self.zeta();
        let med: f64 = grid.iter().zip(s).map(|(&tp, &v)| form.eval(&zeta, t, tp) * v).sum();
        let cov: f64 = x.iter().zip(self.gamma()).map(|(a, b)| a * b).sum();
        true_lambda(t) + med + cov
    }
}

/// Everything needed to score a fit against the data-generating truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub schema_version: u32,
    pub scenario: Scenario,
    pub grid: Vec<f64>,
    pub alpha: Vec<f64>,
    pub gamma: Vec<f64>,
    pub zeta: Vec<f64>,
    pub beta_form: BetaForm,
    /// Zero-based true cluster per unit (0 flat, 1 moderate, 2 strong).
    pub clusters: Vec<usize>,
    /// True grid trajectories, one row per unit.
    pub trajectories: Vec<Vec<f64>>,
    #[serde(default)]
    pub effects: Vec<OracleValue>,
}

/// Draw a dataset from the scenario.
pub fn generate(scenario: &Scenario) -> Result<(Dataset, GroundTruth)> {
    scenario.validate()?;
    let mut rng = chain_rng(scenario.seed, 0x5157);
    let n = scenario.n;
    let p = scenario.p;
    let grid = scenario.grid();
    let m = grid.len();
    let alpha = scenario.alpha();
    let gamma = scenario.gamma();
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let t: Vec<f64> = (0..n)
        .map(|i| {
            let x1 = if p > 0 { x[(i, 0)] } else { 0.0 };
            let x2 = if p > 1 { x[(i, 1)] } else { 0.0 };
            0.15 * x1 + 0.25 * x2 + 0.5f64.sqrt() * rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    let clusters: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
    let params = KernelParams::new(scenario.rho_star, scenario.sigma_s2)?;
    let form = scenario.beta_form();
    let zeta = scenario.zeta();
    let mut s_obs = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut trajectories = Vec::with_capacity(n);
    for i in 0..n {
        let cov = kernel_cov(&grid, Some(t[i]), &params)?;
        let xa: f64 = x.row(i).iter().zip(&alpha).map(|(a, b)| a * b).sum();
        let mean = DVector::from_fn(m + 1, |r, _| {
            let tt = if r < m { grid[r] } else { t[i] };
            true_phi(clusters[i], tt) + xa
        });
        let z = crate::linalg::standard_normal_vector(&mut rng, m + 1);
        let s = mean + psd_factor(&cov) * z;
        s_obs[i] = s[m];
        let med: f64 = (0..m).map(|g| form.eval(&zeta, t[i], grid[g]) * s[g]).sum();
        let xg: f64 = x.row(i).iter().zip(&gamma).map(|(a, b)| a * b).sum();
        let eps: f64 = scenario.sigma2.sqrt() * rng.sample::<f64, _>(StandardNormal);
        y[i] = true_lambda(t[i]) + med + xg + eps;
        trajectories.push(s.rows(0, m).iter().copied().collect());
    }
    let data = Dataset::new(y, s_obs, t, x, grid.clone())?;
    let truth = GroundTruth {
        schema_version: SCHEMA_VERSION,
        scenario: scenario.clone(),
        grid,
        alpha,
        gamma,
        zeta,
        beta_form: form,
        clusters,
        trajectories,
        effects: Vec::new(),
    };
    Ok((data, truth))
}

/// The average effect and the two range-2.5 principal effects of
/// `Y(0.5) - Y(-0.5)`.
pub fn standard_effects() -> Vec<EffectSpec> {
    use crate::estimands::GFunction;
    let mk = |label: &str, a: f64, b: f64| EffectSpec {
        label: label.into(),
        stratum: StratumSpec::new(GFunction::Range, a, b).expect("valid bounds"),
        t1: 0.5,
        t0: -0.5,
    };
    vec![
        mk("ate", f64::NEG_INFINITY, f64::INFINITY),
        mk("pce_range_below_2.5", f64::NEG_INFINITY, 2.5),
        mk("pce_range_above_2.5", 2.5, f64::INFINITY),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleValue {
    pub label: String,
    pub value: f64,
    /// Monte-Carlo standard error of `value`.
    pub se: f64,
    /// Population units falling in the stratum.
    pub count: u64,
    /// In-stratum units per true cluster.
    pub cluster_counts: [u64; 3],
}

const ORACLE_BLOCK: usize = 10_000;

#[derive(Default, Clone)]
struct Acc {
    n: u64,
    sum: f64,
    sum2: f64,
    clusters: [u64; 3],
}

/// True effects by simulating `n_pop` population units with complete
/// potential-mediator trajectories. Outcomes are evaluated at their
/// conditional mean, so the only error is sampling over units.
pub fn oracle_truth(scenario: &Scenario, effects: &[EffectSpec], n_pop: usize, seed: u64) -> Result<Vec<OracleValue>> {
    scenario.validate()?;
    let grid = scenario.grid();
    let m = grid.len();
    let params = KernelParams::new(scenario.rho_star, scenario.sigma_s2)?;
    let factor = psd_factor(&kernel_cov(&grid, None, &params)?);
    let alpha = scenario.alpha();
    let form = scenario.beta_form();
    let zeta = scenario.zeta();
    // Per-effect weight vectors for the mediator part of Y(t1) - Y(t0).
    let contrasts: Vec<(f64, Vec<f64>)> = effects
        .iter()
        .map(|e| {
            let w = grid
                .iter()
                .map(|&tp| form.eval(&zeta, e.t1, tp) - form.eval(&zeta, e.t0, tp))
                .collect();
            (true_lambda(e.t1) - true_lambda(e.t0), w)
        })
        .collect();
    let blocks = n_pop.div_ceil(ORACLE_BLOCK);
    let key = derive(seed, 0x0AC1E);
    let partial: Vec<Vec<Acc>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(key, b as u64);
            let size = ORACLE_BLOCK.min(n_pop - b * ORACLE_BLOCK);
            let mut acc = vec![Acc::default(); effects.len()];
            for _ in 0..size {
                let xa: f64 = alpha.iter().map(|a| a * rng.sample::<f64, _>(StandardNormal)).sum();
                let k = rng.random_range(0..3);
                let z = crate::linalg::standard_normal_vector(&mut rng, m);
                let mut s = &factor * z;
                for g in 0..m {
                    s[g] += true_phi(k, grid[g]) + xa;
                }
                for (e, spec) in effects.iter().enumerate() {
                    if !spec.stratum.contains(s.as_slice()) {
                        continue;
                    }
                    let (dl, w) = &contrasts[e];
                    let v = dl + w.iter().zip(s.iter()).map(|(a, b)| a * b).sum::<f64>();
                    let a = &mut acc[e];
                    a.n += 1;
                    a.sum += v;
                    a.sum2 += v * v;
                    a.clusters[k] += 1;
                }
            }
            acc
        })
        .collect();
    effects
        .iter()
        .enumerate()
        .map(|(e, spec)| {
            let mut tot = Acc::default();
            for blk in &partial {
                tot.n += blk[e].n;
                tot.sum += blk[e].sum;
                tot.sum2 += blk[e].sum2;
                for k in 0..3 {
                    tot.clusters[k] += blk[e].clusters[k];
                }
            }
            if tot.n < 2 {
                return Err(PscError::EmptyStratum);
            }
            let nf = tot.n as f64;
            let mean = tot.sum / nf;
            let var = (tot.sum2 / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
            Ok(OracleValue {
                label: spec.label.clone(),
                value: mean,
                se: (var / nf).sqrt(),
                count: tot.n,
                cluster_counts: tot.clusters,
            })
        })
        .collect()
}
