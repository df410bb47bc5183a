//! The marginal posterior of the kernel range ρ with the grid trajectories
//! integrated out, grid scans of it, and the large-sample derivative check
//! at the true ρ.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ModelConfig, OutcomeBasisConfig, RhoPrior};
use crate::error::{PscError, Result};
use crate::linalg::spd_solve;
use crate::mediator::kernel_moves::rho_log_target;
use crate::mediator::{MediatorState, UnitGeometry};
use crate::model::{collapsed_unit_term, Problem};
use crate::outcome::{beta_matrix, zeta_design, OutcomeState};
use crate::simgen::{generate, true_lambda, true_phi, Scenario};

/// `log P(ρ | D)` up to a constant, holding the mediator and outcome
/// parameters fixed. Same target as the ρ update in the sampler.
pub fn log_marginal_rho(problem: &Problem, mediator: &MediatorState, outcome: &OutcomeState, rho: f64) -> Result<f64> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(PscError::invalid(format!("rho must be positive, got {rho}")));
    }
    let geo = UnitGeometry::new(problem, rho, beta_matrix(problem, &outcome.zeta));
    let v = rho_log_target(problem, mediator, &geo, &outcome.y_tilde(problem), outcome.sigma2);
    if v.is_nan() {
        return Err(PscError::numerical("log_marginal_rho", format!("target is NaN at rho = {rho}")));
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoPoint {
    pub rho: f64,
    pub log_density: f64,
}

pub fn log_marginal_rho_grid(problem: &Problem, mediator: &MediatorState, outcome: &OutcomeState, rhos: &[f64]) -> Result<Vec<RhoPoint>> {
    rhos.par_iter()
        .map(|&rho| {
            Ok(RhoPoint {
                rho,
                log_density: log_marginal_rho(problem, mediator, outcome, rho)?,
            })
        })
        .collect()
}

/// `lo, lo + step, …` up to `hi` inclusive.
pub fn rho_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let k = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=k).map(|j| lo + step * j as f64).collect()
}

pub fn argmax(points: &[RhoPoint]) -> Option<f64> {
    points
        .iter()
        .filter(|p| p.log_density.is_finite())
        .max_by(|a, b| a.log_density.total_cmp(&b.log_density))
        .map(|p| p.rho)
}

/// The collapsed ρ target of a simulated dataset with every other
/// parameter at its true value, so unit means are the true cluster curves.
#[derive(Debug, Clone)]
pub struct TruthTarget {
    pub problem: Problem,
    pub beta: DMatrix<f64>,
    /// True means on the grid, n × M.
    pub mean_grid: DMatrix<f64>,
    /// True means at the observed treatments.
    pub mean_obs: Vec<f64>,
    pub y_tilde: Vec<f64>,
    pub sigma_s2: f64,
    pub sigma2: f64,
    pub prior: RhoPrior,
    pub rho_star: f64,
}

impl TruthTarget {
    /// When the scenario's β surface is quadratic, the outcome part is
    /// evaluated under the linear surface fitted by least squares to the
    /// true trajectories, as a correctly specified fit would not exist.
    pub fn from_scenario(scenario: &Scenario, prior: RhoPrior) -> Result<Self> {
        let (data, truth) = generate(scenario)?;
        let n = data.n();
        let config = ModelConfig {
            outcome_basis: OutcomeBasisConfig::Polynomial { degree: 2 },
            ..ModelConfig::default()
        };
        let problem = Problem::from_config(data, &config)?;
        let grid = problem.data.grid.clone();
        let m = grid.len();
        let xa: Vec<f64> = (0..n).map(|i| problem.data.x_dot(i, &truth.alpha)).collect();
        let mean_grid = DMatrix::from_fn(n, m, |i, g| true_phi(truth.clusters[i], grid[g]) + xa[i]);
        let mean_obs: Vec<f64> = (0..n)
            .map(|i| true_phi(truth.clusters[i], problem.data.t_obs[i]) + xa[i])
            .collect();
        let y_tilde: Vec<f64> = (0..n)
            .map(|i| problem.data.y[i] - true_lambda(problem.data.t_obs[i]) - problem.data.x_dot(i, &truth.gamma))
            .collect();
        let (zeta, sigma2) = if scenario.misspecified {
            let traj = DMatrix::from_fn(n, m, |i, g| truth.trajectories[i][g]);
            let d = zeta_design(&problem, &traj);
            let yt = DMatrix::from_column_slice(n, 1, &y_tilde);
            let (zeta, _) = spd_solve(&(d.transpose() * &d), &(d.transpose() * &yt), 1.0, "pseudo-true zeta")?;
            let resid = &yt - &d * &zeta;
            (zeta.as_slice().to_vec(), resid.norm_squared() / (n as f64 - zeta.nrows() as f64))
        } else {
            (truth.zeta.clone(), scenario.sigma2)
        };
        let beta = beta_matrix(&problem, &zeta);
        Ok(Self {
            problem,
            beta,
            mean_grid,
            mean_obs,
            y_tilde,
            sigma_s2: scenario.sigma_s2,
            sigma2,
            prior,
            rho_star: scenario.rho_star,
        })
    }

    pub fn n(&self) -> usize {
        self.problem.n()
    }

    pub fn log_target(&self, rho: f64) -> f64 {
        let geo = UnitGeometry::new(&self.problem, rho, self.beta.clone());
        let s_obs = &self.problem.data.s_obs;
        let lik: f64 = (0..self.n())
            .map(|i| {
                let bm = self.beta.row(i).dot(&self.mean_grid.row(i)) + geo.br[i] * (s_obs[i] - self.mean_obs[i]);
                collapsed_unit_term(bm, self.sigma_s2 * geo.q[i], self.y_tilde[i], self.sigma2)
            })
            .sum();
        self.prior.ln_density(rho) + lik
    }

    /// `|d/dρ log P(ρ|D)| / n` by central differences with step `1e-3 ρ`.
    pub fn scaled_derivative(&self, rho: f64) -> f64 {
        let h = 1e-3 * rho;
        ((self.log_target(rho + h) - self.log_target(rho - h)) / (2.0 * h)).abs() / self.n() as f64
    }

    pub fn scan(&self, rhos: &[f64]) -> Vec<RhoPoint> {
        rhos.par_iter()
            .map(|&rho| RhoPoint {
                rho,
                log_density: self.log_target(rho),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Row {
    pub n: usize,
    pub seed: u64,
    pub scaled_derivative: f64,
}

/// Scaled derivative at `base.rho_star` for every combination of sample
/// size and seed, under a flat prior on ρ. Other scenario fields come from
/// `base`.
pub fn theorem1_check(base: &Scenario, n_values: &[usize], seeds: &[u64]) -> Result<Vec<Theorem1Row>> {
    let jobs: Vec<(usize, u64)> = seeds.iter().flat_map(|&s| n_values.iter().map(move |&n| (n, s))).collect();
    jobs.par_iter()
        .map(|&(n, seed)| {
            let sc = Scenario {
                n,
                seed,
                ..base.clone()
            };
            let target = TruthTarget::from_scenario(&sc, RhoPrior::Flat)?;
            Ok(Theorem1Row {
                n,
                seed,
                scaled_derivative: target.scaled_derivative(base.rho_star),
            })
        })
        .collect()
}

/// Argmax of the ρ target over `rhos` for each replicate of a scenario,
/// seeds `base_seed + r`.
pub fn argmax_replicates(scenario: &Scenario, prior: RhoPrior, rhos: &[f64], reps: usize, base_seed: u64) -> Result<Vec<f64>> {
    (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let sc = Scenario {
                seed: base_seed + r,
                ..scenario.clone()
            };
            let target = TruthTarget::from_scenario(&sc, prior)?;
            argmax(&target.scan(rhos)).ok_or_else(|| PscError::numerical("rho scan", "no finite point"))
        })
        .collect()
}

/// The ρ target averaged pointwise over `reps` replicates of a scenario,
/// seeds `base_seed + r`.
pub fn averaged_log_target(scenario: &Scenario, prior: RhoPrior, rhos: &[f64], reps: usize, base_seed: u64) -> Result<Vec<RhoPoint>> {
    let scans = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let sc = Scenario {
                seed: base_seed + r,
                ..scenario.clone()
            };
            Ok(TruthTarget::from_scenario(&sc, prior)?.scan(rhos))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rhos
        .iter()
        .enumerate()
        .map(|(k, &rho)| RhoPoint {
            rho,
            log_density: scans.iter().map(|s| s[k].log_density).sum::<f64>() / reps.max(1) as f64,
        })
        .collect())
}

/// Interquartile width of the density proportional to `exp(log_density)`
/// on an evenly spaced grid, each point standing for a cell of one spacing.
pub fn interquartile_width(points: &[RhoPoint]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let top = points.iter().map(|p| p.log_density).fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = points.iter().map(|p| (p.log_density - top).exp()).collect();
    let total: f64 = w.iter().sum();
    let h = points[1].rho - points[0].rho;
    let quantile = |q: f64| {
        let mut cum = 0.0;
        for (k, wk) in w.iter().enumerate() {
            let next = cum + wk / total;
            if next >= q {
                return points[k].rho - 0.5 * h + h * (q - cum) / (next - cum);
            }
            cum = next;
        }
        points[points.len() - 1].rho + 0.5 * h
    };
    quantile(0.75) - quantile(0.25)
}

/// Writes `rho,log_density` rows.
pub fn write_grid_csv<W: std::io::Write>(out: W, points: &[RhoPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rho", "log_density"])?;
    for p in points {
        w.write_record([p.rho.to_string(), p.log_density.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
