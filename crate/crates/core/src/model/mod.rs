//! Data model, GP kernel, monotone basis machinery and the conditional
//! moments shared by every sampler update.

pub mod basis;
pub mod data;
pub mod kernel;
pub mod moments;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use basis::{MonotoneBasis, OutcomeBasis};
pub use data::Dataset;
pub use kernel::{kernel_cov, kernel_cross, KernelParams};
pub use moments::{collapsed_unit_term, condition_on_observed, ConditionalMoments};

use crate::config::{BetaForm, ModelConfig, OutcomeBasisConfig, Priors};
use crate::error::{PscError, Result};
use crate::mediator::MediatorState;

/// Resolved model structure: bases, β(t, t') form, DP truncation and priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub grid: Vec<f64>,
    pub mediator_basis: MonotoneBasis,
    pub outcome_basis: OutcomeBasis,
    pub beta_form: BetaForm,
    pub truncation: usize,
    pub priors: Priors,
}

impl Model {
    /// Resolve data-dependent pieces (quantile knots) of `config`.
    pub fn from_config(config: &ModelConfig, data: &Dataset) -> Result<Self> {
        let mb = &config.mediator_basis;
        let mediator_basis = match &mb.knots {
            Some(k) => MonotoneBasis::new(k.clone(), mb.intercept)?,
            None => MonotoneBasis::from_quantiles(&data.t_obs, mb.segments, mb.intercept)?,
        };
        let outcome_basis = match config.outcome_basis {
            OutcomeBasisConfig::Spline { size } => {
                if size < 2 {
                    return Err(PscError::Config("outcome spline needs at least 2 functions".into()));
                }
                let pieces = size - 1;
                let knots = (1..pieces)
                    .map(|k| data.treatment_quantile(k as f64 / pieces as f64))
                    .collect();
                OutcomeBasis::Spline { knots }
            }
            OutcomeBasisConfig::Polynomial { degree } => OutcomeBasis::Polynomial { degree },
        };
        if config.truncation < 2 {
            return Err(PscError::Config("DP truncation must be at least 2".into()));
        }
        Ok(Self {
            grid: data.grid.clone(),
            mediator_basis,
            outcome_basis,
            beta_form: config.beta_form,
            truncation: config.truncation,
            priors: config.priors.clone(),
        })
    }

    pub fn m(&self) -> usize {
        self.grid.len()
    }
}

/// `m(t, x) = b(t) η + x α`.
pub fn mean_function(basis: &MonotoneBasis, t: f64, x: &[f64], eta: &[f64], alpha: &[f64]) -> Result<f64> {
    if x.len() != alpha.len() {
        return Err(PscError::invalid(format!(
            "covariate row has {} entries but alpha has {}",
            x.len(),
            alpha.len()
        )));
    }
    if eta.len() != basis.dim() {
        return Err(PscError::invalid(format!(
            "eta has {} entries but the basis has {}",
            eta.len(),
            basis.dim()
        )));
    }
    let xa: f64 = x.iter().zip(alpha).map(|(a, b)| a * b).sum();
    Ok(basis.eval(t, eta) + xa)
}

/// Dataset plus resolved model and the design matrices that do not change
/// during sampling.
#[derive(Debug, Clone)]
pub struct Problem {
    pub data: Dataset,
    pub model: Model,
    /// `b(t_m)` rows, M × dim.
    pub basis_grid: DMatrix<f64>,
    /// `b(T_i)` rows, n × dim.
    pub basis_obs: DMatrix<f64>,
    /// λ-basis rows at `T_i`, n × J₂.
    pub lambda_obs: DMatrix<f64>,
    /// Covariates with a leading intercept, n × (p+1).
    pub x_tilde: DMatrix<f64>,
}

impl Problem {
    pub fn new(data: Dataset, model: Model) -> Result<Self> {
        data.validate()?;
        if data.n() < data::MIN_UNITS {
            return Err(PscError::Config(format!(
                "need at least {} units, got {}",
                data::MIN_UNITS,
                data.n()
            )));
        }
        if model.grid != data.grid {
            return Err(PscError::invalid("model grid does not match dataset grid"));
        }
        let basis_grid = model.mediator_basis.design(&data.grid);
        let basis_obs = model.mediator_basis.design(&data.t_obs);
        let j2 = model.outcome_basis.dim();
        let mut lambda_obs = DMatrix::zeros(data.n(), j2);
        for i in 0..data.n() {
            for (c, v) in model.outcome_basis.row(data.t_obs[i]).into_iter().enumerate() {
                lambda_obs[(i, c)] = v;
            }
        }
        let p = data.p();
        let x_tilde = DMatrix::from_fn(data.n(), p + 1, |i, c| if c == 0 { 1.0 } else { data.x[(i, c - 1)] });
        Ok(Self {
            data,
            model,
            basis_grid,
            basis_obs,
            lambda_obs,
            x_tilde,
        })
    }

    pub fn from_config(data: Dataset, config: &ModelConfig) -> Result<Self> {
        let model = Model::from_config(config, &data)?;
        Self::new(data, model)
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn m(&self) -> usize {
        self.data.m()
    }

    pub fn basis_dim(&self) -> usize {
        self.basis_grid.ncols()
    }

    pub fn x_tilde_alpha(&self, i: usize, alpha: &[f64]) -> f64 {
        self.x_tilde.row(i).iter().zip(alpha).map(|(a, b)| a * b).sum()
    }

    /// Treatment points `t̃ᵢ = [t₁ … t_M, Tᵢ]`.
    pub fn bordered_points(&self, i: usize) -> Vec<f64> {
        let mut pts = self.data.grid.clone();
        pts.push(self.data.t_obs[i]);
        pts
    }

    /// `Bᵢ`: basis rows at `t̃ᵢ`, (M+1) × dim.
    pub fn bordered_basis(&self, i: usize) -> DMatrix<f64> {
        let m = self.m();
        let d = self.basis_dim();
        DMatrix::from_fn(m + 1, d, |r, c| {
            if r < m {
                self.basis_grid[(r, c)]
            } else {
                self.basis_obs[(i, c)]
            }
        })
    }

    /// φ evaluated on the grid for coefficient vector `eta`.
    pub fn phi_grid(&self, eta: &[f64]) -> DVector<f64> {
        &self.basis_grid * DVector::from_column_slice(eta)
    }

    pub fn phi_obs(&self, i: usize, eta: &[f64]) -> f64 {
        self.basis_obs.row(i).iter().zip(eta).map(|(a, b)| a * b).sum()
    }

    /// Grid covariance Σ_S.
    pub fn grid_cov(&self, params: &KernelParams) -> DMatrix<f64> {
        kernel_cov(&self.data.grid, None, params).expect("validated kernel inputs")
    }

    /// Mean of unit `i`'s trajectory on the grid and at `T_i` under atom `eta`.
    pub fn unit_means(&self, i: usize, eta: &[f64], alpha: &[f64]) -> (DVector<f64>, f64) {
        let xa = self.x_tilde_alpha(i, alpha);
        let mut grid = self.phi_grid(eta);
        grid.add_scalar_mut(xa);
        (grid, self.phi_obs(i, eta) + xa)
    }

    /// Conditional moments of unit `i`'s grid trajectory given its observed
    /// mediator, under an explicit atom `eta`.
    pub fn moments_with_atom(
        &self,
        i: usize,
        sigma_s: &DMatrix<f64>,
        params: &KernelParams,
        eta: &[f64],
        alpha: &[f64],
    ) -> ConditionalMoments {
        let (mg, mt) = self.unit_means(i, eta, alpha);
        condition_on_observed(
            &self.data.grid,
            sigma_s,
            params,
            self.data.t_obs[i],
            self.data.s_obs[i],
            &mg,
            mt,
        )
    }
}

/// Conditional moments `(μ̃ᵢ, Σ̃ᵢ)` of unit `i` under its current cluster.
pub fn conditional_moments(problem: &Problem, mediator: &MediatorState, i: usize) -> Result<ConditionalMoments> {
    mediator.kernel.validate()?;
    if i >= problem.n() {
        return Err(PscError::invalid(format!("unit index {i} out of range")));
    }
    let sigma_s = problem.grid_cov(&mediator.kernel);
    let eta = mediator.clusters.atom(mediator.clusters.z[i]);
    Ok(problem.moments_with_atom(i, &sigma_s, &mediator.kernel, eta, &mediator.alpha))
}
