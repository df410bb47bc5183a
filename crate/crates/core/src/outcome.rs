//! Outcome model `Y = λ(T) + Σ_m β(T, t_m) S(t_m) + Xγ + ε` and its
//! conjugate updates given imputed mediator trajectories.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{BetaForm, Priors};
use crate::dist;
use crate::error::{PscError, Result};
use crate::linalg::CanonicalGaussian;
use crate::model::{OutcomeBasis, Problem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeState {
    /// Coefficients of λ(t) in the outcome basis.
    pub delta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub zeta: Vec<f64>,
    pub sigma2: f64,
}

impl OutcomeState {
    pub fn zeros(j2: usize, p: usize, beta_form: BetaForm) -> Self {
        Self {
            delta: vec![0.0; j2],
            gamma: vec![0.0; p],
            zeta: vec![0.0; beta_form.size()],
            sigma2: 1.0,
        }
    }

    pub fn validate(&self, problem: &Problem) -> Result<()> {
        let ok_dims = self.delta.len() == problem.model.outcome_basis.dim()
            && self.gamma.len() == problem.data.p()
            && self.zeta.len() == problem.model.beta_form.size();
        if !ok_dims {
            return Err(PscError::invalid("outcome state dimensions do not match the model"));
        }
        let finite = self
            .delta
            .iter()
            .chain(&self.gamma)
            .chain(&self.zeta)
            .all(|v| v.is_finite());
        if !finite || !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(PscError::invalid("outcome state must be finite with sigma2 > 0"));
        }
        Ok(())
    }

    /// `Y_i - λ(T_i) - X_i γ`.
    pub fn y_tilde(&self, problem: &Problem) -> Vec<f64> {
        let lam = &problem.lambda_obs * DVector::from_column_slice(&self.delta);
        (0..problem.n())
            .map(|i| problem.data.y[i] - lam[i] - problem.data.x_dot(i, &self.gamma))
            .collect()
    }
}

/// `β(t, t_m)` over the grid.
pub fn beta_row(form: BetaForm, zeta: &[f64], t: f64, grid: &[f64]) -> DVector<f64> {
    DVector::from_iterator(grid.len(), grid.iter().map(|&tp| form.eval(zeta, t, tp)))
}

/// `βᵢ = (β(Tᵢ, t₁), …, β(Tᵢ, t_M))` stacked as an n × M matrix.
pub fn beta_matrix(problem: &Problem, zeta: &[f64]) -> DMatrix<f64> {
    let form = problem.model.beta_form;
    let grid = &problem.data.grid;
    DMatrix::from_fn(problem.n(), grid.len(), |i, m| form.eval(zeta, problem.data.t_obs[i], grid[m]))
}

/// `λ(t) + Σ_m β(t, t_m) s_m + xγ`.
pub fn predict_outcome_mean(
    problem: &Problem,
    outcome: &OutcomeState,
    t: f64,
    s: &[f64],
    x: &[f64],
) -> f64 {
    predict_with(
        &problem.model.outcome_basis,
        problem.model.beta_form,
        &problem.data.grid,
        outcome,
        t,
        s,
        x,
    )
}

pub fn predict_with(
    basis: &OutcomeBasis,
    form: BetaForm,
    grid: &[f64],
    outcome: &OutcomeState,
    t: f64,
    s: &[f64],
    x: &[f64],
) -> f64 {
    let lam = basis.eval(t, &outcome.delta);
    let med: f64 = grid
        .iter()
        .zip(s)
        .map(|(&tp, &sv)| form.eval(&outcome.zeta, t, tp) * sv)
        .sum();
    let cov: f64 = x.iter().zip(&outcome.gamma).map(|(a, b)| a * b).sum();
    lam + med + cov
}

/// `Σ_m β(Tᵢ, t_m) Sᵢ(t_m)` for every unit.
pub fn mediator_contribution(beta: &DMatrix<f64>, aug: &DMatrix<f64>) -> Vec<f64> {
    (0..beta.nrows()).map(|i| beta.row(i).dot(&aug.row(i))).collect()
}

/// Design `W` with `W_ik = Σ_m f_k(Tᵢ, t_m) Sᵢ(t_m)` so that the mediator
/// term equals `W ζ`.
pub fn zeta_design(problem: &Problem, aug: &DMatrix<f64>) -> DMatrix<f64> {
    let form = problem.model.beta_form;
    let grid = &problem.data.grid;
    let k = form.size();
    DMatrix::from_fn(problem.n(), k, |i, c| {
        let t = problem.data.t_obs[i];
        grid.iter()
            .enumerate()
            .map(|(m, &tp)| form.feature(c, t, tp) * aug[(i, m)])
            .sum()
    })
}

/// Conjugate normal posterior for a regression block `y* = D θ + ε`.
fn regression_posterior(
    design: &DMatrix<f64>,
    target: &DVector<f64>,
    sigma2: f64,
    prior_var: f64,
) -> CanonicalGaussian {
    let d = design.ncols();
    let mut g = CanonicalGaussian::new(d);
    g.precision = design.transpose() * design / sigma2;
    g.shift = design.transpose() * target / sigma2;
    g.add_isotropic_prior(&DVector::zeros(d), prior_var);
    g
}

/// Residual target for one block: `Y` minus every other term.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Block {
    Delta,
    Gamma,
    Zeta,
}

fn partial_residual(problem: &Problem, outcome: &OutcomeState, aug: &DMatrix<f64>, leave_out: Block) -> DVector<f64> {
    let n = problem.n();
    let lam = &problem.lambda_obs * DVector::from_column_slice(&outcome.delta);
    let cov = &problem.data.x * DVector::from_column_slice(&outcome.gamma);
    let beta = beta_matrix(problem, &outcome.zeta);
    let med = mediator_contribution(&beta, aug);
    DVector::from_fn(n, |i, _| {
        let mut r = problem.data.y[i];
        if leave_out != Block::Delta {
            r -= lam[i];
        }
        if leave_out != Block::Gamma {
            r -= cov[i];
        }
        if leave_out != Block::Zeta {
            r -= med[i];
        }
        r
    })
}

/// Full conditional of δ given everything else.
pub fn delta_conditional(problem: &Problem, outcome: &OutcomeState, aug: &DMatrix<f64>, priors: &Priors) -> CanonicalGaussian {
    let target = partial_residual(problem, outcome, aug, Block::Delta);
    regression_posterior(&problem.lambda_obs, &target, outcome.sigma2, priors.delta_var)
}

pub fn gamma_conditional(problem: &Problem, outcome: &OutcomeState, aug: &DMatrix<f64>, priors: &Priors) -> CanonicalGaussian {
    let target = partial_residual(problem, outcome, aug, Block::Gamma);
    regression_posterior(&problem.data.x, &target, outcome.sigma2, priors.gamma_var)
}

pub fn zeta_conditional(problem: &Problem, outcome: &OutcomeState, aug: &DMatrix<f64>, priors: &Priors) -> CanonicalGaussian {
    let target = partial_residual(problem, outcome, aug, Block::Zeta);
    let w = zeta_design(problem, aug);
    regression_posterior(&w, &target, outcome.sigma2, priors.zeta_var)
}

/// Shape and scale of the inverse-gamma full conditional of σ².
pub fn sigma2_conditional(problem: &Problem, outcome: &OutcomeState, aug: &DMatrix<f64>, priors: &Priors) -> (f64, f64) {
    let mut r = partial_residual(problem, outcome, aug, Block::Zeta);
    let beta = beta_matrix(problem, &outcome.zeta);
    for (ri, m) in r.iter_mut().zip(mediator_contribution(&beta, aug)) {
        *ri -= m;
    }
    let (a0, b0) = priors.sigma2;
    (a0 + 0.5 * problem.n() as f64, b0 + 0.5 * r.norm_squared())
}

pub fn update_delta<R: Rng + ?Sized>(
    rng: &mut R,
    problem: &Problem,
    outcome: &mut OutcomeState,
    aug: &DMatrix<f64>,
) -> Result<()> {
    let post = delta_conditional(problem, outcome, aug, &problem.model.priors).factor("delta update")?;
    outcome.delta = post.sample(rng).as_slice().to_vec();
    Ok(())
}

pub fn update_gamma<R: Rng + ?Sized>(
    rng: &mut R,
    problem: &Problem,
    outcome: &mut OutcomeState,
    aug: &DMatrix<f64>,
) -> Result<()> {
    if problem.data.p() == 0 {
        return Ok(());
    }
    let post = gamma_conditional(problem, outcome, aug, &problem.model.priors).factor("gamma update")?;
    outcome.gamma = post.sample(rng).as_slice().to_vec();
    Ok(())
}

pub fn update_zeta<R: Rng + ?Sized>(
    rng: &mut R,
    problem: &Problem,
    outcome: &mut OutcomeState,
    aug: &DMatrix<f64>,
) -> Result<()> {
    let post = zeta_conditional(problem, outcome, aug, &problem.model.priors).factor("zeta update")?;
    outcome.zeta = post.sample(rng).as_slice().to_vec();
    Ok(())
}

pub fn update_sigma2<R: Rng + ?Sized>(
    rng: &mut R,
    problem: &Problem,
    outcome: &mut OutcomeState,
    aug: &DMatrix<f64>,
) -> Result<()> {
    let (a, b) = sigma2_conditional(problem, outcome, aug, &problem.model.priors);
    if !(b > 0.0 && b.is_finite()) {
        return Err(PscError::numerical("sigma2 update", format!("scale {b} is not positive")));
    }
    outcome.sigma2 = dist::inv_gamma(rng, a, b);
    Ok(())
}
