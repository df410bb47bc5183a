//! Updates for the potential-mediator model: DP mixture over monotone mean
//! curves, covariate coefficients, and GP kernel parameters.
//!
//! Two families of updates are provided. The `*_augmented` forms condition on
//! imputed trajectories. The `*_collapsed` forms integrate the grid
//! trajectories out given the observed mediator and the outcome, which keeps
//! them well conditioned when the grid covariance is nearly singular.

pub mod augmented;
pub mod clusters;
pub mod geometry;
pub mod kernel_moves;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PscError, Result};
use crate::linalg::CanonicalGaussian;
use crate::model::{KernelParams, Problem};

pub use augmented::{update_alpha, update_atoms, update_sigma_s2, BorderedFactors};
pub use clusters::{
    stick_breaking, update_atoms_collapsed, update_kappa, update_labels, update_stick_weights, ClusterState,
};
pub use geometry::UnitGeometry;
pub use kernel_moves::{collapsed_log_lik, update_rho, update_sigma_s2_collapsed, AdaptiveStep};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediatorState {
    pub kernel: KernelParams,
    /// Coefficients on `[1, X]`.
    pub alpha: Vec<f64>,
    pub clusters: ClusterState,
}

impl MediatorState {
    pub fn validate(&self, problem: &Problem) -> Result<()> {
        self.kernel.validate()?;
        if self.alpha.len() != problem.data.p() + 1 || self.alpha.iter().any(|v| !v.is_finite()) {
            return Err(PscError::invalid("alpha must be finite with p + 1 entries"));
        }
        self.clusters.validate(problem.n(), problem.basis_dim())
    }

    /// Mean `m(Tᵢ, Xᵢ)` of the observed mediator under cluster `c`.
    pub fn observed_mean(&self, problem: &Problem, i: usize, c: usize) -> f64 {
        problem.phi_obs(i, self.clusters.atom(c)) + problem.x_tilde_alpha(i, &self.alpha)
    }
}

/// The outcome-side quantities every collapsed update needs.
#[derive(Clone, Copy)]
pub struct OutcomeView<'a> {
    pub geometry: &'a UnitGeometry,
    /// `Yᵢ - λ(Tᵢ) - Xᵢγ`.
    pub y_tilde: &'a [f64],
    pub sigma2: f64,
}

/// Full conditional of α with the grid trajectories integrated out.
///
/// Each unit contributes the observed mediator
/// `Sᵢ = b(Tᵢ)η + x̃ᵢα + e`, `e ~ N(0, σ_S²)`, and the collapsed outcome
/// `Ỹᵢ = wᵢᵀη + aᵢ x̃ᵢα + (βᵢᵀrᵢ)Sᵢ + u`, `u ~ N(0, σ² + σ_S² qᵢ)`.
pub fn alpha_conditional_collapsed(problem: &Problem, state: &MediatorState, view: OutcomeView) -> CanonicalGaussian {
    let d = problem.data.p() + 1;
    let s2 = state.kernel.sigma_s2;
    let geo = view.geometry;
    let mut g = CanonicalGaussian::new(d);
    for i in 0..problem.n() {
        let eta = state.clusters.atom(state.clusters.z[i]);
        let x = problem.x_tilde.row(i).transpose();
        let v = view.sigma2 + s2 * geo.q[i];
        let ai = geo.a[i];
        let s_obs = problem.data.s_obs[i];
        let wi: f64 = geo.w.row(i).iter().zip(eta).map(|(a, b)| a * b).sum();
        let weight = 1.0 / s2 + ai * ai / v;
        let target = (s_obs - problem.phi_obs(i, eta)) / s2 + ai * (view.y_tilde[i] - wi - geo.br[i] * s_obs) / v;
        g.precision.ger(weight, &x, &x, 1.0);
        g.shift.axpy(target, &x, 1.0);
    }
    g.add_isotropic_prior(&DVector::zeros(d), problem.model.priors.alpha_var);
    g
}

pub fn update_alpha_collapsed<R: Rng + ?Sized>(
    rng: &mut R,
    problem: &Problem,
    state: &mut MediatorState,
    view: OutcomeView,
) -> Result<()> {
    let post = alpha_conditional_collapsed(problem, state, view).factor("alpha update")?;
    state.alpha = post.sample(rng).as_slice().to_vec();
    Ok(())
}
