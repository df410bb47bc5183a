//! Conditional updates of α, σ_S² and the atoms given imputed trajectories,
//! using the bordered vector `S̃ᵢ = [Sᵢ(t₁), …, Sᵢ(t_M), Sᵢ]`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::clusters::{atom_prior_draw, truncated_gaussian_gibbs, ATOM_SWEEPS};
use super::MediatorState;
use crate::dist;
use crate::error::{PscError, Result};
use crate::linalg::{cholesky_jittered, CanonicalGaussian};
use crate::model::{kernel_cov, KernelParams, Problem};

/// Inverses of the bordered correlation matrices `Σ_{K,i} = Σ_{S,i} / σ_S²`.
#[derive(Debug, Clone)]
pub struct BorderedFactors {
    pub precision: Vec<DMatrix<f64>>,
}

impl BorderedFactors {
    pub fn new(problem: &Problem, rho: f64) -> Result<Self> {
        let params = KernelParams::new(rho, 1.0)?;
        let precision = (0..problem.n())
            .map(|i| {
                let k = kernel_cov(&problem.data.grid, Some(problem.data.t_obs[i]), &params)?;
                let ctx = format!("bordered covariance of unit {i}");
                Ok(cholesky_jittered(&k, 1.0, &ctx)?.chol.inverse())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { precision })
    }
}

fn bordered_values(problem: &Problem, aug: &DMatrix<f64>, i: usize) -> DVector<f64> {
    let m = problem.m();
    DVector::from_fn(m + 1, |r, _| if r < m { aug[(i, r)] } else { problem.data.s_obs[i] })
}

/// α conditional with precision `Σᵢ x̃ᵢᵀx̃ᵢ (1ᵀΣ_{S,i}⁻¹1) + I/v_α`.
pub fn alpha_conditional(
    problem: &Problem,
    state: &MediatorState,
    aug: &DMatrix<f64>,
    factors: &BorderedFactors,
) -> CanonicalGaussian {
    let d = problem.data.p() + 1;
    let s2 = state.kernel.sigma_s2;
    let mut g = CanonicalGaussian::new(d);
    for i in 0..problem.n() {
        let p = &factors.precision[i];
        let ones = DVector::from_element(p.nrows(), 1.0);
        let p1 = p * &ones;
        let eta = state.clusters.atom(state.clusters.z[i]);
        let resid = bordered_values(problem, aug, i) - problem.bordered_basis(i) * DVector::from_column_slice(eta);
        let x = problem.x_tilde.row(i).transpose();
        g.precision.ger(ones.dot(&p1) / s2, &x, &x, 1.0);
        g.shift.axpy(p1.dot(&resid) / s2, &x, 1.0);
    }
    g.add_isotropic_prior(&DVector::zeros(d), problem.model.priors.alpha_var);
    g
}

pub fn update_alpha<R: Rng + ?Sized>(
    rng: &mut R,
    problem: &Problem,
    state: &mut MediatorState,
    aug: &DMatrix<f64>,
    factors: &BorderedFactors,
) -> Result<()> {
    let post = alpha_conditional(problem, state, aug, factors).factor("alpha update")?;
    state.alpha = post.sample(rng).as_slice().to_vec();
    Ok(())
}

/// Inverse-gamma parameters `(a₀ + n(M+1)/2, b₀ + ½ Σᵢ rᵢᵀΣ_{K,i}⁻¹rᵢ)`.
pub fn sigma_s2_conditional(
    problem: &Problem,
    state: &MediatorState,
    aug: &DMatrix<f64>,
    factors: &BorderedFactors,
) -> (f64, f64) {
    let (a0, b0) = problem.model.priors.sigma_s2;
    let mut quad = 0.0;
    for i in 0..problem.n() {
        let eta = state.clusters.atom(state.clusters.z[i]);
        let mut r = bordered_values(problem, aug, i) - problem.bordered_basis(i) * DVector::from_column_slice(eta);
        r.add_scalar_mut(-problem.x_tilde_alpha(i, &state.alpha));
        quad += (r.transpose() * &factors.precision[i] * &r)[(0, 0)];
    }
    let n = problem.n() as f64;
    let m = problem.m() as f64;
    (a0 + 0.5 * n * (m + 1.0), b0 + 0.5 * quad)
}

pub fn update_sigma_s2<R: Rng + ?Sized>(
    rng: &mut R,
    problem: &Problem,
    state: &mut MediatorState,
    aug: &DMatrix<f64>,
    factors: &BorderedFactors,
) -> Result<()> {
    let (a, b) = sigma_s2_conditional(problem, state, aug, factors);
    if !(b > 0.0 && b.is_finite()) {
        return Err(PscError::numerical("sigma_s2 update", format!("scale {b} is not positive")));
    }
    state.kernel.sigma_s2 = dist::inv_gamma(rng, a, b);
    Ok(())
}

/// Untruncated conditional of atom `c`: precision
/// `Σ_ξ⁻¹ + Σ_{i: zᵢ=c} Bᵢᵀ Σ_{S,i}⁻¹ Bᵢ`.
pub fn atom_conditional(
    problem: &Problem,
    state: &MediatorState,
    aug: &DMatrix<f64>,
    factors: &BorderedFactors,
    c: usize,
) -> CanonicalGaussian {
    let d = problem.basis_dim();
    let s2 = state.kernel.sigma_s2;
    let mut g = CanonicalGaussian::new(d);
    for i in (0..problem.n()).filter(|&i| state.clusters.z[i] == c) {
        let b = problem.bordered_basis(i);
        let bp = b.transpose() * &factors.precision[i];
        let mut target = bordered_values(problem, aug, i);
        target.add_scalar_mut(-problem.x_tilde_alpha(i, &state.alpha));
        g.precision += &bp * &b / s2;
        g.shift += &bp * target / s2;
    }
    let pr = &problem.model.priors;
    g.add_isotropic_prior(&DVector::from_element(d, pr.xi_mean), pr.xi_var);
    g
}

pub fn update_atoms<R: Rng + ?Sized>(
    rng: &mut R,
    problem: &Problem,
    state: &mut MediatorState,
    aug: &DMatrix<f64>,
    factors: &BorderedFactors,
) -> Result<()> {
    let counts = state.clusters.counts();
    let basis = &problem.model.mediator_basis;
    for c in 1..state.clusters.truncation() {
        state.clusters.xi[c] = if counts[c] == 0 {
            atom_prior_draw(rng, problem)
        } else {
            let g = atom_conditional(problem, state, aug, factors, c);
            truncated_gaussian_gibbs(rng, &g, &state.clusters.xi[c], |k| basis.is_constrained(k), ATOM_SWEEPS)?
        };
    }
    Ok(())
}
