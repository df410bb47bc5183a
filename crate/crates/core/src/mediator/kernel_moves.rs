//! Metropolis–Hastings moves for the kernel parameters with the grid
//! trajectories integrated out.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{MediatorState, UnitGeometry};
use crate::dist;
use crate::error::Result;
use crate::model::Problem;

/// Proposals per adaptation window during burn-in.
pub const ADAPT_WINDOW: usize = 50;
pub const TARGET_ACCEPT: (f64, f64) = (0.30, 0.40);

/// Random-walk scale tuned toward the target acceptance band while
/// `adapting` is set, and frozen afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveStep {
    pub step: f64,
    pub adapting: bool,
    pub proposed: u64,
    pub accepted: u64,
    /// Proposals rejected because the target was not finite.
    pub nonfinite: u64,
    window_proposed: usize,
    window_accepted: usize,
}

impl AdaptiveStep {
    pub fn new(step: f64, adapting: bool) -> Self {
        Self {
            step,
            adapting,
            proposed: 0,
            accepted: 0,
            nonfinite: 0,
            window_proposed: 0,
            window_accepted: 0,
        }
    }

    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += u64::from(accepted);
        if !self.adapting {
            return;
        }
        self.window_proposed += 1;
        self.window_accepted += usize::from(accepted);
        if self.window_proposed == ADAPT_WINDOW {
            let rate = self.window_accepted as f64 / ADAPT_WINDOW as f64;
            if rate < TARGET_ACCEPT.0 {
                self.step *= 0.8;
            } else if rate > TARGET_ACCEPT.1 {
                self.step *= 1.25;
            }
            self.window_proposed = 0;
            self.window_accepted = 0;
        }
    }

    /// Stop adapting and reset the acceptance counters.
    pub fn freeze(&mut self) {
        self.adapting = false;
        self.proposed = 0;
        self.accepted = 0;
        self.nonfinite = 0;
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// `Σᵢ log N(Ỹᵢ; βᵢᵀμ̃ᵢ, σ² + βᵢᵀΣ̃ᵢβᵢ)` up to a constant free of ρ, each unit
/// evaluated under its current cluster.
pub fn collapsed_log_lik(problem: &Problem, state: &MediatorState, geo: &UnitGeometry, y_tilde: &[f64], sigma2: f64) -> f64 {
    let s2 = state.kernel.sigma_s2;
    (0..problem.n())
        .map(|i| {
            let eta = state.clusters.atom(state.clusters.z[i]);
            let xa = problem.x_tilde_alpha(i, &state.alpha);
            geo.unit_term(i, eta, xa, problem.data.s_obs[i], s2, y_tilde[i], sigma2)
        })
        .sum()
}

/// Log target of ρ: prior plus the collapsed likelihood at `geo.rho`.
pub fn rho_log_target(problem: &Problem, state: &MediatorState, geo: &UnitGeometry, y_tilde: &[f64], sigma2: f64) -> f64 {
    problem.model.priors.rho.ln_density(geo.rho) + collapsed_log_lik(problem, state, geo, y_tilde, sigma2)
}

/// One random-walk proposal for ρ, truncated to (0, ∞), against the
/// collapsed target. On acceptance `geo` is replaced by the geometry at the
/// new ρ. Returns whether the proposal was accepted.
#[allow(clippy::too_many_arguments)]
pub fn update_rho<R: Rng + ?Sized>(
    rng: &mut R,
    problem: &Problem,
    state: &mut MediatorState,
    geo: &mut UnitGeometry,
    y_tilde: &[f64],
    sigma2: f64,
    step: &mut AdaptiveStep,
) -> Result<bool> {
    let rho = state.kernel.rho;
    let h = step.step;
    let proposal = dist::truncated_normal(rng, rho, h, 0.0, f64::INFINITY);
    let u: f64 = rng.random();
    if !(proposal > 0.0) {
        step.record(false);
        return Ok(false);
    }
    let cand = geo.with_rho(problem, proposal);
    let current = rho_log_target(problem, state, geo, y_tilde, sigma2);
    let proposed = rho_log_target(problem, state, &cand, y_tilde, sigma2);
    if !proposed.is_finite() {
        step.nonfinite += 1;
        step.record(false);
        return Ok(false);
    }
    // The truncated proposal density carries 1 / Φ(ρ/h) from its normalizer.
    let log_ratio = proposed - current + dist::std_normal_cdf(rho / h).ln() - dist::std_normal_cdf(proposal / h).ln();
    let accept = u.ln() < log_ratio;
    if accept {
        state.kernel.rho = proposal;
        *geo = cand;
    }
    step.record(accept);
    Ok(accept)
}

/// Log full conditional of σ_S² with the grid trajectories integrated out,
/// up to a constant.
pub fn sigma_s2_collapsed_target(
    problem: &Problem,
    state: &MediatorState,
    geo: &UnitGeometry,
    y_tilde: &[f64],
    sigma2: f64,
    sigma_s2: f64,
) -> f64 {
    let (a0, b0) = problem.model.priors.sigma_s2;
    let mut total = dist::ln_inv_gamma_pdf(sigma_s2, a0, b0);
    for i in 0..problem.n() {
        let c = state.clusters.z[i];
        let eta = state.clusters.atom(c);
        let xa = problem.x_tilde_alpha(i, &state.alpha);
        let s_obs = problem.data.s_obs[i];
        let r = s_obs - problem.phi_obs(i, eta) - xa;
        total += dist::ln_normal_pdf(r, 0.0, sigma_s2);
        let m = geo.beta_mu(i, eta, xa, s_obs);
        total += dist::ln_normal_pdf(y_tilde[i], m, sigma2 + sigma_s2 * geo.q[i]);
    }
    total
}

/// Random walk on log σ_S² against the collapsed conditional.
pub fn update_sigma_s2_collapsed<R: Rng + ?Sized>(
    rng: &mut R,
    problem: &Problem,
    state: &mut MediatorState,
    geo: &UnitGeometry,
    y_tilde: &[f64],
    sigma2: f64,
    step: &mut AdaptiveStep,
) -> Result<bool> {
    let cur = state.kernel.sigma_s2;
    let z: f64 = rng.sample(StandardNormal);
    let prop = cur * (step.step * z).exp();
    let u: f64 = rng.random();
    let lp = sigma_s2_collapsed_target(problem, state, geo, y_tilde, sigma2, prop);
    if !lp.is_finite() || !(prop > 0.0 && prop.is_finite()) {
        step.nonfinite += 1;
        step.record(false);
        return Ok(false);
    }
    let lc = sigma_s2_collapsed_target(problem, state, geo, y_tilde, sigma2, cur);
    let accept = u.ln() < lp - lc + prop.ln() - cur.ln();
    if accept {
        state.kernel.sigma_s2 = prop;
    }
    step.record(accept);
    Ok(accept)
}
