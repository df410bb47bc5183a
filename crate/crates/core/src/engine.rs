//! Data-augmentation Gibbs sampler: imputation of the potential-mediator
//! trajectories, the sweep over all parameter blocks, burn-in, thinning and
//! multi-chain execution.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RhoPrior;
use crate::error::{PscError, Result};
use crate::linalg::{psd_factor, CanonicalGaussian};
use crate::mediator::{
    self, clusters, collapsed_log_lik, AdaptiveStep, BorderedFactors, ClusterState, MediatorState, OutcomeView,
    UnitGeometry,
};
use crate::model::{KernelParams, Problem};
use crate::outcome::{self, beta_matrix, OutcomeState};
use crate::rng::{chain_rng, stream_rng, ChainRng};

/// Imputed `Sᵢ(t_m)`, n × M.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedMediators {
    pub s: DMatrix<f64>,
}

/// How the mediator-mean blocks (atoms, α, σ_S²) are updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Integrate the grid trajectories out; impute them afterwards.
    Collapsed,
    /// Condition on freshly imputed trajectories.
    Augmented,
}

/// Switches for individual blocks; disabled blocks keep their value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UpdateFlags {
    pub rho: bool,
    pub labels: bool,
    pub kappa: bool,
    pub sticks: bool,
    pub atoms: bool,
    pub alpha: bool,
    pub sigma_s2: bool,
    pub impute: bool,
    pub delta: bool,
    pub gamma: bool,
    pub zeta: bool,
    pub sigma2: bool,
}

impl Default for UpdateFlags {
    fn default() -> Self {
        Self {
            rho: true,
            labels: true,
            kappa: true,
            sticks: true,
            atoms: true,
            alpha: true,
            sigma_s2: true,
            impute: true,
            delta: true,
            gamma: true,
            zeta: true,
            sigma2: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainConfig {
    pub n_iter: usize,
    pub n_burn: usize,
    pub thin: usize,
    pub seed: u64,
    pub n_chains: usize,
    pub scheme: Scheme,
    pub updates: UpdateFlags,
    /// Tune random-walk scales during burn-in.
    pub adapt: bool,
    /// Initial ρ proposal scale; defaults to a quarter of the prior SD.
    pub rho_step: Option<f64>,
    /// Initial scale of the log-σ_S² random walk.
    pub sigma_s2_step: f64,
    /// Starting ρ; defaults to the prior mean (1 under a flat prior).
    pub init_rho: Option<f64>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_iter: 10_000,
            n_burn: 2_000,
            thin: 8,
            seed: 1,
            n_chains: 1,
            scheme: Scheme::Collapsed,
            updates: UpdateFlags::default(),
            adapt: true,
            rho_step: None,
            sigma_s2_step: 0.1,
            init_rho: None,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iter == 0 || self.n_burn >= self.n_iter {
            return Err(PscError::Config(format!(
                "need 0 <= n_burn < n_iter, got n_burn={} n_iter={}",
                self.n_burn, self.n_iter
            )));
        }
        if self.thin == 0 {
            return Err(PscError::Config("thin must be at least 1".into()));
        }
        if self.n_chains == 0 {
            return Err(PscError::Config("n_chains must be at least 1".into()));
        }
        if let Some(h) = self.rho_step {
            if !(h > 0.0 && h.is_finite()) {
                return Err(PscError::Config("rho_step must be positive".into()));
            }
        }
        if !(self.sigma_s2_step > 0.0 && self.sigma_s2_step.is_finite()) {
            return Err(PscError::Config("sigma_s2_step must be positive".into()));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        (self.n_iter - self.n_burn) / self.thin
    }

    fn keeps(&self, k: usize) -> bool {
        k >= self.n_burn && (k + 1 - self.n_burn).is_multiple_of(self.thin)
    }
}

/// One retained iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub iteration: usize,
    pub mediator: MediatorState,
    pub outcome: OutcomeState,
    pub aug: DMatrix<f64>,
    pub rho_accepted: bool,
    /// Collapsed log posterior of ρ at the retained state, up to a constant.
    pub log_target: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub rho_step: f64,
    pub rho_accept_burn: f64,
    pub rho_accept: f64,
    pub sigma_s2_accept: f64,
    pub nonfinite_proposals: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub chain: usize,
    pub seed: u64,
    pub draws: Vec<Draw>,
    pub diagnostics: ChainDiagnostics,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn scalar(&self, f: impl Fn(&Draw) -> f64) -> Vec<f64> {
        self.draws.iter().map(f).collect()
    }
}

/// Complete sampler state of one chain.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub mediator: MediatorState,
    pub outcome: OutcomeState,
    pub aug: DMatrix<f64>,
    pub geometry: UnitGeometry,
    pub rho_step: AdaptiveStep,
    pub sigma_s2_step: AdaptiveStep,
    pub rho_accepted: bool,
}

impl ChainState {
    pub fn from_parts(
        problem: &Problem,
        mediator: MediatorState,
        outcome: OutcomeState,
        aug: DMatrix<f64>,
        config: &ChainConfig,
    ) -> Result<Self> {
        mediator.validate(problem)?;
        outcome.validate(problem)?;
        if aug.nrows() != problem.n() || aug.ncols() != problem.m() {
            return Err(PscError::invalid("augmented mediators must be n × M"));
        }
        let geometry = UnitGeometry::new(problem, mediator.kernel.rho, beta_matrix(problem, &outcome.zeta));
        let rho_step = config
            .rho_step
            .unwrap_or_else(|| 0.25 * problem.model.priors.rho.sd().unwrap_or(mediator.kernel.rho));
        Ok(Self {
            mediator,
            outcome,
            aug,
            geometry,
            rho_step: AdaptiveStep::new(rho_step, config.adapt),
            sigma_s2_step: AdaptiveStep::new(config.sigma_s2_step, config.adapt),
            rho_accepted: false,
        })
    }

    pub fn view<'a>(&'a self, y_tilde: &'a [f64]) -> OutcomeView<'a> {
        OutcomeView {
            geometry: &self.geometry,
            y_tilde,
            sigma2: self.outcome.sigma2,
        }
    }

    /// Collapsed log posterior of ρ at the current state.
    pub fn log_target(&self, problem: &Problem) -> f64 {
        let yt = self.outcome.y_tilde(problem);
        problem.model.priors.rho.ln_density(self.mediator.kernel.rho)
            + collapsed_log_lik(problem, &self.mediator, &self.geometry, &yt, self.outcome.sigma2)
    }
}

/// Draw every unit's grid trajectory from its full conditional
/// `N((ββᵀ/σ² + Σ̃⁻¹)⁻¹(Ỹβ/σ² + Σ̃⁻¹μ̃), (ββᵀ/σ² + Σ̃⁻¹)⁻¹)`.
///
/// The draw is formed as a prior sample `x ~ N(μ̃, Σ̃)` corrected by the
/// rank-one update `x + Σ̃β (Ỹ - βᵀx - ε) / (σ² + βᵀΣ̃β)`, `ε ~ N(0, σ²)`,
/// which has exactly that distribution and needs no inverse of Σ̃.
pub fn impute_mediators<R: Rng + ?Sized>(
    rng: &mut R,
    problem: &Problem,
    mediator: &MediatorState,
    outcome: &OutcomeState,
    geometry: &UnitGeometry,
) -> Result<DMatrix<f64>> {
    let key: u64 = rng.random();
    let y_tilde = outcome.y_tilde(problem);
    let rows: Vec<Result<DVector<f64>>> = (0..problem.n())
        .into_par_iter()
        .map(|i| {
            let mut r = stream_rng(key, i as u64);
            impute_unit(&mut r, problem, mediator, outcome.sigma2, geometry, y_tilde[i], i)
        })
        .collect();
    let mut aug = DMatrix::zeros(problem.n(), problem.m());
    for (i, row) in rows.into_iter().enumerate() {
        aug.set_row(i, &row?.transpose());
    }
    Ok(aug)
}

fn impute_unit<R: Rng + ?Sized>(
    rng: &mut R,
    problem: &Problem,
    mediator: &MediatorState,
    sigma2: f64,
    geometry: &UnitGeometry,
    y_tilde: f64,
    i: usize,
) -> Result<DVector<f64>> {
    let eta = mediator.clusters.atom(mediator.clusters.z[i]);
    let mu = geometry.mu_tilde(problem, i, eta, &mediator.alpha);
    let sigma = geometry.sigma_tilde(i, mediator.kernel.sigma_s2);
    let l = psd_factor(&sigma);
    let z = crate::linalg::standard_normal_vector(rng, mu.len());
    let mut x = mu + l * z;
    let beta = geometry.beta.row(i).transpose();
    let u = &sigma * &beta;
    let s = beta.dot(&u).max(0.0);
    if s > 0.0 {
        let eps: f64 = sigma2.sqrt() * rng.sample::<f64, _>(StandardNormal);
        let gain = (y_tilde - beta.dot(&x) - eps) / (sigma2 + s);
        x.axpy(gain, &u, 1.0);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(PscError::numerical("mediator imputation", format!("non-finite trajectory for unit {i}")));
    }
    Ok(x)
}

/// One full pass over all blocks.
///
/// Order: ρ, labels, κ, stick weights, then either (collapsed) atoms, α,
/// σ_S² and imputation, or (augmented) imputation followed by atoms, α and
/// σ_S²; finally δ, γ, ζ and σ². Every block that integrates the
/// trajectories out runs before they are re-imputed.
pub fn sweep(rng: &mut ChainRng, problem: &Problem, st: &mut ChainState, config: &ChainConfig) -> Result<()> {
    let flags = &config.updates;
    let y_tilde = st.outcome.y_tilde(problem);
    let sigma2 = st.outcome.sigma2;
    st.rho_accepted = false;
    if flags.rho {
        st.rho_accepted = mediator::update_rho(
            rng,
            problem,
            &mut st.mediator,
            &mut st.geometry,
            &y_tilde,
            sigma2,
            &mut st.rho_step,
        )?;
    }
    let view = OutcomeView {
        geometry: &st.geometry,
        y_tilde: &y_tilde,
        sigma2,
    };
    if flags.labels {
        mediator::update_labels(rng, problem, &mut st.mediator, view)?;
    }
    if flags.kappa {
        mediator::update_kappa(rng, &mut st.mediator.clusters, problem.model.priors.kappa);
    }
    if flags.sticks {
        mediator::update_stick_weights(rng, &mut st.mediator.clusters);
    }
    match config.scheme {
        Scheme::Collapsed => {
            if flags.atoms {
                mediator::update_atoms_collapsed(rng, problem, &mut st.mediator, view)?;
            }
            if flags.alpha {
                mediator::update_alpha_collapsed(rng, problem, &mut st.mediator, view)?;
            }
            if flags.sigma_s2 {
                mediator::update_sigma_s2_collapsed(
                    rng,
                    problem,
                    &mut st.mediator,
                    &st.geometry,
                    &y_tilde,
                    sigma2,
                    &mut st.sigma_s2_step,
                )?;
            }
            if flags.impute {
                st.aug = impute_mediators(rng, problem, &st.mediator, &st.outcome, &st.geometry)?;
            }
        }
        Scheme::Augmented => {
            if flags.impute {
                st.aug = impute_mediators(rng, problem, &st.mediator, &st.outcome, &st.geometry)?;
            }
            if flags.atoms || flags.alpha || flags.sigma_s2 {
                let factors = BorderedFactors::new(problem, st.mediator.kernel.rho)?;
                if flags.atoms {
                    mediator::update_atoms(rng, problem, &mut st.mediator, &st.aug, &factors)?;
                }
                if flags.alpha {
                    mediator::update_alpha(rng, problem, &mut st.mediator, &st.aug, &factors)?;
                }
                if flags.sigma_s2 {
                    mediator::update_sigma_s2(rng, problem, &mut st.mediator, &st.aug, &factors)?;
                }
            }
        }
    }
    if flags.delta {
        outcome::update_delta(rng, problem, &mut st.outcome, &st.aug)?;
    }
    if flags.gamma {
        outcome::update_gamma(rng, problem, &mut st.outcome, &st.aug)?;
    }
    if flags.zeta {
        outcome::update_zeta(rng, problem, &mut st.outcome, &st.aug)?;
        st.geometry = st.geometry.with_beta(problem, beta_matrix(problem, &st.outcome.zeta));
    }
    if flags.sigma2 {
        outcome::update_sigma2(rng, problem, &mut st.outcome, &st.aug)?;
    }
    Ok(())
}

fn ridge(design: &DMatrix<f64>, target: &DVector<f64>, prior_var: f64) -> Result<DVector<f64>> {
    let d = design.ncols();
    let mut g = CanonicalGaussian::new(d);
    g.precision = design.transpose() * design;
    g.shift = design.transpose() * target;
    g.add_isotropic_prior(&DVector::zeros(d), prior_var);
    Ok(g.factor("initial least squares")?.mean)
}

/// Starting state: least-squares fits that ignore the strata, ρ at its
/// prior mean, every unit in the flat cluster, and trajectories drawn from
/// the GP conditional with β = 0.
pub fn initialize(rng: &mut ChainRng, problem: &Problem, config: &ChainConfig) -> Result<ChainState> {
    let n = problem.n();
    let pr = &problem.model.priors;
    let s_obs = DVector::from_column_slice(&problem.data.s_obs);
    let alpha = ridge(&problem.x_tilde, &s_obs, pr.alpha_var)?;
    let s_resid = &s_obs - &problem.x_tilde * &alpha;
    let sigma_s2 = (s_resid.norm_squared() / n as f64).max(1e-3);
    let rho = config.init_rho.unwrap_or(match pr.rho {
        RhoPrior::Gamma { .. } => pr.rho.mean().expect("gamma prior has a mean"),
        RhoPrior::Flat => 1.0,
    });
    let mut clusters = ClusterState::new(n, problem.model.truncation, problem.basis_dim(), pr.kappa.0 / pr.kappa.1);
    for c in 1..clusters.truncation() {
        clusters.xi[c] = clusters::atom_prior_draw(rng, problem);
    }
    let mediator = MediatorState {
        kernel: KernelParams::new(rho, sigma_s2)?,
        alpha: alpha.as_slice().to_vec(),
        clusters,
    };

    // Outcome regression treating each trajectory as flat at its observed value.
    let j2 = problem.model.outcome_basis.dim();
    let p = problem.data.p();
    let form = problem.model.beta_form;
    let k = form.size();
    let flat = DMatrix::from_fn(n, problem.m(), |i, _| problem.data.s_obs[i]);
    let w = outcome::zeta_design(problem, &flat);
    let design = DMatrix::from_fn(n, j2 + p + k, |i, c| {
        if c < j2 {
            problem.lambda_obs[(i, c)]
        } else if c < j2 + p {
            problem.data.x[(i, c - j2)]
        } else {
            w[(i, c - j2 - p)]
        }
    });
    let y = DVector::from_column_slice(&problem.data.y);
    let coef = ridge(&design, &y, pr.delta_var.min(pr.gamma_var).min(pr.zeta_var))?;
    let resid = &y - &design * &coef;
    let outcome = OutcomeState {
        delta: coef.rows(0, j2).iter().copied().collect(),
        gamma: coef.rows(j2, p).iter().copied().collect(),
        zeta: coef.rows(j2 + p, k).iter().copied().collect(),
        sigma2: (resid.norm_squared() / n as f64).max(1e-3),
    };

    let zero_beta = UnitGeometry::new(problem, rho, DMatrix::zeros(n, problem.m()));
    let aug = impute_mediators(rng, problem, &mediator, &outcome, &zero_beta)?;
    ChainState::from_parts(problem, mediator, outcome, aug, config)
}

/// Run one chain from the default initialization.
pub fn run_chain(problem: &Problem, config: &ChainConfig, chain: usize) -> Result<PosteriorDraws> {
    config.validate()?;
    let mut rng = chain_rng(config.seed, chain as u64);
    let state = initialize(&mut rng, problem, config)?;
    run_from(&mut rng, problem, config, chain, state)
}

/// Run one chain from an explicit starting state.
pub fn run_from(
    rng: &mut ChainRng,
    problem: &Problem,
    config: &ChainConfig,
    chain: usize,
    mut state: ChainState,
) -> Result<PosteriorDraws> {
    config.validate()?;
    let mut out = PosteriorDraws {
        chain,
        seed: config.seed,
        draws: Vec::with_capacity(config.retained()),
        diagnostics: ChainDiagnostics::default(),
    };
    let report_every = (config.n_iter / 10).max(1);
    for k in 0..config.n_iter {
        if k == config.n_burn {
            out.diagnostics.rho_accept_burn = state.rho_step.acceptance_rate();
            state.rho_step.freeze();
            state.sigma_s2_step.freeze();
        }
        if let Err(e) = sweep(rng, problem, &mut state, config) {
            out.diagnostics = diagnostics(&state, out.diagnostics.rho_accept_burn);
            return Err(PscError::ChainAborted {
                iteration: k,
                source: Box::new(e),
                partial: Box::new(out),
            });
        }
        if config.keeps(k) {
            out.draws.push(Draw {
                iteration: k,
                mediator: state.mediator.clone(),
                outcome: state.outcome.clone(),
                aug: state.aug.clone(),
                rho_accepted: state.rho_accepted,
                log_target: state.log_target(problem),
            });
        }
        if (k + 1) % report_every == 0 {
            log::info!(
                "chain {chain}: iteration {}/{} rho={:.3} accept={:.2} step={:.3} clusters={}",
                k + 1,
                config.n_iter,
                state.mediator.kernel.rho,
                state.rho_step.acceptance_rate(),
                state.rho_step.step,
                state.mediator.clusters.occupied()
            );
        }
    }
    out.diagnostics = diagnostics(&state, out.diagnostics.rho_accept_burn);
    Ok(out)
}

fn diagnostics(state: &ChainState, accept_burn: f64) -> ChainDiagnostics {
    ChainDiagnostics {
        rho_step: state.rho_step.step,
        rho_accept_burn: accept_burn,
        rho_accept: state.rho_step.acceptance_rate(),
        sigma_s2_accept: state.sigma_s2_step.acceptance_rate(),
        nonfinite_proposals: state.rho_step.nonfinite + state.sigma_s2_step.nonfinite,
    }
}

/// Run `config.n_chains` independent chains in parallel.
pub fn run_chains(problem: &Problem, config: &ChainConfig) -> Result<Vec<PosteriorDraws>> {
    config.validate()?;
    (0..config.n_chains)
        .into_par_iter()
        .map(|c| run_chain(problem, config, c))
        .collect()
}
