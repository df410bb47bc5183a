//! A small fixed conditioning set shared by the oracle checks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use psc_core::config::{BetaForm, MediatorBasisConfig, ModelConfig, OutcomeBasisConfig, Priors, RhoPrior};
use psc_core::mediator::{ClusterState, MediatorState};
use psc_core::model::{Dataset, KernelParams, Problem};
use psc_core::outcome::OutcomeState;
use psc_core::rng::chain_rng;

pub const GRID: [f64; 4] = [-1.0, -0.3, 0.4, 1.0];

pub struct Fixture {
    pub problem: Problem,
    pub mediator: MediatorState,
    pub outcome: OutcomeState,
    pub aug: DMatrix<f64>,
}

pub fn priors() -> Priors {
    Priors {
        rho: RhoPrior::Gamma { shape: 3.0, rate: 2.0 },
        sigma_s2: (3.0, 2.0),
        sigma2: (2.5, 1.5),
        alpha_var: 2.0,
        xi_mean: 0.2,
        xi_var: 1.5,
        delta_var: 3.0,
        gamma_var: 0.8,
        zeta_var: 1.2,
        kappa: (2.0, 1.0),
    }
}

/// `n` units, two covariates, a one-knot monotone basis with intercept
/// (dimension 3), quadratic λ and four DP components with three occupied.
pub fn fixture(n: usize, seed: u64) -> Fixture {
    let mut rng = chain_rng(seed, 0);
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    // Treatments sit between grid points so bordered matrices stay well
    // conditioned.
    let t: Vec<f64> = (0..n).map(|i| -0.85 + 1.7 * (i as f64 + 0.5) / n as f64 + 0.03).collect();
    let x = DMatrix::from_fn(n, 2, |_, _| normal());
    let y: Vec<f64> = (0..n).map(|_| 1.5 * normal()).collect();
    // Each unit's grid values and observed mediator are drawn jointly from
    // the fixture's own process, so conditionals keep most of their mass
    // inside the monotone cone.
    let atoms = [vec![0.0; 3], vec![-0.2, 0.4, 0.1], vec![0.3, 1.1, 0.6]];
    let alpha = [0.1, 0.4, -0.3];
    let (rho, sigma_s2) = (0.9, 0.7);
    let mut aug = DMatrix::zeros(n, GRID.len());
    let mut s = vec![0.0; n];
    for i in 0..n {
        let mut pts = GRID.to_vec();
        pts.push(t[i]);
        let l = se_cov(&pts, rho, sigma_s2).cholesky().unwrap().l();
        let z = DVector::from_fn(pts.len(), |_, _| normal());
        let xa = alpha[0] + alpha[1] * x[(i, 0)] + alpha[2] * x[(i, 1)];
        let v = DVector::from_iterator(pts.len(), pts.iter().map(|&p| phi(&atoms[i % 3], p) + xa)) + l * z;
        for g in 0..GRID.len() {
            aug[(i, g)] = v[g];
        }
        s[i] = v[GRID.len()];
    }
    let data = Dataset::new(y, s, t, x, GRID.to_vec()).unwrap();
    let config = ModelConfig {
        mediator_basis: MediatorBasisConfig {
            segments: 2,
            intercept: true,
            knots: Some(vec![KNOT]),
        },
        outcome_basis: OutcomeBasisConfig::Polynomial { degree: 2 },
        beta_form: BetaForm::Linear,
        truncation: 4,
        priors: priors(),
    };
    let problem = Problem::from_config(data, &config).unwrap();
    let mut clusters = ClusterState::new(n, 4, problem.basis_dim(), 1.3);
    clusters.xi[1] = atoms[1].clone();
    clusters.xi[2] = atoms[2].clone();
    clusters.xi[3] = vec![0.0, 0.5, 0.5];
    for i in 0..n {
        clusters.z[i] = i % 3;
    }
    let mediator = MediatorState {
        kernel: KernelParams::new(rho, sigma_s2).unwrap(),
        alpha: alpha.to_vec(),
        clusters,
    };
    let outcome = OutcomeState {
        delta: vec![0.2, 0.8, -0.1],
        gamma: vec![-0.4, 0.25],
        zeta: vec![0.5, -0.2, 0.3],
        sigma2: 0.6,
    };
    Fixture {
        problem,
        mediator,
        outcome,
        aug,
    }
}

/// Squared-exponential covariance over arbitrary points, built directly.
pub fn se_cov(points: &[f64], rho: f64, sigma_s2: f64) -> DMatrix<f64> {
    DMatrix::from_fn(points.len(), points.len(), |a, b| {
        sigma_s2 * (-(points[a] - points[b]).powi(2) / rho).exp()
    })
}

pub const KNOT: f64 = 0.05;

/// φ(t) for the one-knot basis: `d(t) = (t, (t-κ)₊)` times `A⁻¹` gives
/// `b(t) = (t - (t-κ)₊, (t-κ)₊)`, so η₁ and η₂ are the two slopes.
pub fn phi(eta: &[f64], t: f64) -> f64 {
    let knot = KNOT;
    let tail = (t - knot).max(0.0);
    eta[0] + eta[1] * (t - tail) + eta[2] * tail
}

pub fn sample_mean(draws: &[DVector<f64>]) -> DVector<f64> {
    let mut m = DVector::zeros(draws[0].len());
    for d in draws {
        m += d;
    }
    m / draws.len() as f64
}

pub fn sample_cov(draws: &[DVector<f64>]) -> DMatrix<f64> {
    let m = sample_mean(draws);
    let k = m.len();
    let mut c = DMatrix::zeros(k, k);
    for d in draws {
        let r = d - &m;
        c.ger(1.0, &r, &r, 1.0);
    }
    c / (draws.len() as f64 - 1.0)
}
