//! The collapsed ρ target against brute-force integration of the grid
//! trajectories, for one- and two-point grids.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use psc_core::config::{MediatorBasisConfig, ModelConfig, OutcomeBasisConfig};
use psc_core::mediator::{ClusterState, MediatorState};
use psc_core::model::{Dataset, KernelParams, Problem};
use psc_core::outcome::OutcomeState;
use psc_core::rho::log_marginal_rho;

use crate::report;

struct Instance {
    problem: Problem,
    mediator: MediatorState,
    outcome: OutcomeState,
}

fn instance(grid: Vec<f64>, n: usize, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    let t: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * (i as f64 + 0.3) / n as f64).collect();
    let x = DMatrix::from_fn(n, 1, |_, _| normal());
    let s: Vec<f64> = (0..n).map(|_| normal()).collect();
    let y: Vec<f64> = (0..n).map(|_| 2.0 * normal()).collect();
    let data = Dataset::new(y, s, t, x, grid).unwrap();
    let config = ModelConfig {
        mediator_basis: MediatorBasisConfig {
            segments: 2,
            intercept: true,
            knots: Some(vec![0.0]),
        },
        outcome_basis: OutcomeBasisConfig::Polynomial { degree: 1 },
        truncation: 3,
        ..ModelConfig::default()
    };
    let problem = Problem::from_config(data, &config).unwrap();
    let mut clusters = ClusterState::new(n, 3, 3, 1.0);
    clusters.xi[1] = vec![0.3, 0.8, 0.2];
    clusters.xi[2] = vec![-0.5, 1.5, 1.0];
    for i in 0..n {
        clusters.z[i] = i % 3;
    }
    let mediator = MediatorState {
        kernel: KernelParams::new(1.0, 0.8).unwrap(),
        alpha: vec![0.2, -0.4],
        clusters,
    };
    let outcome = OutcomeState {
        delta: vec![0.1, 0.5],
        gamma: vec![0.3],
        zeta: vec![0.9, -0.3, 0.6],
        sigma2: 0.5,
    };
    Instance {
        problem,
        mediator,
        outcome,
    }
}

fn ln_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mean).powi(2) / var)
}

/// `log Π_i ∫ N(Ỹᵢ; βᵢᵀs, σ²) N(s; μ̃ᵢ, Σ̃ᵢ) ds` by the trapezoid rule on a
/// box of ±9 conditional standard deviations.
fn brute_force(inst: &Instance, rho: f64) -> f64 {
    let p = &inst.problem;
    let med = &inst.mediator;
    let out = &inst.outcome;
    let grid = &p.data.grid;
    let m = grid.len();
    let s2s = med.kernel.sigma_s2;
    let k = |a: f64, b: f64| s2s * (-(a - b).powi(2) / rho).exp();
    let mut total = 0.0;
    for i in 0..p.n() {
        let t = p.data.t_obs[i];
        let x = p.data.x[(i, 0)];
        let eta = med.clusters.atom(med.clusters.z[i]);
        let xa = med.alpha[0] + med.alpha[1] * x;
        let mean = |tt: f64| p.model.mediator_basis.eval(tt, eta) + xa;
        let kx = DVector::from_fn(m, |g, _| k(grid[g], t));
        let kgg = DMatrix::from_fn(m, m, |a, b| k(grid[a], grid[b]));
        let mu = DVector::from_fn(m, |g, _| mean(grid[g])) + &kx * ((p.data.s_obs[i] - mean(t)) / s2s);
        let sig = &kgg - &kx * kx.transpose() / s2s;
        let beta: Vec<f64> = grid.iter().map(|&tp| out.zeta[0] + out.zeta[1] * t + out.zeta[2] * tp).collect();
        let y_tilde = p.data.y[i] - (out.delta[0] + out.delta[1] * t) - out.gamma[0] * x;
        let integral = if m == 1 {
            let sd = sig[(0, 0)].sqrt();
            let pts = 4001;
            let h = 18.0 * sd / (pts - 1) as f64;
            (0..pts)
                .map(|j| {
                    let s = mu[0] - 9.0 * sd + h * j as f64;
                    let w = if j == 0 || j == pts - 1 { 0.5 } else { 1.0 };
                    w * h * (ln_normal(y_tilde, beta[0] * s, out.sigma2) + ln_normal(s, mu[0], sig[(0, 0)])).exp()
                })
                .sum::<f64>()
        } else {
            let inv = sig.clone().try_inverse().unwrap();
            let det = sig.determinant();
            let sd = [sig[(0, 0)].sqrt(), sig[(1, 1)].sqrt()];
            let pts = 601;
            let h = [18.0 * sd[0] / (pts - 1) as f64, 18.0 * sd[1] / (pts - 1) as f64];
            let mut acc = 0.0;
            for a in 0..pts {
                let s0 = mu[0] - 9.0 * sd[0] + h[0] * a as f64;
                let wa = if a == 0 || a == pts - 1 { 0.5 } else { 1.0 };
                for b in 0..pts {
                    let s1 = mu[1] - 9.0 * sd[1] + h[1] * b as f64;
                    let wb = if b == 0 || b == pts - 1 { 0.5 } else { 1.0 };
                    let d = [s0 - mu[0], s1 - mu[1]];
                    let quad = inv[(0, 0)] * d[0] * d[0] + 2.0 * inv[(0, 1)] * d[0] * d[1] + inv[(1, 1)] * d[1] * d[1];
                    let ln_s = -0.5 * quad - 0.5 * det.ln() - (2.0 * std::f64::consts::PI).ln();
                    let ln_y = ln_normal(y_tilde, beta[0] * s0 + beta[1] * s1, out.sigma2);
                    acc += wa * wb * (ln_s + ln_y).exp();
                }
            }
            acc * h[0] * h[1]
        };
        total += integral.ln();
    }
    total + p.model.priors.rho.ln_density(rho)
}

#[test]
fn criterion_3_marginalization_matches_quadrature() {
    let start = std::time::Instant::now();
    let rhos = [0.3, 0.6, 1.0, 1.7, 3.0];
    let cases: [(Vec<f64>, usize, u64); 4] = [
        (vec![0.2], 5, 1),
        (vec![-0.4], 10, 2),
        (vec![-0.8, 0.7], 5, 3),
        (vec![-0.7, 0.6], 10, 4),
    ];
    let mut worst: f64 = 0.0;
    for (grid, n, seed) in cases {
        let inst = instance(grid, n, seed);
        let diffs: Vec<f64> = rhos
            .iter()
            .map(|&rho| log_marginal_rho(&inst.problem, &inst.mediator, &inst.outcome, rho).unwrap() - brute_force(&inst, rho))
            .collect();
        let spread = diffs.iter().cloned().fold(f64::MIN, f64::max) - diffs.iter().cloned().fold(f64::MAX, f64::min);
        eprintln!("  M={} n={n}: spread of (closed form - quadrature) over rho {spread:.2e}", inst.problem.m());
        worst = worst.max(spread);
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-2 && elapsed.as_secs() < 60;
    report(3, pass, &format!("max spread {worst:.2e} (<= 1e-2), {elapsed:.1?}"));
    assert!(pass);
}
