//! Rank-one determinant and inverse identities behind the collapsed ρ
//! target, and the closed form the sampler evaluates, on random instances.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use psc_core::config::{MediatorBasisConfig, ModelConfig, OutcomeBasisConfig};
use psc_core::mediator::UnitGeometry;
use psc_core::model::{collapsed_unit_term, Dataset, Problem};

use crate::report;

const TOL: f64 = 1e-10;

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.max(f64::MIN_POSITIVE)
}

fn mat_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// Random SPD matrix with eigenvalues in roughly [0.3, 4].
fn random_spd(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = a.qr().q();
    let d = DMatrix::from_diagonal(&DVector::from_fn(m, |_, _| rng.random_range(0.3..4.0)));
    let s = &q * d * q.transpose();
    (&s + s.transpose()) * 0.5
}

fn dense_identities(m: usize, seed: u64) -> Result<(), TestCaseError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = random_spd(&mut rng, m);
    let beta = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mu = DVector::from_fn(m, |_, _| 2.0 * rng.sample::<f64, _>(StandardNormal));
    let y: f64 = 3.0 * rng.sample::<f64, _>(StandardNormal);
    let s2: f64 = rng.random_range(0.05..3.0);

    let sigma_inv = sigma.clone().try_inverse().unwrap();
    let bbt = &beta * beta.transpose();
    let post_prec = &bbt / s2 + &sigma_inv;
    let s = (beta.transpose() * &sigma * &beta)[(0, 0)];

    // |ββᵀ/σ² + Σ̃⁻¹| = |Σ̃⁻¹| (1 + βᵀΣ̃β/σ²)
    let lhs = post_prec.determinant().ln();
    let rhs = sigma_inv.determinant().ln() + (s / s2).ln_1p();
    prop_assert!(rel(lhs, rhs, 1.0 + lhs.abs()) < TOL, "determinant: {lhs} vs {rhs}");

    // (ββᵀ/σ² + Σ̃⁻¹)⁻¹ = Σ̃ - Σ̃ββᵀΣ̃ / (σ² + βᵀΣ̃β)
    let direct = post_prec.clone().try_inverse().unwrap();
    let sb = &sigma * &beta;
    let rank_one = &sigma - &sb * sb.transpose() / (s2 + s);
    prop_assert!(mat_rel(&rank_one, &direct) < TOL, "inverse: {}", mat_rel(&rank_one, &direct));

    // The collapsed per-unit term against the dense expression.
    let q = &beta * (y / s2) + &sigma_inv * &mu;
    let quad = (mu.transpose() * &sigma_inv * &mu)[(0, 0)] - (q.transpose() * &direct * &q)[(0, 0)];
    let dense = -0.5 * (s / s2).ln_1p() - 0.5 * quad;
    let closed = collapsed_unit_term(beta.dot(&mu), s, y, s2);
    let scale = 1.0 + (mu.transpose() * &sigma_inv * &mu)[(0, 0)] + (q.transpose() * &direct * &q)[(0, 0)];
    prop_assert!(rel(closed, dense, scale) < TOL, "collapsed term: {closed} vs {dense}");
    Ok(())
}

/// `βᵀμ̃` and `βᵀΣ̃β` from the per-unit geometry against conditioning the
/// bordered kernel directly.
fn geometry_identities(m: usize, seed: u64) -> Result<(), TestCaseError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 3;
    let grid: Vec<f64> = (0..m).map(|k| -1.15 + 2.3 * (k as f64 + rng.random_range(0.2..0.8)) / m as f64).collect();
    let t: Vec<f64> = (0..n).map(|_| rng.random_range(-1.2..1.2)).collect();
    let x = DMatrix::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
    let s_obs: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let data = Dataset::new(vec![0.0; n], s_obs.clone(), t.clone(), x, grid.clone()).unwrap();
    let config = ModelConfig {
        mediator_basis: MediatorBasisConfig {
            segments: 2,
            intercept: true,
            knots: Some(vec![0.1]),
        },
        outcome_basis: OutcomeBasisConfig::Polynomial { degree: 1 },
        ..ModelConfig::default()
    };
    let problem = Problem::from_config(data, &config).unwrap();
    let rho: f64 = rng.random_range(0.2..6.0);
    let sigma_s2: f64 = rng.random_range(0.1..3.0);
    let beta = DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let eta = [rng.random_range(-1.0..1.0), rng.random_range(0.0..2.0), rng.random_range(0.0..2.0)];
    let alpha = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    let geo = UnitGeometry::new(&problem, rho, beta.clone());
    let k = |a: f64, b: f64| sigma_s2 * (-(a - b).powi(2) / rho).exp();
    for i in 0..n {
        let xa = alpha[0] + alpha[1] * problem.data.x[(i, 0)];
        let mean = |tt: f64| problem.model.mediator_basis.eval(tt, &eta) + xa;
        let kx = DVector::from_fn(m, |g, _| k(grid[g], t[i]));
        let kgg = DMatrix::from_fn(m, m, |a, b| k(grid[a], grid[b]));
        let mu = DVector::from_fn(m, |g, _| mean(grid[g])) + &kx * ((s_obs[i] - mean(t[i])) / sigma_s2);
        let sig = &kgg - &kx * kx.transpose() / sigma_s2;
        let b = beta.row(i).transpose();
        let bm = b.dot(&mu);
        let bsb = (b.transpose() * &sig * &b)[(0, 0)];
        let via_geo = geo.beta_mu(i, &eta, xa, s_obs[i]);
        let scale = 1.0 + b.abs().dot(&mu.abs());
        prop_assert!(rel(via_geo, bm, scale) < TOL, "beta mu: {via_geo} vs {bm}");
        let via_q = sigma_s2 * geo.q[i];
        let scale = 1.0 + (b.abs().transpose() * kgg.abs() * b.abs())[(0, 0)];
        prop_assert!(rel(via_q, bsb, scale) < TOL, "beta sigma beta: {via_q} vs {bsb}");
    }
    Ok(())
}

#[test]
fn criterion_2_algebraic_identities() {
    let start = std::time::Instant::now();
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    let dense = runner.run(&(1usize..=10, any::<u64>()), |(m, seed)| dense_identities(m, seed));
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    let geometry = runner.run(&(1usize..=10, any::<u64>()), |(m, seed)| geometry_identities(m, seed));
    let pass = dense.is_ok() && geometry.is_ok();
    let detail = match (&dense, &geometry) {
        (Ok(()), Ok(())) => format!("1000 dense + 1000 kernel instances within {TOL:e}, {:.1?}", start.elapsed()),
        _ => format!("dense: {dense:?}; kernel: {geometry:?}"),
    };
    report(2, pass, &detail);
    assert!(pass);
}
