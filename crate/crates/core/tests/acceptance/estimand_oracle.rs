//! Stratum curves at fixed parameters against a direct simulation of the
//! trajectory population.
//!
//! With the parameters held at one value, every draw shares the stratum
//! flags and the curve differs across draws only through the bootstrap
//! weights and Monte-Carlo trajectories. Flat Dirichlet weights are
//! exchangeable, so the expected weighted average over flagged units is
//! their plain average of `E[Y(t) | S ∈ stratum, unit]`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use psc_core::config::{BetaForm, MediatorBasisConfig, ModelConfig, OutcomeBasisConfig};
use psc_core::engine::Draw;
use psc_core::estimands::{pce_curve, EstimandOptions, GFunction, StratumSpec};
use psc_core::mediator::{ClusterState, MediatorState};
use psc_core::model::{Dataset, KernelParams, Problem};
use psc_core::outcome::OutcomeState;
use psc_core::rng::chain_rng;
use psc_core::stats;

use crate::fixture::{phi, priors, se_cov, KNOT};
use crate::report;

const GRID: [f64; 3] = [-0.8, 0.0, 0.8];
const T_QUERY: [f64; 3] = [-0.5, 0.0, 0.6];
const N: usize = 20;
const DRAWS: usize = 2000;
const ORACLE_SIMS: usize = 200_000;

struct Instance {
    problem: Problem,
    draw: Draw,
}

fn instance() -> Instance {
    let mut rng = chain_rng(77, 0);
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    let t: Vec<f64> = (0..N).map(|i| -0.9 + 1.8 * (i as f64 + 0.5) / N as f64).collect();
    let x = DMatrix::from_fn(N, 2, |_, _| normal());
    let s: Vec<f64> = (0..N).map(|_| normal()).collect();
    let y: Vec<f64> = (0..N).map(|_| normal()).collect();
    let aug = DMatrix::from_fn(N, GRID.len(), |_, _| 0.2 + 0.9 * normal());
    let data = Dataset::new(y, s, t, x, GRID.to_vec()).unwrap();
    let config = ModelConfig {
        mediator_basis: MediatorBasisConfig {
            segments: 2,
            intercept: true,
            knots: Some(vec![KNOT]),
        },
        outcome_basis: OutcomeBasisConfig::Polynomial { degree: 1 },
        beta_form: BetaForm::Linear,
        truncation: 3,
        priors: priors(),
    };
    let problem = Problem::from_config(data, &config).unwrap();
    let mut clusters = ClusterState::new(N, 3, problem.basis_dim(), 1.0);
    clusters.xi[1] = vec![-0.3, 0.5, 0.2];
    clusters.xi[2] = vec![0.4, 0.9, 0.7];
    for i in 0..N {
        clusters.z[i] = i % 3;
    }
    let mediator = MediatorState {
        kernel: KernelParams::new(0.9, 0.7).unwrap(),
        alpha: vec![0.1, 0.3, -0.2],
        clusters,
    };
    let outcome = OutcomeState {
        delta: vec![0.4, 1.1],
        gamma: vec![-0.3, 0.2],
        zeta: vec![0.6, -0.4, 0.5],
        sigma2: 0.5,
    };
    let draw = Draw {
        iteration: 0,
        mediator,
        outcome,
        aug,
        rho_accepted: false,
        log_target: 0.0,
    };
    Instance { problem, draw }
}

fn g_value(g: &GFunction, s: &[f64]) -> f64 {
    match g {
        GFunction::Range => {
            let mut v = s.to_vec();
            v.sort_by(f64::total_cmp);
            v[v.len() - 1] - v[0]
        }
        GFunction::Mean => s.iter().sum::<f64>() / s.len() as f64,
        GFunction::AvgAbsDeriv => (1..s.len()).map(|m| (s[m] - s[m - 1]).abs()).sum(),
        GFunction::Custom(_) => unreachable!(),
    }
}

fn in_stratum(spec: &StratumSpec, s: &[f64]) -> bool {
    let v = g_value(&spec.g, s);
    spec.a.is_none_or(|a| v > a) && spec.b.is_none_or(|b| v < b)
}

/// `(value, standard error)` at each query point.
fn oracle(inst: &Instance, spec: &StratumSpec) -> Vec<(f64, f64)> {
    let d = &inst.draw;
    let data = &inst.problem.data;
    let cov = se_cov(&GRID, d.mediator.kernel.rho, d.mediator.kernel.sigma_s2);
    let chol = cov.cholesky().unwrap().l();
    let z = &d.outcome.zeta;
    let flagged: Vec<usize> = (0..N)
        .filter(|&i| in_stratum(spec, d.aug.row(i).transpose().as_slice()))
        .collect();
    assert!(flagged.len() >= 3, "too few flagged units for a meaningful check");
    let mut rng = chain_rng(2024, 1);
    let mut value = vec![0.0; T_QUERY.len()];
    let mut var = vec![0.0; T_QUERY.len()];
    for &i in &flagged {
        let xi = [data.x[(i, 0)], data.x[(i, 1)]];
        let xa = d.mediator.alpha[0] + d.mediator.alpha[1] * xi[0] + d.mediator.alpha[2] * xi[1];
        let eta = d.mediator.clusters.atom(d.mediator.clusters.z[i]);
        let mean = DVector::from_iterator(GRID.len(), GRID.iter().map(|&g| phi(eta, g) + xa));
        let mut preds: Vec<Vec<f64>> = vec![Vec::new(); T_QUERY.len()];
        for _ in 0..ORACLE_SIMS {
            let e = DVector::from_fn(GRID.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
            let s = &mean + &chol * e;
            if !in_stratum(spec, s.as_slice()) {
                continue;
            }
            for (q, &t) in T_QUERY.iter().enumerate() {
                let med: f64 = GRID.iter().zip(s.iter()).map(|(&tp, &sv)| (z[0] + z[1] * t + z[2] * tp) * sv).sum();
                let y = d.outcome.delta[0] + d.outcome.delta[1] * t + d.outcome.gamma[0] * xi[0] + d.outcome.gamma[1] * xi[1] + med;
                preds[q].push(y);
            }
        }
        assert!(preds[0].len() > 1000, "unit {i}: stratum too rare for the oracle");
        for q in 0..T_QUERY.len() {
            value[q] += stats::mean(&preds[q]);
            var[q] += stats::variance(&preds[q]) / preds[q].len() as f64;
        }
    }
    let k = flagged.len() as f64;
    value.iter().zip(&var).map(|(v, s2)| (v / k, s2.sqrt() / k)).collect()
}

#[test]
fn criterion_10_stratum_curves_match_population_oracle() {
    let start = std::time::Instant::now();
    let inst = instance();
    let draws = vec![inst.draw.clone(); DRAWS];
    let opts = EstimandOptions {
        n_mc: 200,
        seed: 5,
        ..EstimandOptions::default()
    };
    let strata = [
        ("range", StratumSpec::new(GFunction::Range, 0.6, 1.6).unwrap()),
        ("mean", StratumSpec::new(GFunction::Mean, -0.1, 0.9).unwrap()),
        ("avg_abs_deriv", StratumSpec::new(GFunction::AvgAbsDeriv, 0.6, 1.8).unwrap()),
    ];
    let mut pass = true;
    let mut worst: f64 = 0.0;
    for (name, spec) in &strata {
        let truth = oracle(&inst, spec);
        let curve = pce_curve(&inst.problem, &draws, spec, &T_QUERY, &opts).unwrap();
        for (q, &(value, oracle_se)) in truth.iter().enumerate() {
            let per: Vec<f64> = curve.per_draw.iter().flatten().map(|c| c[q]).collect();
            let se = stats::variance(&per).sqrt() / (per.len() as f64).sqrt();
            let tol = 3.0 * (oracle_se * oracle_se + se * se).sqrt();
            let err = (curve.mean[q] - value).abs();
            worst = worst.max(err / tol);
            let ok = err <= tol && curve.failed_units == 0;
            eprintln!(
                "  {name} t={:+.1}: estimate {:.4} oracle {value:.4} |diff| {err:.4} tol {tol:.4} {}",
                T_QUERY[q],
                curve.mean[q],
                if ok { "ok" } else { "FAIL" }
            );
            pass &= ok;
        }
    }
    report(
        10,
        pass,
        &format!("3 summaries x 3 doses, worst |diff|/tol {worst:.2}, {:.1?}", start.elapsed()),
    );
    assert!(pass);
}
