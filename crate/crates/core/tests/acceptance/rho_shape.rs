//! Shape of the ρ posterior: concentration with n, the prior when the
//! mediator is irrelevant, and sharpening as the mediator effect grows.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use psc_core::config::{ModelConfig, RhoPrior};
use psc_core::engine::{initialize, run_from, ChainConfig, ChainState, UpdateFlags};
use psc_core::model::Problem;
use psc_core::rho::{rho_grid, theorem1_check, TruthTarget};
use psc_core::rng::chain_rng;
use psc_core::simgen::{generate, Scenario};
use psc_core::stats;

use crate::{base_scenario, report};

/// Medians of the scaled derivative at ρ* for growing n.
fn concentration() -> (bool, String) {
    let base = Scenario {
        rho_star: 3.0,
        c: 0.25,
        ..base_scenario()
    };
    let ns = [200, 800, 3200];
    let seeds: Vec<u64> = (1..=20).collect();
    let rows = theorem1_check(&base, &ns, &seeds).unwrap();
    let medians: Vec<f64> = ns
        .iter()
        .map(|&n| {
            let v: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| r.scaled_derivative).collect();
            stats::median(&v)
        })
        .collect();
    let pass = medians.windows(2).all(|w| w[1] < w[0]);
    (pass, format!("scaled derivative medians {medians:.4?} at n = {ns:?}"))
}

/// With β ≡ 0 the collapsed likelihood is flat in ρ, so a ρ-only chain
/// must reproduce its prior.
fn prior_recovery() -> (bool, String) {
    let sc = Scenario {
        n: 100,
        c: 0.0,
        seed: 31,
        ..base_scenario()
    };
    let (data, _) = generate(&sc).unwrap();
    let problem = Problem::from_config(data, &ModelConfig::default()).unwrap();
    let updates = UpdateFlags {
        rho: true,
        labels: false,
        kappa: false,
        sticks: false,
        atoms: false,
        alpha: false,
        sigma_s2: false,
        impute: false,
        delta: false,
        gamma: false,
        zeta: false,
        sigma2: false,
    };
    let config = ChainConfig {
        n_iter: 51_000,
        n_burn: 1_000,
        thin: 25,
        seed: 8,
        updates,
        ..ChainConfig::default()
    };
    let mut rng = chain_rng(config.seed, 0);
    let init = initialize(&mut rng, &problem, &config).unwrap();
    let mut outcome = init.outcome.clone();
    outcome.zeta.iter_mut().for_each(|z| *z = 0.0);
    let state = ChainState::from_parts(&problem, init.mediator.clone(), outcome, init.aug.clone(), &config).unwrap();
    let post = run_from(&mut rng, &problem, &config, 0, state).unwrap();
    let chain: Vec<f64> = post.scalar(|d| d.mediator.kernel.rho);
    let RhoPrior::Gamma { shape, rate } = problem.model.priors.rho else {
        unreachable!("default ρ prior is a gamma");
    };
    let gamma = Gamma::new(shape, 1.0 / rate).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(99);
    let reference: Vec<f64> = (0..20_000).map(|_| gamma.sample(&mut r)).collect();
    let (d, p) = stats::ks_two_sample(&chain, &reference);
    let pass = chain.len() == 2000 && p > 0.01;
    (
        pass,
        format!("{} draws vs Gamma({shape}, {rate}): KS D {d:.3} p {p:.3}", chain.len()),
    )
}

#[test]
fn criterion_4_rho_posterior_concentration() {
    let start = std::time::Instant::now();
    let (conc, conc_detail) = concentration();
    eprintln!("  {conc_detail}");
    let (prior, prior_detail) = prior_recovery();
    eprintln!("  {prior_detail}");
    let pass = conc && prior;
    report(4, pass, &format!("{conc_detail}; {prior_detail}; {:.1?}", start.elapsed()));
    assert!(pass);
}

/// Quantile of a density tabulated on an even grid, with the CDF
/// interpolated linearly between midpoints.
fn grid_quantile(rhos: &[f64], weights: &[f64], q: f64) -> f64 {
    let total: f64 = weights.iter().sum();
    let h = rhos[1] - rhos[0];
    let mut cum = 0.0;
    for (k, w) in weights.iter().enumerate() {
        let next = cum + w / total;
        if next >= q {
            let lo = rhos[k] - 0.5 * h;
            return lo + h * (q - cum) / (next - cum);
        }
        cum = next;
    }
    rhos[rhos.len() - 1] + 0.5 * h
}

#[test]
fn criterion_5_rho_posterior_sharpens_with_effect_size() {
    let start = std::time::Instant::now();
    let rhos = rho_grid(0.1, 10.0, 0.1);
    let cs = [0.05, 0.15, 0.25];
    let reps = 100;
    let mut iqrs = Vec::new();
    let mut argmax_at_top = f64::NAN;
    let mut lines = Vec::new();
    for &c in &cs {
        let mut table = DMatrix::zeros(reps, rhos.len());
        for r in 0..reps {
            let sc = Scenario {
                c,
                rho_star: 3.0,
                constant_beta: true,
                seed: 1000 + r as u64,
                ..base_scenario()
            };
            let target = TruthTarget::from_scenario(&sc, ModelConfig::default().priors.rho).unwrap();
            for (k, p) in target.scan(&rhos).iter().enumerate() {
                table[(r, k)] = p.log_density;
            }
        }
        let avg: Vec<f64> = (0..rhos.len()).map(|k| table.column(k).mean()).collect();
        let top = avg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = avg.iter().map(|a| (a - top).exp()).collect();
        let k_max = avg.iter().position(|&a| a == top).unwrap();
        let iqr = grid_quantile(&rhos, &weights, 0.75) - grid_quantile(&rhos, &weights, 0.25);
        lines.push(format!("c={c}: argmax {:.1} IQR {iqr:.3}", rhos[k_max]));
        iqrs.push(iqr);
        argmax_at_top = rhos[k_max];
    }
    for l in &lines {
        eprintln!("  {l}");
    }
    let elapsed = start.elapsed();
    let pass = (argmax_at_top - 3.0).abs() <= 0.5 && iqrs.windows(2).all(|w| w[1] < w[0]) && elapsed.as_secs() < 1800;
    report(5, pass, &format!("{}; {elapsed:.1?}", lines.join("; ")));
    assert!(pass);
}
