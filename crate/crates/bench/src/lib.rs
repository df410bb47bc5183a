//! Shared setup for the sampler benchmarks.

use psc_core::engine::initialize;
use psc_core::rng::{chain_rng, ChainRng};
use psc_core::{generate, sweep, ChainConfig, ChainState, ModelConfig, Problem, Scenario};

/// A default-scenario problem of `n` units and a state a few sweeps past
/// initialisation, so the benchmarks time a typical rather than a cold state.
pub fn warm_state(n: usize) -> (Problem, ChainState, ChainConfig, ChainRng) {
    let (data, _) = generate(&Scenario {
        n,
        seed: 11,
        ..Scenario::default()
    })
    .expect("scenario is valid");
    let problem = Problem::from_config(data, &ModelConfig::default()).expect("problem builds");
    let config = ChainConfig::default();
    let mut rng = chain_rng(config.seed, 0);
    let mut state = initialize(&mut rng, &problem, &config).expect("initialises");
    for _ in 0..20 {
        sweep(&mut rng, &problem, &mut state, &config).expect("sweeps");
    }
    (problem, state, config, rng)
}
