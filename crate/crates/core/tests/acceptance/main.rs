//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL ...` line.
//!
//! Criteria 6–9 refit hundreds of simulated datasets and are ignored by
//! default. Run them with
//! `cargo test -p psc-core --test acceptance -- --ignored --nocapture --test-threads=1`.
//! Their study reports are written as JSON under the cargo target tmpdir;
//! set `PSC_REUSE_STUDIES=1` to judge saved reports without refitting.

mod estimand_oracle;
mod fixture;
mod identities;
mod marginal;
mod rho_shape;
mod studies;

use psc_core::simgen::Scenario;

/// Mediator GP variance used to generate every acceptance dataset.
pub const SIGMA_S2: f64 = 0.25;

pub fn base_scenario() -> Scenario {
    Scenario {
        sigma_s2: SIGMA_S2,
        ..Scenario::default()
    }
}

/// Written to the stdout handle directly so the line survives test capture.
pub fn report(n: u32, pass: bool, detail: &str) {
    use std::io::Write;
    let line = format!("criterion {n}: {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
}
