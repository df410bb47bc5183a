use nalgebra::{DMatrix, DVector};

use super::kernel::{kernel_cross, KernelParams};

/// Mean and covariance of a unit's grid trajectory given its observed
/// mediator value: `μ̃ = m(t) + k (S - m(T)) / σ_S²`,
/// `Σ̃ = Σ_S - k kᵀ / σ_S²` with `k = K(T, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalMoments {
    pub mu_tilde: DVector<f64>,
    pub sigma_tilde: DMatrix<f64>,
}

/// Gaussian conditioning of the GP grid values on the single observed point.
///
/// `sigma_s` is the grid covariance Σ_S, `mean_grid` the prior mean on the
/// grid and `mean_at_t` the prior mean at the observed treatment.
pub fn condition_on_observed(
    grid: &[f64],
    sigma_s: &DMatrix<f64>,
    params: &KernelParams,
    t_obs: f64,
    s_obs: f64,
    mean_grid: &DVector<f64>,
    mean_at_t: f64,
) -> ConditionalMoments {
    let k = kernel_cross(t_obs, grid, params);
    let resid = (s_obs - mean_at_t) / params.sigma_s2;
    let mu_tilde = mean_grid + &k * resid;
    let mut sigma_tilde = sigma_s.clone();
    sigma_tilde.ger(-1.0 / params.sigma_s2, &k, &k, 1.0);
    // Restore exact symmetry lost to rounding.
    let m = sigma_tilde.nrows();
    for i in 0..m {
        for j in 0..i {
            let v = 0.5 * (sigma_tilde[(i, j)] + sigma_tilde[(j, i)]);
            sigma_tilde[(i, j)] = v;
            sigma_tilde[(j, i)] = v;
        }
    }
    ConditionalMoments {
        mu_tilde,
        sigma_tilde,
    }
}

/// Per-unit terms of the collapsed likelihood of `Ỹ` after integrating the
/// grid trajectory out of `Ỹ = βᵀS + ε`, `S ~ N(μ̃, Σ̃)`.
///
/// Returns
/// `-½ log(1 + βᵀΣ̃β/σ²) - ½ [μ̃ᵀΣ̃⁻¹μ̃ - qᵀ(ββᵀ/σ² + Σ̃⁻¹)⁻¹q]`
/// with `q = Ỹβ/σ² + Σ̃⁻¹μ̃`. Expanding the rank-one inverse reduces the
/// bracket to `(m² - 2Ỹm - Ỹ² s/σ²) / (σ² + s)` with `m = βᵀμ̃` and
/// `s = βᵀΣ̃β`, so Σ̃ never has to be inverted.
#[inline]
pub fn collapsed_unit_term(beta_mu: f64, beta_sigma_beta: f64, y_tilde: f64, sigma2: f64) -> f64 {
    let s = beta_sigma_beta.max(0.0);
    let m = beta_mu;
    let bracket = (m * m - 2.0 * y_tilde * m - y_tilde * y_tilde * s / sigma2) / (sigma2 + s);
    -0.5 * (s / sigma2).ln_1p() - 0.5 * bracket
}

/// `βᵀ Σ β`.
pub fn quad_form(beta: &DVector<f64>, sigma: &DMatrix<f64>) -> f64 {
    (beta.transpose() * sigma * beta)[(0, 0)]
}
