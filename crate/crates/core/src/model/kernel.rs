use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{PscError, Result};

/// Squared-exponential kernel `K(t, t') = σ_S² exp(-(t - t')² / ρ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub rho: f64,
    pub sigma_s2: f64,
}

impl KernelParams {
    pub fn new(rho: f64, sigma_s2: f64) -> Result<Self> {
        let k = Self { rho, sigma_s2 };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(PscError::invalid(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.sigma_s2 > 0.0 && self.sigma_s2.is_finite()) {
            return Err(PscError::invalid(format!(
                "sigma_s2 must be positive, got {}",
                self.sigma_s2
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn eval(&self, t: f64, tp: f64) -> f64 {
        let d = t - tp;
        self.sigma_s2 * (-(d * d) / self.rho).exp()
    }

    /// Correlation `K(t, t') / σ_S²`.
    #[inline]
    pub fn corr(&self, t: f64, tp: f64) -> f64 {
        let d = t - tp;
        (-(d * d) / self.rho).exp()
    }
}

/// Covariance over `grid`, optionally bordered by one extra point appended
/// as the last row and column.
pub fn kernel_cov(grid: &[f64], extra_point: Option<f64>, params: &KernelParams) -> Result<DMatrix<f64>> {
    params.validate()?;
    if grid.is_empty() {
        return Err(PscError::invalid("kernel grid is empty"));
    }
    if grid.iter().chain(extra_point.iter()).any(|v| !v.is_finite()) {
        return Err(PscError::invalid("kernel inputs must be finite"));
    }
    let pts: Vec<f64> = grid.iter().copied().chain(extra_point).collect();
    let n = pts.len();
    Ok(DMatrix::from_fn(n, n, |i, j| params.eval(pts[i], pts[j])))
}

/// `K(t, grid)` as a column vector.
pub fn kernel_cross(t: f64, grid: &[f64], params: &KernelParams) -> DVector<f64> {
    DVector::from_iterator(grid.len(), grid.iter().map(|&g| params.eval(t, g)))
}
