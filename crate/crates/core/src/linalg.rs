//! Dense linear-algebra helpers shared by the samplers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{PscError, Result};

/// Smallest relative jitter tried before factorizing a covariance.
pub const JITTER_START: f64 = 1e-10;
/// Largest relative jitter; beyond this factorization is reported as failed.
pub const JITTER_MAX: f64 = 1e-4;

/// Cholesky factor obtained after adding `jitter` to the diagonal.
pub struct Jittered {
    pub chol: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

/// Factorize `a + j I` for `j = scale * 1e-10, 1e-9, ..., 1e-4`, returning the
/// first factor that succeeds.
pub fn cholesky_jittered(a: &DMatrix<f64>, scale: f64, context: &str) -> Result<Jittered> {
    let mut rel = JITTER_START;
    while rel <= JITTER_MAX * (1.0 + 1e-9) {
        let jitter = rel * scale;
        let mut m = a.clone();
        for k in 0..m.nrows() {
            m[(k, k)] += jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok(Jittered { chol, jitter });
        }
        rel *= 10.0;
    }
    let min_diag = a.diagonal().iter().cloned().fold(f64::INFINITY, f64::min);
    Err(PscError::numerical(
        context,
        format!(
            "Cholesky failed after jitter {:.1e} (dim {}, scale {scale:.3e}, min diagonal {min_diag:.3e})",
            JITTER_MAX * scale,
            a.nrows()
        ),
    ))
}

/// Lower-triangular factor `L` with `L Lᵀ ≈ a` for a positive semidefinite
/// matrix. Pivots below `tol * max(diag)` are treated as exact zeros, so
/// degenerate directions receive no noise when sampling.
pub fn psd_factor(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let scale = a.diagonal().iter().cloned().fold(0.0_f64, f64::max);
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= tol {
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    l
}

pub fn standard_normal_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Draw from `N(mean, L Lᵀ)` given a lower factor `L`.
pub fn sample_with_factor<R: Rng + ?Sized>(
    rng: &mut R,
    mean: &DVector<f64>,
    factor: &DMatrix<f64>,
) -> DVector<f64> {
    let z = standard_normal_vector(rng, mean.len());
    mean + factor * z
}

/// A Gaussian in canonical form: density ∝ exp(-½ xᵀ Q x + xᵀ h).
#[derive(Debug, Clone)]
pub struct CanonicalGaussian {
    pub precision: DMatrix<f64>,
    pub shift: DVector<f64>,
}

/// A factorized canonical Gaussian, ready to report moments or draw samples.
pub struct FactoredGaussian {
    chol: Cholesky<f64, Dyn>,
    pub mean: DVector<f64>,
}

impl CanonicalGaussian {
    pub fn new(dim: usize) -> Self {
        Self {
            precision: DMatrix::zeros(dim, dim),
            shift: DVector::zeros(dim),
        }
    }

    /// Add an isotropic normal prior `N(mean, var I)`.
    pub fn add_isotropic_prior(&mut self, mean: &DVector<f64>, var: f64) {
        for k in 0..self.shift.len() {
            self.precision[(k, k)] += 1.0 / var;
            self.shift[k] += mean[k] / var;
        }
    }

    pub fn factor(&self, context: &str) -> Result<FactoredGaussian> {
        let chol = Cholesky::new(self.precision.clone()).ok_or_else(|| {
            PscError::numerical(context, "posterior precision is not positive definite")
        })?;
        let mean = chol.solve(&self.shift);
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(PscError::numerical(context, "non-finite posterior mean"));
        }
        Ok(FactoredGaussian { chol, mean })
    }
}

impl FactoredGaussian {
    pub fn covariance(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    pub fn precision_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = standard_normal_vector(rng, self.mean.len());
        // Lᵀ x = z gives Cov(x) = (L Lᵀ)⁻¹.
        let x = self
            .chol
            .l_dirty()
            .tr_solve_lower_triangular(&z)
            .expect("triangular factor is nonsingular");
        &self.mean + x
    }
}

/// Solve `a x = b` for symmetric positive definite `a` using the jitter
/// ladder, returning `x` together with the log-determinant of the jittered `a`.
pub fn spd_solve(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    scale: f64,
    context: &str,
) -> Result<(DMatrix<f64>, f64)> {
    let j = cholesky_jittered(a, scale, context)?;
    let logdet = 2.0 * j.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok((j.chol.solve(b), logdet))
}

pub fn max_abs_asymmetry(a: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..a.nrows() {
        for j in 0..i {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}
