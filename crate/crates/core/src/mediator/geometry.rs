use nalgebra::{DMatrix, DVector};

use crate::model::{collapsed_unit_term, ConditionalMoments, KernelParams, Problem};

/// Per-unit quantities that depend only on ρ and the β surface.
///
/// With the grid correlation `C` and `rᵢ = corr(Tᵢ, grid)`, the conditional
/// moments given the observed mediator are
/// `μ̃ᵢ = m(grid) + rᵢ (Sᵢ - m(Tᵢ))` and `Σ̃ᵢ = σ_S² (C - rᵢ rᵢᵀ)`, so the
/// collapsed outcome mean is linear in the cluster atom and in α:
/// `βᵢᵀμ̃ᵢ = wᵢᵀ η + aᵢ x̃ᵢα + (βᵢᵀrᵢ) Sᵢ`.
#[derive(Debug, Clone)]
pub struct UnitGeometry {
    pub rho: f64,
    /// Grid correlation matrix `C`, M × M.
    pub corr: DMatrix<f64>,
    /// `rᵢ` rows, n × M.
    pub cross: DMatrix<f64>,
    /// `βᵢ` rows, n × M.
    pub beta: DMatrix<f64>,
    /// `βᵢᵀ(C - rᵢrᵢᵀ)βᵢ`, the collapsed variance in units of σ_S².
    pub q: Vec<f64>,
    /// `wᵢ = Bᵀβᵢ - (βᵢᵀrᵢ) b(Tᵢ)`, n × dim.
    pub w: DMatrix<f64>,
    /// `aᵢ = βᵢᵀ(1 - rᵢ)`.
    pub a: Vec<f64>,
    /// `βᵢᵀrᵢ`.
    pub br: Vec<f64>,
}

impl UnitGeometry {
    pub fn new(problem: &Problem, rho: f64, beta: DMatrix<f64>) -> Self {
        let grid = &problem.data.grid;
        let m = grid.len();
        let n = problem.n();
        let corr = DMatrix::from_fn(m, m, |a, b| {
            let d = grid[a] - grid[b];
            (-(d * d) / rho).exp()
        });
        let cross = DMatrix::from_fn(n, m, |i, g| {
            let d = problem.data.t_obs[i] - grid[g];
            (-(d * d) / rho).exp()
        });
        let cb = &beta * &corr;
        let bg = &beta * &problem.basis_grid;
        let dim = problem.basis_dim();
        let mut q = vec![0.0; n];
        let mut a = vec![0.0; n];
        let mut br = vec![0.0; n];
        let mut w = DMatrix::zeros(n, dim);
        for i in 0..n {
            let bi = beta.row(i);
            let ri = cross.row(i);
            let bri = bi.dot(&ri);
            let bcb = cb.row(i).dot(&bi);
            q[i] = (bcb - bri * bri).max(0.0);
            a[i] = bi.sum() - bri;
            br[i] = bri;
            for c in 0..dim {
                w[(i, c)] = bg[(i, c)] - bri * problem.basis_obs[(i, c)];
            }
        }
        Self {
            rho,
            corr,
            cross,
            beta,
            q,
            w,
            a,
            br,
        }
    }

    /// Same ρ with a new β surface.
    pub fn with_beta(&self, problem: &Problem, beta: DMatrix<f64>) -> Self {
        Self::new(problem, self.rho, beta)
    }

    /// Same β with a new ρ.
    pub fn with_rho(&self, problem: &Problem, rho: f64) -> Self {
        Self::new(problem, rho, self.beta.clone())
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    /// `βᵢᵀμ̃ᵢ` under atom `eta`, where `xa = x̃ᵢα`.
    #[inline]
    pub fn beta_mu(&self, i: usize, eta: &[f64], xa: f64, s_obs: f64) -> f64 {
        let wi: f64 = self.w.row(i).iter().zip(eta).map(|(a, b)| a * b).sum();
        wi + self.a[i] * xa + self.br[i] * s_obs
    }

    /// Collapsed log-likelihood term of unit `i` under atom `eta`.
    #[inline]
    pub fn unit_term(&self, i: usize, eta: &[f64], xa: f64, s_obs: f64, sigma_s2: f64, y_tilde: f64, sigma2: f64) -> f64 {
        collapsed_unit_term(self.beta_mu(i, eta, xa, s_obs), sigma_s2 * self.q[i], y_tilde, sigma2)
    }

    /// `Σ̃ᵢ = σ_S² (C - rᵢrᵢᵀ)`, symmetric by construction.
    pub fn sigma_tilde(&self, i: usize, sigma_s2: f64) -> DMatrix<f64> {
        let m = self.corr.nrows();
        let r = self.cross.row(i);
        DMatrix::from_fn(m, m, |a, b| sigma_s2 * (self.corr[(a, b)] - r[a] * r[b]))
    }

    /// `μ̃ᵢ = m(grid) + rᵢ (Sᵢ - m(Tᵢ))`.
    pub fn mu_tilde(&self, problem: &Problem, i: usize, eta: &[f64], alpha: &[f64]) -> DVector<f64> {
        let (mut mg, mt) = problem.unit_means(i, eta, alpha);
        let resid = problem.data.s_obs[i] - mt;
        for g in 0..mg.len() {
            mg[g] += self.cross[(i, g)] * resid;
        }
        mg
    }

    pub fn moments(&self, problem: &Problem, i: usize, eta: &[f64], alpha: &[f64], sigma_s2: f64) -> ConditionalMoments {
        ConditionalMoments {
            mu_tilde: self.mu_tilde(problem, i, eta, alpha),
            sigma_tilde: self.sigma_tilde(i, sigma_s2),
        }
    }

    pub fn kernel(&self, sigma_s2: f64) -> KernelParams {
        KernelParams {
            rho: self.rho,
            sigma_s2,
        }
    }
}
