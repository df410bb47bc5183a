//! Truncated stick-breaking mixture over monotone mean curves. Cluster 0 is
//! pinned to the flat curve η = 0 and never updated.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::{MediatorState, OutcomeView};
use crate::dist;
use crate::error::{PscError, Result};
use crate::linalg::CanonicalGaussian;
use crate::model::Problem;
use crate::rng::stream_rng;

/// Interior coordinate sweeps per truncated-normal atom update.
pub const ATOM_SWEEPS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterState {
    /// Zero-based cluster label per unit.
    pub z: Vec<usize>,
    /// Atom η_c per cluster; `xi[0]` is identically zero.
    pub xi: Vec<Vec<f64>>,
    /// Stick proportions; the last is fixed at 1.
    pub v: Vec<f64>,
    pub pi: Vec<f64>,
    pub kappa: f64,
}

/// `π_c = V_c Π_{j<c} (1 - V_j)`.
pub fn stick_breaking(v: &[f64]) -> Vec<f64> {
    let mut rest = 1.0;
    v.iter()
        .map(|&vc| {
            let p = vc * rest;
            rest *= 1.0 - vc;
            p
        })
        .collect()
}

impl ClusterState {
    /// Everyone in the flat cluster, zero atoms and equal weights.
    pub fn new(n: usize, truncation: usize, dim: usize, kappa: f64) -> Self {
        let v: Vec<f64> = (0..truncation).map(|j| 1.0 / (truncation - j) as f64).collect();
        let pi = stick_breaking(&v);
        Self {
            z: vec![0; n],
            xi: vec![vec![0.0; dim]; truncation],
            v,
            pi,
            kappa,
        }
    }

    pub fn truncation(&self) -> usize {
        self.xi.len()
    }

    pub fn atom(&self, c: usize) -> &[f64] {
        &self.xi[c]
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut n = vec![0; self.truncation()];
        for &c in &self.z {
            n[c] += 1;
        }
        n
    }

    pub fn occupied(&self) -> usize {
        self.counts().iter().filter(|&&k| k > 0).count()
    }

    pub fn validate(&self, n: usize, dim: usize) -> Result<()> {
        let c = self.truncation();
        if self.z.len() != n || self.v.len() != c || self.pi.len() != c {
            return Err(PscError::invalid("cluster state dimensions are inconsistent"));
        }
        if self.z.iter().any(|&k| k >= c) {
            return Err(PscError::invalid("cluster label out of range"));
        }
        if self.xi.iter().any(|x| x.len() != dim) {
            return Err(PscError::invalid("atom dimension does not match the basis"));
        }
        if self.xi[0].iter().any(|&v| v != 0.0) {
            return Err(PscError::invalid("the flat cluster atom must be zero"));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(PscError::invalid("kappa must be positive"));
        }
        Ok(())
    }
}

/// `V_j ~ Beta(1 + n_j, κ + Σ_{l>j} n_l)`, `V_C = 1`.
pub fn update_stick_weights<R: Rng + ?Sized>(rng: &mut R, clusters: &mut ClusterState) {
    let counts = clusters.counts();
    let c = counts.len();
    let mut tail: usize = counts.iter().sum();
    for j in 0..c {
        tail -= counts[j];
        clusters.v[j] = if j + 1 == c {
            1.0
        } else {
            dist::beta(rng, 1.0 + counts[j] as f64, clusters.kappa + tail as f64)
        };
    }
    clusters.pi = stick_breaking(&clusters.v);
}

/// Escobar–West auxiliary-variable draw of κ given the number of occupied
/// clusters, under a Gamma(a, b) prior.
pub fn update_kappa<R: Rng + ?Sized>(rng: &mut R, clusters: &mut ClusterState, prior: (f64, f64)) {
    let n = clusters.z.len() as f64;
    let k = clusters.occupied() as f64;
    clusters.kappa = escobar_west_draw(rng, clusters.kappa, k, n, prior);
}

pub fn escobar_west_draw<R: Rng + ?Sized>(rng: &mut R, kappa: f64, k: f64, n: f64, (a, b): (f64, f64)) -> f64 {
    let eta = dist::beta(rng, kappa + 1.0, n);
    let rate = b - eta.ln();
    let odds = (a + k - 1.0) / (n * rate);
    let u: f64 = rng.random();
    let shape = if u < odds / (1.0 + odds) { a + k } else { a + k - 1.0 };
    dist::gamma(rng, shape, rate)
}

/// Log posterior density of κ given `k` occupied clusters among `n` units,
/// up to a constant: `log Gamma(κ; a, b) + k log κ + log Γ(κ) - log Γ(κ + n)`.
pub fn kappa_ln_density(kappa: f64, k: f64, n: f64, (a, b): (f64, f64)) -> f64 {
    dist::ln_gamma_pdf(kappa, a, b) + k * kappa.ln() + ln_gamma(kappa) - ln_gamma(kappa + n)
}

/// Unnormalized log label probabilities of unit `i` with its grid
/// trajectory integrated out.
pub fn label_log_weights(problem: &Problem, state: &MediatorState, view: OutcomeView, i: usize) -> Vec<f64> {
    let s2 = state.kernel.sigma_s2;
    let xa = problem.x_tilde_alpha(i, &state.alpha);
    let s_obs = problem.data.s_obs[i];
    (0..state.clusters.truncation())
        .map(|c| {
            let pc = state.clusters.pi[c];
            if pc <= 0.0 {
                return f64::NEG_INFINITY;
            }
            let eta = state.clusters.atom(c);
            let r = s_obs - problem.phi_obs(i, eta) - xa;
            pc.ln() - 0.5 * r * r / s2 + view.geometry.unit_term(i, eta, xa, s_obs, s2, view.y_tilde[i], view.sigma2)
        })
        .collect()
}

/// Categorical draw from unnormalized log weights.
pub fn sample_log_categorical<R: Rng + ?Sized>(rng: &mut R, logw: &[f64]) -> Option<usize> {
    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (c, wc) in w.iter().enumerate() {
        if u < *wc {
            return Some(c);
        }
        u -= wc;
    }
    w.iter().rposition(|&x| x > 0.0)
}

pub fn update_labels<R: Rng + ?Sized>(
    rng: &mut R,
    problem: &Problem,
    state: &mut MediatorState,
    view: OutcomeView,
) -> Result<()> {
    let key: u64 = rng.random();
    let st = &*state;
    let z: Vec<Option<usize>> = (0..problem.n())
        .into_par_iter()
        .map(|i| {
            let mut r = stream_rng(key, i as u64);
            sample_log_categorical(&mut r, &label_log_weights(problem, st, view, i))
        })
        .collect();
    for (i, zi) in z.into_iter().enumerate() {
        state.clusters.z[i] =
            zi.ok_or_else(|| PscError::numerical("label update", format!("all weights degenerate for unit {i}")))?;
    }
    Ok(())
}

/// Full conditional of atom `c` before truncation, with the grid
/// trajectories integrated out.
pub fn atom_conditional_collapsed(problem: &Problem, state: &MediatorState, view: OutcomeView, c: usize) -> CanonicalGaussian {
    let d = problem.basis_dim();
    let s2 = state.kernel.sigma_s2;
    let geo = view.geometry;
    let mut g = CanonicalGaussian::new(d);
    for i in (0..problem.n()).filter(|&i| state.clusters.z[i] == c) {
        let b = problem.basis_obs.row(i).transpose();
        let w = geo.w.row(i).transpose();
        let xa = problem.x_tilde_alpha(i, &state.alpha);
        let s_obs = problem.data.s_obs[i];
        let v = view.sigma2 + s2 * geo.q[i];
        g.precision.ger(1.0 / s2, &b, &b, 1.0);
        g.shift.axpy((s_obs - xa) / s2, &b, 1.0);
        g.precision.ger(1.0 / v, &w, &w, 1.0);
        g.shift.axpy((view.y_tilde[i] - geo.a[i] * xa - geo.br[i] * s_obs) / v, &w, 1.0);
    }
    let pr = &problem.model.priors;
    g.add_isotropic_prior(&DVector::from_element(d, pr.xi_mean), pr.xi_var);
    g
}

/// Coordinate-wise Gibbs for a Gaussian in canonical form restricted to
/// nonnegative values on constrained coordinates, started from `start`.
pub fn truncated_gaussian_gibbs<R: Rng + ?Sized>(
    rng: &mut R,
    g: &CanonicalGaussian,
    start: &[f64],
    constrained: impl Fn(usize) -> bool,
    sweeps: usize,
) -> Result<Vec<f64>> {
    let d = start.len();
    let mut x: Vec<f64> = start
        .iter()
        .enumerate()
        .map(|(k, &v)| if constrained(k) { v.max(0.0) } else { v })
        .collect();
    for _ in 0..sweeps {
        for k in 0..d {
            let qkk = g.precision[(k, k)];
            if !(qkk > 0.0) {
                return Err(PscError::numerical("atom update", format!("nonpositive precision on coordinate {k}")));
            }
            let mut h = g.shift[k];
            for j in 0..d {
                if j != k {
                    h -= g.precision[(k, j)] * x[j];
                }
            }
            let mean = h / qkk;
            let sd = qkk.sqrt().recip();
            x[k] = if constrained(k) {
                dist::truncated_normal(rng, mean, sd, 0.0, f64::INFINITY)
            } else {
                mean + sd * rng.sample::<f64, _>(StandardNormal)
            };
            if !x[k].is_finite() {
                return Err(PscError::numerical(
                    "atom update",
                    format!("non-finite draw on coordinate {k} after truncation"),
                ));
            }
        }
    }
    Ok(x)
}

/// Exact draw from the truncated prior of an atom.
pub fn atom_prior_draw<R: Rng + ?Sized>(rng: &mut R, problem: &Problem) -> Vec<f64> {
    let pr = &problem.model.priors;
    let sd = pr.xi_var.sqrt();
    let basis = &problem.model.mediator_basis;
    (0..problem.basis_dim())
        .map(|k| {
            if basis.is_constrained(k) {
                dist::truncated_normal(rng, pr.xi_mean, sd, 0.0, f64::INFINITY)
            } else {
                pr.xi_mean + sd * rng.sample::<f64, _>(StandardNormal)
            }
        })
        .collect()
}

/// Refresh atoms 1..C: occupied ones from their collapsed truncated
/// conditional, empty ones from the truncated prior.
pub fn update_atoms_collapsed<R: Rng + ?Sized>(
    rng: &mut R,
    problem: &Problem,
    state: &mut MediatorState,
    view: OutcomeView,
) -> Result<()> {
    let counts = state.clusters.counts();
    let basis = &problem.model.mediator_basis;
    for c in 1..state.clusters.truncation() {
        state.clusters.xi[c] = if counts[c] == 0 {
            atom_prior_draw(rng, problem)
        } else {
            let g = atom_conditional_collapsed(problem, state, view, c);
            truncated_gaussian_gibbs(rng, &g, &state.clusters.xi[c], |k| basis.is_constrained(k), ATOM_SWEEPS)?
        };
    }
    Ok(())
}
