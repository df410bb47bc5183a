//! Univariate distributions used by the Gibbs updates.

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp1, Gamma, StandardNormal};
use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::ln_gamma;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// Φ(x), accurate in the lower tail.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Φ⁻¹(p) for p in (0, 1).
pub fn std_normal_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

pub fn ln_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * d * d / var - 0.5 * var.ln() - LN_SQRT_2PI
}

/// Log density of Gamma(shape, rate).
pub fn ln_gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// Log density of InvGamma(shape, scale).
pub fn ln_inv_gamma_pdf(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
}

/// Draw from Gamma(shape, rate).
pub fn gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    Gamma::new(shape, 1.0 / rate)
        .expect("gamma parameters must be positive")
        .sample(rng)
}

/// Draw from InvGamma(shape, scale), i.e. 1 / Gamma(shape, rate = scale).
pub fn inv_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    1.0 / gamma(rng, shape, scale)
}

pub fn beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    Beta::new(a, b)
        .expect("beta parameters must be positive")
        .sample(rng)
}

/// Dirichlet(1, ..., 1) weights via normalized unit exponentials.
pub fn flat_dirichlet<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

/// Draw from N(mean, sd²) truncated to `[lo, hi]`.
pub fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    debug_assert!(lo < hi);
    let a = (lo - mean) / sd;
    let b = (hi - mean) / sd;
    let z = std_truncated_normal(rng, a, b);
    (mean + sd * z).clamp(lo, hi)
}

/// Standard normal truncated to `[a, b]`.
///
/// Upper tails beyond 0.5 use exponential rejection with the optimal rate;
/// everything else is inverted on the side of zero where Φ keeps full
/// relative precision.
pub fn std_truncated_normal<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    if b == f64::INFINITY && a >= 0.5 {
        return upper_tail_exponential(rng, a);
    }
    if a == f64::NEG_INFINITY && b <= -0.5 {
        return -upper_tail_exponential(rng, -b);
    }
    if a == f64::NEG_INFINITY && b == f64::INFINITY {
        return rng.sample(StandardNormal);
    }
    if a > 0.0 {
        return -inverse_cdf_interval(rng, -b, -a);
    }
    inverse_cdf_interval(rng, a, b)
}

fn upper_tail_exponential<R: Rng + ?Sized>(rng: &mut R, a: f64) -> f64 {
    let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let e: f64 = Exp1.sample(rng);
        let z = a + e / lambda;
        let u: f64 = rng.random();
        if u <= (-0.5 * (z - lambda) * (z - lambda)).exp() {
            return z;
        }
    }
}

fn inverse_cdf_interval<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    let pa = std_normal_cdf(a);
    let pb = std_normal_cdf(b);
    let mut u: f64 = rng.random();
    // Keep u strictly inside (pa, pb) so the quantile stays finite.
    if u == 0.0 {
        u = f64::EPSILON;
    }
    let p = pa + u * (pb - pa);
    let z = std_normal_quantile(p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0));
    z.clamp(a, b)
}

/// Mean of N(mean, sd²) truncated to `[lo, ∞)`.
pub fn truncated_normal_mean_lower(mean: f64, sd: f64, lo: f64) -> f64 {
    let a = (lo - mean) / sd;
    // Mills-ratio form, stable for large a.
    let tail = 0.5 * erfc(a / SQRT_2);
    mean + sd * std_normal_pdf(a) / tail
}
