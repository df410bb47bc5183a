//! Piecewise-linear bases for the treatment–mediator curve φ(t) and the
//! outcome treatment curve λ(t).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{PscError, Result};

/// Monotone piecewise-linear basis.
///
/// With truncated lines `d(t) = (t, (t-κ₁)₊, …, (t-κ_{J-1})₊)` and the
/// lower-triangular all-ones matrix `A`, the reparametrized basis
/// `b(t) = d(t) A⁻¹` yields `φ(t) = b(t) η`, which is nondecreasing whenever
/// every slope coefficient `η_j` is nonnegative. An optional intercept is
/// stored as column 0 and is left unconstrained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneBasis {
    pub knots: Vec<f64>,
    pub includes_intercept: bool,
}

impl MonotoneBasis {
    pub fn new(knots: Vec<f64>, includes_intercept: bool) -> Result<Self> {
        if knots.windows(2).any(|w| !(w[1] > w[0])) || knots.iter().any(|k| !k.is_finite()) {
            return Err(PscError::invalid("basis knots must be finite and strictly increasing"));
        }
        Ok(Self {
            knots,
            includes_intercept,
        })
    }

    /// Number of linear pieces `J`.
    pub fn segments(&self) -> usize {
        self.knots.len() + 1
    }

    /// Total number of coefficients, including the intercept if present.
    pub fn dim(&self) -> usize {
        self.segments() + usize::from(self.includes_intercept)
    }

    fn offset(&self) -> usize {
        usize::from(self.includes_intercept)
    }

    /// Whether coefficient `k` is restricted to be nonnegative.
    pub fn is_constrained(&self, k: usize) -> bool {
        k >= self.offset()
    }

    /// Truncated-line features `d(t)` (length `J`, no intercept).
    pub fn truncated_lines(&self, t: f64) -> Vec<f64> {
        std::iter::once(t)
            .chain(self.knots.iter().map(|k| (t - k).max(0.0)))
            .collect()
    }

    /// `b(t)`: the design row for coefficient vector η.
    pub fn row(&self, t: f64) -> Vec<f64> {
        let d = self.truncated_lines(t);
        let j = d.len();
        let mut out = Vec::with_capacity(self.dim());
        if self.includes_intercept {
            out.push(1.0);
        }
        // d A⁻¹: A⁻¹ has unit diagonal and -1 on the first subdiagonal.
        for k in 0..j {
            let next = if k + 1 < j { d[k + 1] } else { 0.0 };
            out.push(d[k] - next);
        }
        out
    }

    pub fn eval(&self, t: f64, eta: &[f64]) -> f64 {
        self.row(t).iter().zip(eta).map(|(b, e)| b * e).sum()
    }

    /// Design matrix with one row per point.
    pub fn design(&self, points: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(points.len(), d);
        for (r, &t) in points.iter().enumerate() {
            for (c, v) in self.row(t).into_iter().enumerate() {
                m[(r, c)] = v;
            }
        }
        m
    }

    /// The `J × J` lower-triangular all-ones matrix `A`.
    pub fn transform(&self) -> DMatrix<f64> {
        let j = self.segments();
        DMatrix::from_fn(j, j, |r, c| if c <= r { 1.0 } else { 0.0 })
    }

    /// `A⁻¹`: unit diagonal, -1 on the first subdiagonal.
    pub fn transform_inverse(&self) -> DMatrix<f64> {
        let j = self.segments();
        DMatrix::from_fn(j, j, |r, c| {
            if r == c {
                1.0
            } else if r == c + 1 {
                -1.0
            } else {
                0.0
            }
        })
    }

    /// Knots at the `k/J` quantiles of `values`, `k = 1..J-1`.
    pub fn from_quantiles(values: &[f64], segments: usize, includes_intercept: bool) -> Result<Self> {
        if segments == 0 {
            return Err(PscError::Config("mediator basis needs at least one segment".into()));
        }
        let mut knots: Vec<f64> = (1..segments)
            .map(|k| super::data::quantile(values, k as f64 / segments as f64))
            .collect();
        knots.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        Self::new(knots, includes_intercept)
    }
}

/// Basis for the outcome treatment curve λ(t) (always includes an intercept).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutcomeBasis {
    /// `1, t, (t-κ₁)₊, …`
    Spline { knots: Vec<f64> },
    /// `1, t, …, t^degree`
    Polynomial { degree: usize },
}

impl OutcomeBasis {
    pub fn dim(&self) -> usize {
        match self {
            OutcomeBasis::Spline { knots } => knots.len() + 2,
            OutcomeBasis::Polynomial { degree } => degree + 1,
        }
    }

    pub fn row(&self, t: f64) -> Vec<f64> {
        match self {
            OutcomeBasis::Spline { knots } => {
                let mut r = vec![1.0, t];
                r.extend(knots.iter().map(|k| (t - k).max(0.0)));
                r
            }
            OutcomeBasis::Polynomial { degree } => (0..=*degree).map(|d| t.powi(d as i32)).collect(),
        }
    }

    pub fn eval(&self, t: f64, delta: &[f64]) -> f64 {
        self.row(t).iter().zip(delta).map(|(a, b)| a * b).sum()
    }
}
