use nalgebra::DMatrix;

use crate::error::{PscError, Result};

/// Observed `(Y, S, T, X)` rows plus the treatment grid on which potential
/// mediator trajectories are represented.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub s_obs: Vec<f64>,
    pub t_obs: Vec<f64>,
    /// n × p covariates, without an intercept column.
    pub x: DMatrix<f64>,
    pub grid: Vec<f64>,
}

/// Minimum number of units accepted by the sampler.
pub const MIN_UNITS: usize = 2;

impl Dataset {
    pub fn new(
        y: Vec<f64>,
        s_obs: Vec<f64>,
        t_obs: Vec<f64>,
        x: DMatrix<f64>,
        grid: Vec<f64>,
    ) -> Result<Self> {
        let d = Self {
            y,
            s_obs,
            t_obs,
            x,
            grid,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn m(&self) -> usize {
        self.grid.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if self.s_obs.len() != n || self.t_obs.len() != n || self.x.nrows() != n {
            return Err(PscError::invalid(format!(
                "length mismatch: y={}, s={}, t={}, x rows={}",
                n,
                self.s_obs.len(),
                self.t_obs.len(),
                self.x.nrows()
            )));
        }
        if self.grid.is_empty() {
            return Err(PscError::invalid("treatment grid is empty"));
        }
        if self.grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(PscError::invalid("treatment grid must be strictly increasing"));
        }
        let finite = self
            .y
            .iter()
            .chain(&self.s_obs)
            .chain(&self.t_obs)
            .chain(self.x.iter())
            .chain(&self.grid)
            .all(|v| v.is_finite());
        if !finite {
            return Err(PscError::invalid("dataset contains missing or non-finite values"));
        }
        Ok(())
    }

    /// Units whose treatment lies further than one grid spacing from the
    /// nearest grid point.
    pub fn far_from_grid(&self) -> Vec<usize> {
        let spacing = if self.grid.len() > 1 {
            (self.grid[self.grid.len() - 1] - self.grid[0]) / (self.grid.len() - 1) as f64
        } else {
            0.0
        };
        self.t_obs
            .iter()
            .enumerate()
            .filter(|(_, &t)| {
                let nearest = self
                    .grid
                    .iter()
                    .map(|g| (g - t).abs())
                    .fold(f64::INFINITY, f64::min);
                nearest > spacing
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// Covariate row with a leading intercept, as used by the mediator model.
    pub fn x_tilde(&self, i: usize) -> Vec<f64> {
        let mut row = Vec::with_capacity(self.p() + 1);
        row.push(1.0);
        row.extend(self.x.row(i).iter());
        row
    }

    pub fn x_dot(&self, i: usize, coef: &[f64]) -> f64 {
        self.x.row(i).iter().zip(coef).map(|(a, b)| a * b).sum()
    }

    /// Sample quantile with linear interpolation (type 7).
    pub fn treatment_quantile(&self, q: f64) -> f64 {
        quantile(&self.t_obs, q)
    }
}

pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// `m` equally spaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    if m == 1 {
        return vec![lo];
    }
    (0..m)
        .map(|k| lo + (hi - lo) * k as f64 / (m - 1) as f64)
        .collect()
}
