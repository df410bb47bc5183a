//! Serializable model configuration. Every field has a default, and unknown
//! keys are rejected so that a config file is a complete record of a run.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub mediator_basis: MediatorBasisConfig,
    pub outcome_basis: OutcomeBasisConfig,
    pub beta_form: BetaForm,
    /// Number of stick-breaking components kept in the truncated DP.
    pub truncation: usize,
    pub priors: Priors,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            mediator_basis: MediatorBasisConfig::default(),
            outcome_basis: OutcomeBasisConfig::default(),
            beta_form: BetaForm::Linear,
            truncation: 20,
            priors: Priors::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MediatorBasisConfig {
    /// Number of linear pieces `J`; knots sit at equally spaced quantiles of
    /// the observed treatments unless `knots` is given.
    pub segments: usize,
    pub intercept: bool,
    pub knots: Option<Vec<f64>>,
}

impl Default for MediatorBasisConfig {
    fn default() -> Self {
        Self {
            segments: 5,
            intercept: true,
            knots: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum OutcomeBasisConfig {
    /// Intercept plus a piecewise-linear spline with `size - 1` slope terms.
    Spline { size: usize },
    /// `1, t, ..., t^degree`.
    Polynomial { degree: usize },
}

impl Default for OutcomeBasisConfig {
    fn default() -> Self {
        OutcomeBasisConfig::Spline { size: 4 }
    }
}

/// Functional form of the mediator coefficient surface β(t, t').
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaForm {
    /// ζ0 + ζ1 t + ζ2 t'
    Linear,
    /// ζ0 + ζ1 t + ζ2 t' + ζ3 t² + ζ4 t'²
    Quadratic,
}

impl BetaForm {
    pub fn size(self) -> usize {
        match self {
            BetaForm::Linear => 3,
            BetaForm::Quadratic => 5,
        }
    }

    #[inline]
    pub fn feature(self, k: usize, t: f64, tp: f64) -> f64 {
        match k {
            0 => 1.0,
            1 => t,
            2 => tp,
            3 => t * t,
            4 => tp * tp,
            _ => unreachable!("beta feature index out of range"),
        }
    }

    pub fn eval(self, zeta: &[f64], t: f64, tp: f64) -> f64 {
        (0..self.size()).map(|k| zeta[k] * self.feature(k, t, tp)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum RhoPrior {
    /// Gamma(shape, rate).
    Gamma { shape: f64, rate: f64 },
    /// Improper flat prior on (0, ∞).
    Flat,
}

impl RhoPrior {
    pub fn ln_density(&self, rho: f64) -> f64 {
        match *self {
            RhoPrior::Gamma { shape, rate } => crate::dist::ln_gamma_pdf(rho, shape, rate),
            RhoPrior::Flat => {
                if rho > 0.0 {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn mean(&self) -> Option<f64> {
        match *self {
            RhoPrior::Gamma { shape, rate } => Some(shape / rate),
            RhoPrior::Flat => None,
        }
    }

    pub fn sd(&self) -> Option<f64> {
        match *self {
            RhoPrior::Gamma { shape, rate } => Some(shape.sqrt() / rate),
            RhoPrior::Flat => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Priors {
    pub rho: RhoPrior,
    /// InvGamma(shape, scale) on the kernel variance.
    pub sigma_s2: (f64, f64),
    /// InvGamma(shape, scale) on the outcome residual variance.
    pub sigma2: (f64, f64),
    pub alpha_var: f64,
    pub xi_mean: f64,
    pub xi_var: f64,
    pub delta_var: f64,
    pub gamma_var: f64,
    pub zeta_var: f64,
    /// Gamma(shape, rate) on the DP concentration.
    pub kappa: (f64, f64),
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            rho: RhoPrior::Gamma {
                shape: 2.0,
                rate: 0.5,
            },
            sigma_s2: (1.0, 1.0),
            sigma2: (1.0, 1.0),
            alpha_var: 100.0,
            xi_mean: 0.0,
            xi_var: 25.0,
            delta_var: 100.0,
            gamma_var: 100.0,
            zeta_var: 100.0,
            kappa: (1.0, 1.0),
        }
    }
}

/// Treatment grid used for the trajectories. Explicit `values` win over
/// `range`; without either the grid spans the 5% to 95% quantiles of the
/// observed treatments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub points: usize,
    pub range: Option<(f64, f64)>,
    pub values: Option<Vec<f64>>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            points: 10,
            range: None,
            values: None,
        }
    }
}

impl GridConfig {
    pub fn resolve(&self, t_obs: &[f64]) -> crate::Result<Vec<f64>> {
        if let Some(v) = &self.values {
            return Ok(v.clone());
        }
        if self.points < 2 {
            return Err(crate::PscError::Config("grid needs at least 2 points".into()));
        }
        let (lo, hi) = match self.range {
            Some(r) => r,
            None => {
                if t_obs.is_empty() {
                    return Err(crate::PscError::Config("cannot derive a grid without treatments".into()));
                }
                (crate::stats::quantile(t_obs, 0.05), crate::stats::quantile(t_obs, 0.95))
            }
        };
        if !(hi > lo) {
            return Err(crate::PscError::Config(format!("grid range ({lo}, {hi}) is empty")));
        }
        Ok(crate::model::data::linspace(lo, hi, self.points))
    }
}

/// Everything that defines a run, as read from one JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub model: ModelConfig,
    pub chain: crate::engine::ChainConfig,
    pub estimands: crate::estimands::EstimandOptions,
}

impl RunConfig {
    pub fn from_json(text: &str) -> crate::Result<Self> {
        serde_json::from_str(text).map_err(|e| crate::PscError::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> crate::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| crate::PscError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
