//! Principal-strata exposure–response curves `E[Y(t) | a < g(S) < b]` and
//! treatment contrasts, computed per posterior draw with Bayesian-bootstrap
//! covariate weights and Monte-Carlo integration over trajectories.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist;
use crate::engine::Draw;
use crate::error::{PscError, Result};
use crate::linalg::{psd_factor, standard_normal_vector};
use crate::model::Problem;
use crate::outcome::predict_with;
use crate::rng::{derive, stream_rng, ChainRng};

/// `max S - min S` over the grid.
pub fn g_range(s: &[f64]) -> f64 {
    let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = s.iter().cloned().fold(f64::INFINITY, f64::min);
    max - min
}

pub fn g_mean(s: &[f64]) -> f64 {
    s.iter().sum::<f64>() / s.len() as f64
}

/// `∫|S'(t)| dt` for the piecewise-linear interpolant: `Σ |s_{m+1} - s_m|`.
pub fn g_avg_abs_deriv(s: &[f64]) -> f64 {
    s.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// Summary of a trajectory that defines the strata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GFunction {
    Range,
    Mean,
    AvgAbsDeriv,
    #[serde(skip)]
    Custom(CustomG),
}

/// A user-supplied summary, identified by name.
#[derive(Clone)]
pub struct CustomG {
    pub name: String,
    pub f: fn(&[f64]) -> f64,
}

impl std::fmt::Debug for CustomG {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "CustomG({})", self.name)
    }
}

impl PartialEq for CustomG {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

impl GFunction {
    pub fn eval(&self, s: &[f64]) -> f64 {
        match self {
            GFunction::Range => g_range(s),
            GFunction::Mean => g_mean(s),
            GFunction::AvgAbsDeriv => g_avg_abs_deriv(s),
            GFunction::Custom(c) => (c.f)(s),
        }
    }
}

/// The stratum `a < g(S) < b`; a missing bound is infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StratumSpec {
    pub g: GFunction,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub b: Option<f64>,
}

impl StratumSpec {
    pub fn new(g: GFunction, a: f64, b: f64) -> Result<Self> {
        let spec = Self {
            g,
            a: a.is_finite().then_some(a),
            b: b.is_finite().then_some(b),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The vacuous stratum containing every trajectory.
    pub fn everyone() -> Self {
        Self {
            g: GFunction::Mean,
            a: None,
            b: None,
        }
    }

    pub fn lower(&self) -> f64 {
        self.a.unwrap_or(f64::NEG_INFINITY)
    }

    pub fn upper(&self) -> f64 {
        self.b.unwrap_or(f64::INFINITY)
    }

    pub fn validate(&self) -> Result<()> {
        if self.a.is_some_and(f64::is_nan) || self.b.is_some_and(f64::is_nan) || !(self.lower() < self.upper()) {
            return Err(PscError::invalid(format!(
                "stratum bounds must satisfy a < b, got ({}, {})",
                self.lower(),
                self.upper()
            )));
        }
        Ok(())
    }

    pub fn is_vacuous(&self) -> bool {
        self.a.is_none() && self.b.is_none()
    }

    pub fn contains(&self, s: &[f64]) -> bool {
        if self.is_vacuous() {
            return true;
        }
        let v = self.g.eval(s);
        self.lower() < v && v < self.upper()
    }
}

/// `E[Y(t1) - Y(t0) | stratum]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectSpec {
    pub label: String,
    pub stratum: StratumSpec,
    pub t1: f64,
    pub t0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimandOptions {
    /// Trajectories sampled per unit and draw.
    pub n_mc: usize,
    /// Sample fresh trajectories from the whole mixture instead of the
    /// unit's current cluster.
    pub mixture: bool,
    pub seed: u64,
}

impl Default for EstimandOptions {
    fn default() -> Self {
        Self {
            n_mc: 200,
            mixture: false,
            seed: 1,
        }
    }
}

/// Escalation factor applied once when no sampled trajectory falls in the stratum.
pub const MC_ESCALATION: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsCurve {
    pub t: Vec<f64>,
    pub mean: Vec<f64>,
    pub lo95: Vec<f64>,
    pub hi95: Vec<f64>,
    /// Average share of units flagged in the stratum per usable draw.
    pub avg_stratum_fraction: f64,
    /// Draws with no unit in the stratum.
    pub missing_draws: usize,
    /// (draw, unit) pairs dropped because no trajectory was accepted even
    /// after escalation.
    pub failed_units: usize,
    /// Per-draw curve values; `None` for missing draws.
    pub per_draw: Vec<Option<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSummary {
    pub label: String,
    pub mean: f64,
    pub sd: f64,
    pub lo95: f64,
    pub hi95: f64,
    pub missing_draws: usize,
    pub per_draw: Vec<Option<f64>>,
}

/// Per-draw curves for several strata sharing weights and trajectories.
struct DrawResult {
    curves: Vec<Option<Vec<f64>>>,
    fractions: Vec<f64>,
    failed: Vec<usize>,
}

/// Trajectory sampler for one draw: `N(m(grid, Xᵢ), Σ_S)` under the unit's
/// cluster, or under a cluster drawn from π when `mixture` is set.
struct TrajectorySampler<'a> {
    problem: &'a Problem,
    draw: &'a Draw,
    factor: DMatrix<f64>,
    /// φ_c on the grid for every cluster.
    phi: Vec<DVector<f64>>,
    mixture: bool,
}

impl<'a> TrajectorySampler<'a> {
    fn new(problem: &'a Problem, draw: &'a Draw, mixture: bool) -> Self {
        let cov = problem.grid_cov(&draw.mediator.kernel);
        let cl = &draw.mediator.clusters;
        Self {
            problem,
            draw,
            factor: psd_factor(&cov),
            phi: (0..cl.truncation()).map(|c| problem.phi_grid(cl.atom(c))).collect(),
            mixture,
        }
    }

    fn sample(&self, rng: &mut ChainRng, i: usize) -> DVector<f64> {
        let cl = &self.draw.mediator.clusters;
        let c = if self.mixture {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = cl.pi.len() - 1;
            for (k, p) in cl.pi.iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = k;
                    break;
                }
            }
            pick
        } else {
            cl.z[i]
        };
        let xa = self.problem.x_tilde_alpha(i, &self.draw.mediator.alpha);
        let z = standard_normal_vector(rng, self.phi[c].len());
        let mut s = &self.factor * z;
        s += &self.phi[c];
        s.add_scalar_mut(xa);
        s
    }
}

fn bootstrap_weights(key: u64, n: usize) -> Vec<f64> {
    dist::flat_dirichlet(&mut stream_rng(key, u64::MAX), n)
}

fn draw_curves(problem: &Problem, draw: &Draw, specs: &[&StratumSpec], t_query: &[f64], opts: &EstimandOptions, key: u64) -> DrawResult {
    let n = problem.n();
    let model = &problem.model;
    let grid = &problem.data.grid;
    let omega = bootstrap_weights(key, n);
    let sampler = TrajectorySampler::new(problem, draw, opts.mixture);
    let flags: Vec<Vec<bool>> = specs
        .iter()
        .map(|sp| (0..n).map(|i| sp.contains(draw.aug.row(i).transpose().as_slice())).collect())
        .collect();
    let mut num = vec![vec![0.0; t_query.len()]; specs.len()];
    let mut den = vec![0.0; specs.len()];
    let mut failed = vec![0; specs.len()];
    for i in 0..n {
        if !flags.iter().any(|f| f[i]) {
            continue;
        }
        let mut rng = stream_rng(key, i as u64);
        let mut trajs: Vec<DVector<f64>> = (0..opts.n_mc).map(|_| sampler.sample(&mut rng, i)).collect();
        let x: Vec<f64> = problem.data.x.row(i).iter().copied().collect();
        for (k, sp) in specs.iter().enumerate() {
            if !flags[k][i] {
                continue;
            }
            let mut sbar = accepted_mean(&trajs, sp);
            if sbar.is_none() && trajs.len() == opts.n_mc {
                let extra = opts.n_mc * (MC_ESCALATION - 1);
                trajs.extend((0..extra).map(|_| sampler.sample(&mut rng, i)));
                sbar = accepted_mean(&trajs, sp);
            }
            let Some(sbar) = sbar else {
                failed[k] += 1;
                continue;
            };
            for (q, &t) in t_query.iter().enumerate() {
                let pred = predict_with(&model.outcome_basis, model.beta_form, grid, &draw.outcome, t, sbar.as_slice(), &x);
                num[k][q] += omega[i] * pred;
            }
            den[k] += omega[i];
        }
    }
    let curves = (0..specs.len())
        .map(|k| (den[k] > 0.0).then(|| num[k].iter().map(|v| v / den[k]).collect()))
        .collect();
    let fractions = flags
        .iter()
        .map(|f| f.iter().filter(|&&b| b).count() as f64 / n as f64)
        .collect();
    DrawResult {
        curves,
        fractions,
        failed,
    }
}

fn accepted_mean(trajs: &[DVector<f64>], spec: &StratumSpec) -> Option<DVector<f64>> {
    let mut sum: Option<DVector<f64>> = None;
    let mut k = 0usize;
    for s in trajs.iter().filter(|s| spec.contains(s.as_slice())) {
        k += 1;
        match &mut sum {
            Some(acc) => *acc += s,
            None => sum = Some(s.clone()),
        }
    }
    sum.map(|s| s / k as f64)
}

fn draw_key(opts: &EstimandOptions, b: usize) -> u64 {
    derive(opts.seed, b as u64)
}

fn run_draws(problem: &Problem, draws: &[Draw], specs: &[&StratumSpec], t_query: &[f64], opts: &EstimandOptions) -> Result<Vec<DrawResult>> {
    if opts.n_mc == 0 {
        return Err(PscError::invalid("n_mc must be at least 1"));
    }
    if draws.is_empty() {
        return Err(PscError::invalid("no posterior draws"));
    }
    for sp in specs {
        sp.validate()?;
    }
    Ok(draws
        .par_iter()
        .enumerate()
        .map(|(b, d)| draw_curves(problem, d, specs, t_query, opts, draw_key(opts, b)))
        .collect())
}

fn summarize_curve(t_query: &[f64], results: &[DrawResult], k: usize) -> Result<PsCurve> {
    let per_draw: Vec<Option<Vec<f64>>> = results.iter().map(|r| r.curves[k].clone()).collect();
    let usable: Vec<&Vec<f64>> = per_draw.iter().flatten().collect();
    if usable.is_empty() {
        return Err(PscError::EmptyStratum);
    }
    let column = |q: usize| usable.iter().map(|c| c[q]).collect::<Vec<f64>>();
    let mean = (0..t_query.len()).map(|q| crate::stats::mean(&column(q))).collect();
    let lo95 = (0..t_query.len()).map(|q| crate::stats::quantile(&column(q), 0.025)).collect();
    let hi95 = (0..t_query.len()).map(|q| crate::stats::quantile(&column(q), 0.975)).collect();
    let fr: Vec<f64> = results
        .iter()
        .filter(|r| r.curves[k].is_some())
        .map(|r| r.fractions[k])
        .collect();
    Ok(PsCurve {
        t: t_query.to_vec(),
        mean,
        lo95,
        hi95,
        avg_stratum_fraction: crate::stats::mean(&fr),
        missing_draws: per_draw.len() - usable.len(),
        failed_units: results.iter().map(|r| r.failed[k]).sum(),
        per_draw,
    })
}

/// Posterior summary of `E[Y(t) | a < g(S) < b]` at each `t` in `t_query`.
pub fn pce_curve(problem: &Problem, draws: &[Draw], spec: &StratumSpec, t_query: &[f64], opts: &EstimandOptions) -> Result<PsCurve> {
    let results = run_draws(problem, draws, &[spec], t_query, opts)?;
    summarize_curve(t_query, &results, 0)
}

fn summarize_effect(label: &str, per_draw: Vec<Option<f64>>) -> Result<EffectSummary> {
    let vals: Vec<f64> = per_draw.iter().flatten().copied().collect();
    if vals.is_empty() {
        return Err(PscError::EmptyStratum);
    }
    let sd = if vals.len() > 1 { crate::stats::variance(&vals).sqrt() } else { 0.0 };
    Ok(EffectSummary {
        label: label.to_string(),
        mean: crate::stats::mean(&vals),
        sd,
        lo95: crate::stats::quantile(&vals, 0.025),
        hi95: crate::stats::quantile(&vals, 0.975),
        missing_draws: per_draw.len() - vals.len(),
        per_draw,
    })
}

/// Several contrasts computed from shared weights and trajectories.
pub fn effects(problem: &Problem, draws: &[Draw], specs: &[EffectSpec], opts: &EstimandOptions) -> Result<Vec<EffectSummary>> {
    let strata: Vec<&StratumSpec> = specs.iter().map(|e| &e.stratum).collect();
    let mut t_query = Vec::with_capacity(2 * specs.len());
    for e in specs {
        t_query.push(e.t1);
        t_query.push(e.t0);
    }
    let results = run_draws(problem, draws, &strata, &t_query, opts)?;
    specs
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let per_draw = results
                .iter()
                .map(|r| r.curves[k].as_ref().map(|c| c[2 * k] - c[2 * k + 1]))
                .collect();
            summarize_effect(&e.label, per_draw)
        })
        .collect()
}

/// Posterior summary of `E[Y(t1) - Y(t0) | stratum]`, differenced within
/// each draw.
pub fn treatment_effect(
    problem: &Problem,
    draws: &[Draw],
    spec: &StratumSpec,
    t1: f64,
    t0: f64,
    opts: &EstimandOptions,
) -> Result<EffectSummary> {
    let e = EffectSpec {
        label: "effect".into(),
        stratum: spec.clone(),
        t1,
        t0,
    };
    Ok(effects(problem, draws, &[e], opts)?.remove(0))
}

/// Bootstrap-weighted average dose–response `E[Y(t)]`, averaging the
/// prediction over each sampled trajectory. Uses the same weights and
/// trajectory streams as [`pce_curve`].
pub fn dose_response_curve(problem: &Problem, draws: &[Draw], t_query: &[f64], opts: &EstimandOptions) -> Result<PsCurve> {
    if opts.n_mc == 0 || draws.is_empty() {
        return Err(PscError::invalid("need n_mc >= 1 and at least one draw"));
    }
    let model = &problem.model;
    let grid = &problem.data.grid;
    let n = problem.n();
    let results: Vec<DrawResult> = draws
        .par_iter()
        .enumerate()
        .map(|(b, draw)| {
            let key = draw_key(opts, b);
            let omega = bootstrap_weights(key, n);
            let sampler = TrajectorySampler::new(problem, draw, opts.mixture);
            let mut curve = vec![0.0; t_query.len()];
            for i in 0..n {
                let mut rng = stream_rng(key, i as u64);
                let x: Vec<f64> = problem.data.x.row(i).iter().copied().collect();
                let mut unit = vec![0.0; t_query.len()];
                for _ in 0..opts.n_mc {
                    let s = sampler.sample(&mut rng, i);
                    for (q, &t) in t_query.iter().enumerate() {
                        unit[q] += predict_with(&model.outcome_basis, model.beta_form, grid, &draw.outcome, t, s.as_slice(), &x);
                    }
                }
                for q in 0..t_query.len() {
                    curve[q] += omega[i] * unit[q] / opts.n_mc as f64;
                }
            }
            DrawResult {
                curves: vec![Some(curve)],
                fractions: vec![1.0],
                failed: vec![0],
            }
        })
        .collect();
    summarize_curve(t_query, &results, 0)
}
