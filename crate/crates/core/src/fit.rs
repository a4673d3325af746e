//! Least-squares calibration of the model against active-case counts.
//!
//! Free parameters are mapped to `[0, 1]` over their bound envelope and
//! optimised by a projected Levenberg–Marquardt iteration that only accepts
//! steps lowering the loss. Several starts run in parallel and the best one
//! is kept.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use crate::data::ActiveSeries;
use crate::error::{Error, Result};
use crate::model::{ParamName, Params, State};
use crate::ode::{integrate_at, IntegratorConfig};

/// A bound that is either a number or the current value of another parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Value(f64),
    Param(ParamName),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitEntry {
    pub param: ParamName,
    pub initial: f64,
    pub lower: Bound,
    pub upper: Bound,
    pub free: bool,
}

/// Which parameters to estimate, where to start and within which ranges.
/// Parameters without an entry keep their value from the fixed vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSpec {
    pub entries: Vec<FitEntry>,
}

impl FitSpec {
    /// Literature-based starting values and fitting ranges for every
    /// estimated parameter; `Λ`, `σ`, `μ` and `ω` stay fixed.
    pub fn literature() -> FitSpec {
        use Bound::{Param as P, Value as V};
        use ParamName::*;
        let rows = [
            (Theta, 0.0267, V(0.01), V(0.03)),
            (Theta1, 0.0267, V(0.01), P(Theta)),
            (Gamma1, 0.0904, V(0.0544), V(0.1167)),
            (Gamma2, 0.0175, V(0.0066), V(0.0313)),
            (Gamma3, 0.09, V(0.0694), V(0.0974)),
            (Gamma4, 0.095, V(0.0544), V(0.1167)),
            (Gamma5, 0.0275, V(0.0066), V(0.0313)),
            (Varphi, 0.0022, V(0.0011), P(Omega)),
            (Phi, 0.5, P(Eta), V(1.0)),
            (Rho, 0.75, V(0.3), V(1.0)),
            (Eta, 0.45, V(0.3), V(0.6)),
            (Epsilon, 0.1252, V(0.1057), V(0.1472)),
            (Epsilon1, 0.1252, V(0.1057), V(0.1472)),
            (Delta, 0.0015, V(0.0012), V(0.0016)),
            (Delta1, 0.0011, V(0.0), P(Delta)),
            (Beta, 0.9, V(0.0), V(3.0)),
            (Nu, 3.5, V(0.0), V(6.0)),
            (Nu1, 3.5, V(0.0), V(6.0)),
            (Kappa, 1.25, V(1.0), V(6.0)),
        ];
        FitSpec {
            entries: rows
                .into_iter()
                .map(|(param, initial, lower, upper)| FitEntry {
                    param,
                    initial,
                    lower,
                    upper,
                    free: true,
                })
                .collect(),
        }
    }

    /// Spec with only the listed parameters free, each within `[lower, upper]`.
    pub fn only(entries: &[(ParamName, f64, f64, f64)]) -> FitSpec {
        FitSpec {
            entries: entries
                .iter()
                .map(|&(param, initial, lower, upper)| FitEntry {
                    param,
                    initial,
                    lower: Bound::Value(lower),
                    upper: Bound::Value(upper),
                    free: true,
                })
                .collect(),
        }
    }

    /// Parses the TOML form:
    ///
    /// ```toml
    /// [parameters]
    /// theta  = { initial = 0.0267, lower = 0.01, upper = 0.03 }
    /// theta1 = { initial = 0.0267, lower = 0.01, upper = "theta" }
    /// sigma  = { initial = 7.9e-4, free = false }
    /// ```
    pub fn from_toml_str(text: &str) -> std::result::Result<FitSpec, String> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct RawSpec {
            parameters: BTreeMap<String, RawEntry>,
        }
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct RawEntry {
            initial: f64,
            lower: Option<RawBound>,
            upper: Option<RawBound>,
            free: Option<bool>,
        }
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum RawBound {
            Number(f64),
            Name(String),
        }
        let raw: RawSpec = toml::from_str(text).map_err(|e| e.to_string())?;
        let bound = |key: &str, b: Option<RawBound>, which: &str| -> std::result::Result<Option<Bound>, String> {
            match b {
                None => Ok(None),
                Some(RawBound::Number(v)) => Ok(Some(Bound::Value(v))),
                Some(RawBound::Name(n)) => ParamName::from_key(&n)
                    .map(|p| Some(Bound::Param(p)))
                    .ok_or_else(|| format!("parameter `{key}`: {which} bound names unknown parameter `{n}`")),
            }
        };
        let mut entries = Vec::new();
        for (key, e) in raw.parameters {
            let param = ParamName::from_key(&key).ok_or_else(|| format!("unknown parameter `{key}`"))?;
            let free = e.free.unwrap_or(true);
            let lower = bound(&key, e.lower, "lower")?;
            let upper = bound(&key, e.upper, "upper")?;
            let (lower, upper) = match (free, lower, upper) {
                (true, Some(l), Some(u)) => (l, u),
                (true, _, _) => return Err(format!("free parameter `{key}` needs both `lower` and `upper`")),
                (false, l, u) => (
                    l.unwrap_or(Bound::Value(e.initial)),
                    u.unwrap_or(Bound::Value(e.initial)),
                ),
            };
            entries.push(FitEntry {
                param,
                initial: e.initial,
                lower,
                upper,
                free,
            });
        }
        entries.sort_by_key(|e| e.param);
        Ok(FitSpec { entries })
    }

    pub fn free_params(&self) -> Vec<ParamName> {
        self.entries.iter().filter(|e| e.free).map(|e| e.param).collect()
    }
}

/// Observed active counts at times measured in days from the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl Observations {
    /// Daily series starting at day 0.
    pub fn daily(values: Vec<f64>) -> Observations {
        Observations {
            times: (0..values.len()).map(|k| k as f64).collect(),
            values,
        }
    }
}

impl From<&ActiveSeries> for Observations {
    fn from(series: &ActiveSeries) -> Self {
        Observations {
            times: series.day_offsets(),
            values: series.values.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Number of starts; the first is the spec's initial guess.
    pub starts: usize,
    pub max_iterations: usize,
    pub seed: u64,
    pub integrator: IntegratorConfig,
    /// Stop when an accepted step lowers the loss by less than this fraction.
    pub rel_improvement: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            starts: 8,
            max_iterations: 200,
            seed: 0,
            integrator: IntegratorConfig {
                rel_tol: 1e-10,
                abs_tol: Some(1e-6),
                ..IntegratorConfig::default()
            },
            rel_improvement: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundHit {
    Interior,
    Lower,
    Upper,
}

impl BoundHit {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundHit::Interior => "interior",
            BoundHit::Lower => "lower",
            BoundHit::Upper => "upper",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: Params,
    /// Sum of squared residuals at the optimum.
    pub loss: f64,
    /// Loss at the spec's initial guess.
    pub initial_loss: f64,
    pub at_bound: Vec<(ParamName, BoundHit)>,
    pub iterations: usize,
    /// Accepted losses of the winning start, starting from its initial loss.
    pub loss_history: Vec<f64>,
    pub best_start: usize,
    /// Final loss of every start (infinite when the start failed).
    pub start_losses: Vec<f64>,
    pub residuals: Vec<f64>,
}

struct Problem<'a> {
    free: Vec<FitEntry>,
    /// Envelope `[lo, hi]` of each free parameter.
    envelope: Vec<(f64, f64)>,
    base: Params,
    initial_state: &'a State,
    sample_times: Vec<f64>,
    /// Index into the trajectory of the first observation.
    offset: usize,
    data: &'a [f64],
    integrator: IntegratorConfig,
}

impl Problem<'_> {
    fn params_from(&self, x: &[f64]) -> Params {
        let mut p = self.base;
        for (entry, &value) in self.free.iter().zip(x) {
            p.set(entry.param, value);
        }
        p
    }

    fn resolve(&self, bound: Bound, p: &Params) -> f64 {
        match bound {
            Bound::Value(v) => v,
            Bound::Param(name) => p.get(name),
        }
    }

    /// Clamps every free parameter into its bounds, resolving references
    /// against the current values.
    fn project(&self, x: &mut [f64]) {
        for _ in 0..3 {
            let p = self.params_from(x);
            for (k, entry) in self.free.iter().enumerate() {
                let lo = self.resolve(entry.lower, &p);
                let hi = self.resolve(entry.upper, &p);
                x[k] = x[k].max(lo).min(hi);
            }
        }
    }

    fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.envelope)
            .map(|(v, (lo, hi))| (v - lo) / (hi - lo))
            .collect()
    }

    fn denormalize(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.envelope)
            .map(|(v, (lo, hi))| lo + v.clamp(0.0, 1.0) * (hi - lo))
            .collect()
    }

    /// Projects a point given in unit coordinates and returns it in both forms.
    fn feasible(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut x = self.denormalize(u);
        self.project(&mut x);
        (self.normalize(&x), x)
    }

    fn residuals(&self, x: &[f64]) -> Option<Vec<f64>> {
        let params = self.params_from(x);
        let traj = integrate_at(self.initial_state, &params, &self.sample_times, &self.integrator).ok()?;
        let r: Vec<f64> = traj.states[self.offset..]
            .iter()
            .zip(self.data)
            .map(|(s, d)| s.active() - d)
            .collect();
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    fn bound_hits(&self, x: &[f64]) -> Vec<(ParamName, BoundHit)> {
        let p = self.params_from(x);
        self.free
            .iter()
            .zip(x)
            .zip(&self.envelope)
            .map(|((entry, &v), (elo, ehi))| {
                let tol = 1e-9 * (ehi - elo);
                let lo = self.resolve(entry.lower, &p);
                let hi = self.resolve(entry.upper, &p);
                let hit = if v <= lo + tol {
                    BoundHit::Lower
                } else if v >= hi - tol {
                    BoundHit::Upper
                } else {
                    BoundHit::Interior
                };
                (entry.param, hit)
            })
            .collect()
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

struct StartOutcome {
    x: Vec<f64>,
    loss: f64,
    history: Vec<f64>,
    iterations: usize,
    residuals: Vec<f64>,
}

fn levenberg_marquardt(problem: &Problem<'_>, u0: &[f64], options: &FitOptions) -> Option<StartOutcome> {
    let n = u0.len();
    let (mut u, mut x) = problem.feasible(u0);
    let mut r = problem.residuals(&x)?;
    let mut loss = sum_sq(&r);
    let mut history = vec![loss];
    let mut damping = 1e-3;
    let mut iterations = 0;
    let h = 1e-6;

    while iterations < options.max_iterations && loss > 0.0 {
        iterations += 1;
        let columns: Vec<Option<Vec<f64>>> = (0..n)
            .into_par_iter()
            .map(|k| {
                let step = if u[k] + h <= 1.0 { h } else { -h };
                let mut shifted = u.clone();
                shifted[k] += step;
                let xs = problem.denormalize(&shifted);
                problem
                    .residuals(&xs)
                    .map(|rs| rs.iter().zip(&r).map(|(a, b)| (a - b) / step).collect())
            })
            .collect();
        let m = r.len();
        let jac = DMatrix::from_fn(m, n, |i, k| columns[k].as_ref().map_or(0.0, |c| c[i]));
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * DVector::from_column_slice(&r);

        let active: Vec<bool> = (0..n)
            .map(|k| (u[k] <= 0.0 && grad[k] > 0.0) || (u[k] >= 1.0 && grad[k] < 0.0) || columns[k].is_none())
            .collect();
        let free_idx: Vec<usize> = (0..n).filter(|&k| !active[k]).collect();
        if free_idx.is_empty() {
            break;
        }
        let max_diag = free_idx.iter().map(|&k| jtj[(k, k)]).fold(0.0, f64::max);
        if max_diag == 0.0 {
            break;
        }

        let mut accepted = false;
        while damping < 1e16 {
            let f = free_idx.len();
            let mut a = DMatrix::from_fn(f, f, |i, j| jtj[(free_idx[i], free_idx[j])]);
            for i in 0..f {
                a[(i, i)] += damping * jtj[(free_idx[i], free_idx[i])].max(1e-12 * max_diag);
            }
            let rhs = DVector::from_fn(f, |i, _| -grad[free_idx[i]]);
            let Some(delta) = a.cholesky().map(|c| c.solve(&rhs)) else {
                damping *= 4.0;
                continue;
            };
            let mut trial = u.clone();
            for (i, &k) in free_idx.iter().enumerate() {
                trial[k] += delta[i];
            }
            let (u_trial, x_trial) = problem.feasible(&trial);
            let step_size = u_trial.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if step_size < 1e-14 {
                damping *= 4.0;
                continue;
            }
            if let Some(r_trial) = problem.residuals(&x_trial) {
                let loss_trial = sum_sq(&r_trial);
                if loss_trial < loss {
                    let improvement = (loss - loss_trial) / loss;
                    u = u_trial;
                    x = x_trial;
                    r = r_trial;
                    loss = loss_trial;
                    history.push(loss);
                    damping = (damping / 3.0).max(1e-12);
                    accepted = true;
                    if improvement < options.rel_improvement {
                        return Some(StartOutcome {
                            x,
                            loss,
                            history,
                            iterations,
                            residuals: r,
                        });
                    }
                    break;
                }
            }
            damping *= 4.0;
        }
        if !accepted {
            break;
        }
    }
    Some(StartOutcome {
        x,
        loss,
        history,
        iterations,
        residuals: r,
    })
}

/// Minimises `Σ (A+I+A1+I1+Q − observed)²` over the free parameters of `spec`.
pub fn fit(
    spec: &FitSpec,
    observations: &Observations,
    fixed: &Params,
    initial_state: &State,
    options: &FitOptions,
) -> Result<FitResult> {
    if observations.values.is_empty() {
        return Err(Error::FitFailure("no observations in the fitting window".into()));
    }
    if observations.times.len() != observations.values.len() {
        return Err(Error::FitFailure(
            "observation times and values differ in length".into(),
        ));
    }
    if options.starts == 0 {
        return Err(Error::InvalidParameter {
            name: "starts",
            reason: "at least one start is required".into(),
        });
    }
    let t0 = initial_state.t;
    if observations.times[0] < t0 {
        return Err(Error::FitFailure("observations precede the initial state".into()));
    }
    let (sample_times, offset) = if observations.times[0] == t0 {
        (observations.times.clone(), 0)
    } else {
        let mut t = vec![t0];
        t.extend(&observations.times);
        (t, 1)
    };

    let mut base = *fixed;
    for entry in &spec.entries {
        base.set(entry.param, entry.initial);
    }
    let free: Vec<FitEntry> = spec.entries.iter().filter(|e| e.free).copied().collect();
    if free.is_empty() {
        return Err(Error::FitFailure("the fit spec has no free parameters".into()));
    }

    let envelope_of = |bound: Bound, upper: bool| -> Result<f64> {
        let mut b = bound;
        for _ in 0..8 {
            match b {
                Bound::Value(v) => return Ok(v),
                Bound::Param(name) => match free.iter().find(|e| e.param == name) {
                    Some(e) => b = if upper { e.upper } else { e.lower },
                    None => return Ok(base.get(name)),
                },
            }
        }
        Err(Error::FitFailure("cyclic parameter bounds".into()))
    };
    let mut envelope = Vec::with_capacity(free.len());
    for entry in &free {
        let lo = envelope_of(entry.lower, false)?;
        let hi = envelope_of(entry.upper, true)?;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidParameter {
                name: entry.param.key(),
                reason: format!("fitting range [{lo}, {hi}] is empty"),
            });
        }
        envelope.push((lo, hi));
    }

    let problem = Problem {
        free,
        envelope,
        base,
        initial_state,
        sample_times,
        offset,
        data: &observations.values,
        integrator: options.integrator,
    };

    let x0: Vec<f64> = problem.free.iter().map(|e| e.initial).collect();
    {
        let p = problem.params_from(&x0);
        for e in &problem.free {
            let (lo, hi) = (problem.resolve(e.lower, &p), problem.resolve(e.upper, &p));
            if e.initial < lo || e.initial > hi {
                return Err(Error::InvalidParameter {
                    name: e.param.key(),
                    reason: format!("initial value {} outside [{lo}, {hi}]", e.initial),
                });
            }
        }
    }
    let initial_loss = problem.residuals(&x0).map_or(f64::INFINITY, |r| sum_sq(&r));

    let n = problem.free.len();
    let mut starts: Vec<Vec<f64>> = vec![problem.normalize(&x0)];
    for k in 1..options.starts {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed.wrapping_add(k as u64));
        starts.push((0..n).map(|_| rng.gen_range(0.0..1.0)).collect());
    }

    let outcomes: Vec<Option<StartOutcome>> = starts
        .par_iter()
        .map(|u0| levenberg_marquardt(&problem, u0, options))
        .collect();
    let start_losses: Vec<f64> = outcomes
        .iter()
        .map(|o| o.as_ref().map_or(f64::INFINITY, |o| o.loss))
        .collect();
    let best_start = start_losses
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .ok_or_else(|| Error::FitFailure("every start failed to integrate".into()))?;
    let best = outcomes.into_iter().nth(best_start).flatten().unwrap();

    Ok(FitResult {
        params: problem.params_from(&best.x),
        loss: best.loss,
        initial_loss,
        at_bound: problem.bound_hits(&best.x),
        iterations: best.iterations,
        loss_history: best.history,
        best_start,
        start_losses,
        residuals: best.residuals,
    })
}
