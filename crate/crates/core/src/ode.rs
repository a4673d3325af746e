//! Adaptive Dormand–Prince 5(4) integration of the model.

use crate::error::{Error, Result};
use crate::model::{foi, vector_field, DerivedRates, Params, State, COMPARTMENTS};

type Vector = [f64; COMPARTMENTS];

/// Step-size control and output sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    /// Absolute tolerance in individuals; `None` means `1e-8 · Λ/μ`.
    pub abs_tol: Option<f64>,
    /// Largest allowed step (days).
    pub max_step: f64,
    /// Spacing of output samples (days).
    pub output_stride: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-8,
            abs_tol: None,
            max_step: f64::INFINITY,
            output_stride: 1.0,
        }
    }
}

impl IntegratorConfig {
    pub fn with_stride(mut self, stride: f64) -> Self {
        self.output_stride = stride;
        self
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn abs_tol_for(&self, params: &Params) -> f64 {
        self.abs_tol.unwrap_or(1e-8 * params.carrying_capacity())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && !v.is_nan() {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive, got {v}"),
                })
            }
        };
        positive("rel_tol", self.rel_tol)?;
        if let Some(abs) = self.abs_tol {
            positive("abs_tol", abs)?;
        }
        positive("max_step", self.max_step)?;
        positive("output_stride", self.output_stride)?;
        if !self.output_stride.is_finite() {
            return Err(Error::InvalidParameter {
                name: "output_stride",
                reason: "must be finite".into(),
            });
        }
        Ok(())
    }
}

/// A compartment that fell below the negativity tolerance after a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegativityFlag {
    pub t: f64,
    pub compartment: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    /// Number of accepted steps after which some compartment was clamped to 0.
    pub clamped: usize,
    pub flags: Vec<NegativityFlag>,
}

/// Sampled solution of an initial-value problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub params: Params,
    pub stats: StepStats,
}

impl Trajectory {
    pub fn initial(&self) -> &State {
        &self.states[0]
    }

    pub fn last(&self) -> &State {
        self.states.last().expect("trajectory has at least one sample")
    }

    /// A + I + A1 + I1 + Q at every sample.
    pub fn active(&self) -> Vec<f64> {
        self.states.iter().map(State::active).collect()
    }

    /// Sample index and value of the largest active count.
    pub fn peak_active(&self) -> (f64, f64) {
        self.states
            .iter()
            .map(|s| (s.t, s.active()))
            .fold(
                (f64::NAN, f64::NEG_INFINITY),
                |best, cur| {
                    if cur.1 > best.1 {
                        cur
                    } else {
                        best
                    }
                },
            )
    }

    /// Largest excess of `N(t)` over `Λ/μ + (N(0) − Λ/μ)e^{−μt}` across samples.
    pub fn max_bound_excess(&self) -> f64 {
        let p = &self.params;
        let n0 = self.initial().total();
        let t0 = self.initial().t;
        let cap = p.carrying_capacity();
        self.states
            .iter()
            .map(|s| s.total() - (cap + (n0 - cap) * (-p.mu * (s.t - t0)).exp()))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest compartment value across all samples.
    pub fn min_component(&self) -> f64 {
        self.states
            .iter()
            .flat_map(|s| s.to_array())
            .fold(f64::INFINITY, f64::min)
    }
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct System<'a> {
    params: &'a Params,
    rates: DerivedRates,
}

impl System<'_> {
    fn eval(&self, x: &Vector, t: f64) -> Result<Vector> {
        let lambda = foi(x, self.params).ok_or(Error::DegeneratePopulation)?;
        let d = vector_field(x, lambda, self.params, &self.rates);
        if d.iter().all(|v| v.is_finite()) {
            Ok(d)
        } else {
            Err(Error::IntegrationFailure {
                t,
                reason: "non-finite derivative".into(),
            })
        }
    }
}

fn combine(x: &Vector, h: f64, terms: &[(f64, &Vector)]) -> Vector {
    let mut out = *x;
    for (c, k) in terms {
        for (o, kv) in out.iter_mut().zip(k.iter()) {
            *o += h * c * kv;
        }
    }
    out
}

/// Integrates from `initial.t` to `t_end`, sampling every `output_stride`
/// days and at `t_end`.
pub fn integrate(initial: &State, params: &Params, t_end: f64, config: &IntegratorConfig) -> Result<Trajectory> {
    config.validate()?;
    if !(t_end > initial.t) {
        return Err(Error::InvalidParameter {
            name: "t_end",
            reason: format!("must exceed the initial time {}, got {t_end}", initial.t),
        });
    }
    let stride = config.output_stride;
    let count = ((t_end - initial.t) / stride).floor() as usize;
    let mut times: Vec<f64> = (0..=count).map(|k| initial.t + k as f64 * stride).collect();
    if t_end - times[times.len() - 1] > 1e-9 * stride {
        times.push(t_end);
    } else {
        *times.last_mut().unwrap() = t_end;
    }
    integrate_at(initial, params, &times, config)
}

/// Integrates and samples at the given strictly increasing times; the first
/// must equal `initial.t`.
pub fn integrate_at(initial: &State, params: &Params, times: &[f64], config: &IntegratorConfig) -> Result<Trajectory> {
    params.validate()?;
    config.validate()?;
    initial.check_feasible()?;
    if times.is_empty() || times[0] != initial.t {
        return Err(Error::InvalidParameter {
            name: "times",
            reason: "sample times must start at the initial time".into(),
        });
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter {
            name: "times",
            reason: "sample times must be strictly increasing".into(),
        });
    }

    let system = System {
        params,
        rates: params.rates(),
    };
    let abs_tol = config.abs_tol_for(params);
    let rel_tol = config.rel_tol;
    let neg_tol = 1e-9 * params.carrying_capacity();

    let mut stats = StepStats::default();
    let mut states = Vec::with_capacity(times.len());
    states.push(*initial);

    let mut t = initial.t;
    let mut x = initial.to_array();
    let mut k1 = system.eval(&x, t)?;
    let span = times[times.len() - 1] - t;
    let mut h = initial_step(&system, &x, &k1, t, abs_tol, rel_tol)?
        .min(config.max_step)
        .min(span);

    for &target in &times[1..] {
        while t < target {
            let remaining = target - t;
            let last = h >= remaining;
            let step = if last { remaining } else { h };
            let min_step = 16.0 * f64::EPSILON * t.abs().max(1.0);
            if step < min_step && !last {
                return Err(Error::IntegrationFailure {
                    t,
                    reason: format!("step size underflow (h = {step:e})"),
                });
            }

            let k2 = system.eval(&combine(&x, step, &[(A21, &k1)]), t + C2 * step)?;
            let k3 = system.eval(&combine(&x, step, &[(A31, &k1), (A32, &k2)]), t + C3 * step)?;
            let k4 = system.eval(&combine(&x, step, &[(A41, &k1), (A42, &k2), (A43, &k3)]), t + C4 * step)?;
            let k5 = system.eval(
                &combine(&x, step, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
                t + C5 * step,
            )?;
            let k6 = system.eval(
                &combine(&x, step, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
                t + step,
            )?;
            let x_new = combine(&x, step, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
            let k7 = system.eval(&x_new, t + step)?;

            let mut err_sq = 0.0;
            for c in 0..COMPARTMENTS {
                let e = step * (E1 * k1[c] + E3 * k3[c] + E4 * k4[c] + E5 * k5[c] + E6 * k6[c] + E7 * k7[c]);
                let scale = abs_tol + rel_tol * x[c].abs().max(x_new[c].abs());
                err_sq += (e / scale).powi(2);
            }
            let err = (err_sq / COMPARTMENTS as f64).sqrt();
            if !err.is_finite() {
                stats.rejected += 1;
                h = step * 0.2;
                continue;
            }

            let undershoot = x_new.iter().any(|&v| v < -neg_tol);
            if err <= 1.0 && undershoot && 0.5 * step >= min_step {
                stats.rejected += 1;
                h = 0.5 * step;
                continue;
            }

            if err <= 1.0 {
                stats.accepted += 1;
                t = if last { target } else { t + step };
                x = x_new;
                k1 = k7;
                let mut clamped = false;
                for (c, value) in x.iter_mut().enumerate() {
                    if *value < 0.0 {
                        if *value >= -neg_tol {
                            *value = 0.0;
                            clamped = true;
                        } else {
                            stats.flags.push(NegativityFlag {
                                t,
                                compartment: c,
                                value: *value,
                            });
                        }
                    }
                }
                if clamped {
                    stats.clamped += 1;
                    k1 = system.eval(&x, t)?;
                }
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                if !(last && step < h) {
                    h = (step * factor).min(config.max_step);
                }
            } else {
                stats.rejected += 1;
                h = step * (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            }
        }
        states.push(State::from_array(x, target));
    }

    Ok(Trajectory {
        times: times.to_vec(),
        states,
        params: *params,
        stats,
    })
}

fn initial_step(system: &System<'_>, x: &Vector, f0: &Vector, t: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    let norm = |v: &Vector, base: &Vector| {
        (v.iter()
            .zip(base.iter())
            .map(|(a, b)| (a / (abs_tol + rel_tol * b.abs())).powi(2))
            .sum::<f64>()
            / COMPARTMENTS as f64)
            .sqrt()
    };
    let d0 = norm(x, x);
    let d1 = norm(f0, x);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let x1 = combine(x, h0, &[(1.0, f0)]);
    let f1 = system.eval(&x1, t + h0)?;
    let diff: Vector = std::array::from_fn(|c| f1[c] - f0[c]);
    let d2 = norm(&diff, x) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1))
}

/// Monotonicity of the Lyapunov function `L = μ/(3k₀) A + μ/(6k₀) I`
/// along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovReport {
    pub values: Vec<f64>,
    pub non_increasing: bool,
    /// Largest increase between consecutive samples (≤ 0 when decreasing).
    pub max_increase: f64,
    pub tolerance: f64,
}

pub fn lyapunov_value(state: &State, params: &Params) -> f64 {
    let k0 = params.sigma + params.mu;
    params.mu / (3.0 * k0) * state.a + params.mu / (6.0 * k0) * state.i
}

/// Checks that `L` never grows by more than `1e-9 · L(0)` between samples.
/// Requires `ρ = 1`, `ω = 0` and a start with `A1 = I1 = 0`.
pub fn lyapunov_decrease_check(trajectory: &Trajectory, params: &Params) -> Result<LyapunovReport> {
    if params.rho != 1.0 || params.omega != 0.0 {
        return Err(Error::InvalidRegime(format!(
            "the Lyapunov function applies only with rho = 1 and omega = 0 (got rho = {}, omega = {})",
            params.rho, params.omega
        )));
    }
    let start = trajectory.initial();
    if start.a1 != 0.0 || start.i1 != 0.0 {
        return Err(Error::InvalidRegime("trajectory must start with A1 = I1 = 0".into()));
    }
    let values: Vec<f64> = trajectory.states.iter().map(|s| lyapunov_value(s, params)).collect();
    let tolerance = 1e-9 * values[0];
    let max_increase = values.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let max_increase = if max_increase.is_finite() { max_increase } else { 0.0 };
    Ok(LyapunovReport {
        non_increasing: max_increase <= tolerance,
        values,
        max_increase,
        tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParamName;
    use crate::threshold::disease_free_equilibrium;

    #[test]
    fn disease_free_state_stays_put() {
        let p = Params::fitted();
        let dfe = disease_free_equilibrium(&p);
        let config = IntegratorConfig::default().with_stride(50.0);
        let traj = integrate(&dfe, &p, 1000.0, &config).unwrap();
        let tol = config.abs_tol_for(&p);
        for s in &traj.states {
            for (a, b) in s.to_array().iter().zip(dfe.to_array()) {
                assert!((a - b).abs() <= tol, "{a} vs {b}");
            }
        }
        assert_eq!(*traj.times.last().unwrap(), 1000.0);
    }

    #[test]
    fn asymptomatic_class_decays_exponentially_without_contacts() {
        let p = Params::fitted().with(ParamName::Beta, 0.0);
        let mut start = disease_free_equilibrium(&p);
        start.a = 100.0;
        let traj = integrate(&start, &p, 10.0, &IntegratorConfig::default()).unwrap();
        let k1 = p.theta + p.gamma1 + p.mu;
        let expected = 100.0 * (-k1 * 10.0_f64).exp();
        let got = traj.last().a;
        assert!((got - expected).abs() <= 1e-6 * expected, "{got} vs {expected}");
    }

    #[test]
    fn samples_land_on_stride_and_end() {
        let p = Params::fitted();
        let mut start = disease_free_equilibrium(&p);
        start.i = 10.0;
        let traj = integrate(&start, &p, 10.5, &IntegratorConfig::default()).unwrap();
        assert_eq!(traj.times.len(), 12);
        assert_eq!(traj.times[3], 3.0);
        assert_eq!(*traj.times.last().unwrap(), 10.5);
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rejects_backwards_horizon_and_bad_config() {
        let p = Params::fitted();
        let dfe = disease_free_equilibrium(&p);
        assert!(integrate(&dfe, &p, 0.0, &IntegratorConfig::default()).is_err());
        let bad = IntegratorConfig {
            rel_tol: 0.0,
            ..IntegratorConfig::default()
        };
        assert!(integrate(&dfe, &p, 1.0, &bad).is_err());
    }

    #[test]
    fn empty_population_fails_cleanly() {
        let p = Params::fitted();
        let err = integrate(&State::default(), &p, 1.0, &IntegratorConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DegeneratePopulation));
    }

    #[test]
    fn tolerance_halving_converges() {
        let p = Params::fitted();
        let mut start = disease_free_equilibrium(&p);
        start.i = 1000.0;
        start.a = 500.0;
        let coarse = IntegratorConfig::default().with_rel_tol(1e-6).with_stride(100.0);
        let fine = coarse.with_rel_tol(0.5e-6);
        let a = integrate(&start, &p, 300.0, &coarse).unwrap();
        let b = integrate(&start, &p, 300.0, &fine).unwrap();
        let tol = coarse.abs_tol_for(&p);
        for (x, y) in a.last().to_array().iter().zip(b.last().to_array()) {
            let local = tol + 1e-6 * x.abs();
            assert!((x - y).abs() <= 10.0 * local, "{x} vs {y}");
        }
    }

    #[test]
    fn lyapunov_requires_perfect_vaccine_without_waning() {
        let p = Params::fitted();
        let traj = integrate(&disease_free_equilibrium(&p), &p, 1.0, &IntegratorConfig::default()).unwrap();
        assert!(matches!(
            lyapunov_decrease_check(&traj, &p),
            Err(Error::InvalidRegime(_))
        ));
    }

    #[test]
    fn lyapunov_is_zero_at_the_disease_free_state() {
        let p = Params {
            rho: 1.0,
            omega: 0.0,
            varphi: 0.0,
            ..Params::fitted()
        };
        let traj = integrate(&disease_free_equilibrium(&p), &p, 100.0, &IntegratorConfig::default()).unwrap();
        let report = lyapunov_decrease_check(&traj, &p).unwrap();
        assert!(report.values.iter().all(|&v| v == 0.0));
        assert!(report.non_increasing);
    }

    #[test]
    fn lyapunov_report_is_well_formed_above_threshold() {
        let p = Params {
            rho: 1.0,
            omega: 0.0,
            varphi: 0.0,
            beta: 20.0,
            ..Params::fitted()
        };
        let mut start = disease_free_equilibrium(&p);
        start.i = 10.0;
        let traj = integrate(&start, &p, 200.0, &IntegratorConfig::default()).unwrap();
        let report = lyapunov_decrease_check(&traj, &p).unwrap();
        assert_eq!(report.values.len(), traj.states.len());
        assert!(!report.non_increasing);
        assert!(report.max_increase > 0.0);
    }
}
