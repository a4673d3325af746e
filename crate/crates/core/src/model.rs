//! Parameters, state and vector field of the vaccination model.
//!
//! Compartments, in storage order: unvaccinated susceptible `S`, vaccinated
//! susceptible `V`, unvaccinated asymptomatic `A`, unvaccinated symptomatic
//! `I`, vaccinated asymptomatic `A1`, vaccinated symptomatic `I1`, isolated
//! `Q` and recovered `R`. All rates are per day.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const COMPARTMENTS: usize = 8;

/// Column names of the eight compartments, in storage order.
pub const COMPARTMENT_NAMES: [&str; COMPARTMENTS] = ["S", "V", "A", "I", "A1", "I1", "Q", "R"];

pub(crate) const S: usize = 0;
pub(crate) const V: usize = 1;
pub(crate) const A: usize = 2;
pub(crate) const I: usize = 3;
pub(crate) const A1: usize = 4;
pub(crate) const I1: usize = 5;
pub(crate) const Q: usize = 6;
pub(crate) const R: usize = 7;

/// Model parameters.
///
/// Field names follow the conventional symbols; the serialized keys are the
/// ASCII names used in parameter files (`Lambda`, `sigma`, ..., `kappa`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// Recruitment into `S` (individuals/day).
    #[serde(rename = "Lambda")]
    pub recruitment: f64,
    /// Vaccination rate of `S`.
    pub sigma: f64,
    /// Natural death rate.
    pub mu: f64,
    /// Isolation rate from `A`.
    pub theta: f64,
    /// Isolation rate from `A1`.
    pub theta1: f64,
    /// Recovery rate from `A`.
    pub gamma1: f64,
    /// Recovery rate from `I`.
    pub gamma2: f64,
    /// Recovery rate from `Q`.
    pub gamma3: f64,
    /// Recovery rate from `A1`.
    pub gamma4: f64,
    /// Recovery rate from `I1`.
    pub gamma5: f64,
    /// Total outflow rate from `R` (waning immunity).
    pub omega: f64,
    /// Part of the `R` outflow that returns to `S`; the rest goes to `V`.
    pub varphi: f64,
    /// Vaccine effectiveness against infection.
    pub rho: f64,
    /// Asymptomatic fraction among unvaccinated infections.
    pub eta: f64,
    /// Asymptomatic fraction among vaccinated infections.
    pub phi: f64,
    /// Isolation rate from `I`.
    pub epsilon: f64,
    /// Isolation rate from `I1`.
    pub epsilon1: f64,
    /// Disease-induced death rate in `I` and `Q`.
    pub delta: f64,
    /// Disease-induced death rate in `I1`.
    pub delta1: f64,
    /// Effective contact rate.
    pub beta: f64,
    /// Relative infectiousness of `A`.
    pub nu: f64,
    /// Relative infectiousness of `A1`.
    pub nu1: f64,
    /// Relative infectiousness of `I1`.
    pub kappa: f64,
}

/// Identifies one entry of [`Params`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamName {
    Lambda,
    Sigma,
    Mu,
    Theta,
    Theta1,
    Gamma1,
    Gamma2,
    Gamma3,
    Gamma4,
    Gamma5,
    Omega,
    Varphi,
    Phi,
    Rho,
    Eta,
    Epsilon,
    Epsilon1,
    Delta,
    Delta1,
    Beta,
    Nu,
    Nu1,
    Kappa,
}

impl ParamName {
    /// All parameters in the order of the published parameter table.
    pub const ALL: [ParamName; 23] = [
        ParamName::Lambda,
        ParamName::Sigma,
        ParamName::Mu,
        ParamName::Theta,
        ParamName::Theta1,
        ParamName::Gamma1,
        ParamName::Gamma2,
        ParamName::Gamma3,
        ParamName::Gamma4,
        ParamName::Gamma5,
        ParamName::Omega,
        ParamName::Varphi,
        ParamName::Phi,
        ParamName::Rho,
        ParamName::Eta,
        ParamName::Epsilon,
        ParamName::Epsilon1,
        ParamName::Delta,
        ParamName::Delta1,
        ParamName::Beta,
        ParamName::Nu,
        ParamName::Nu1,
        ParamName::Kappa,
    ];

    pub fn key(self) -> &'static str {
        match self {
            ParamName::Lambda => "Lambda",
            ParamName::Sigma => "sigma",
            ParamName::Mu => "mu",
            ParamName::Theta => "theta",
            ParamName::Theta1 => "theta1",
            ParamName::Gamma1 => "gamma1",
            ParamName::Gamma2 => "gamma2",
            ParamName::Gamma3 => "gamma3",
            ParamName::Gamma4 => "gamma4",
            ParamName::Gamma5 => "gamma5",
            ParamName::Omega => "omega",
            ParamName::Varphi => "varphi",
            ParamName::Phi => "phi",
            ParamName::Rho => "rho",
            ParamName::Eta => "eta",
            ParamName::Epsilon => "epsilon",
            ParamName::Epsilon1 => "epsilon1",
            ParamName::Delta => "delta",
            ParamName::Delta1 => "delta1",
            ParamName::Beta => "beta",
            ParamName::Nu => "nu",
            ParamName::Nu1 => "nu1",
            ParamName::Kappa => "kappa",
        }
    }

    pub fn from_key(key: &str) -> Option<ParamName> {
        ParamName::ALL.into_iter().find(|p| p.key() == key)
    }
}

impl fmt::Display for ParamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl std::str::FromStr for ParamName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ParamName::from_key(s).ok_or_else(|| Error::InvalidParameter {
            name: "name",
            reason: format!("unknown parameter `{s}`"),
        })
    }
}

impl Params {
    /// Fitted parameter vector of the South Africa calibration
    /// (17 February to 5 August 2021). `delta1` carries the unrounded fitted value.
    pub fn fitted() -> Params {
        Params {
            recruitment: 3538.3,
            sigma: 7.9e-4,
            mu: 2.6433e-5,
            theta: 0.03,
            theta1: 0.01,
            gamma1: 0.1167,
            gamma2: 0.0066,
            gamma3: 0.0974,
            gamma4: 0.1141,
            gamma5: 0.0233,
            omega: 1.0 / 120.0,
            varphi: 0.0011,
            rho: 0.3,
            eta: 0.30,
            phi: 0.468,
            epsilon: 0.1057,
            epsilon1: 0.1057,
            delta: 0.0012,
            delta1: 2.02e-14,
            beta: 0.1878,
            nu: 1.0,
            nu1: 6.0,
            kappa: 6.0,
        }
    }

    /// Literature-based initial estimates used to seed the calibration.
    pub fn initial_estimates() -> Params {
        Params {
            recruitment: 3538.3,
            sigma: 7.9e-4,
            mu: 2.6433e-5,
            theta: 0.0267,
            theta1: 0.0267,
            gamma1: 0.0904,
            gamma2: 0.0175,
            gamma3: 0.09,
            gamma4: 0.095,
            gamma5: 0.0275,
            omega: 1.0 / 120.0,
            varphi: 0.0022,
            rho: 0.75,
            eta: 0.45,
            phi: 0.5,
            epsilon: 0.1252,
            epsilon1: 0.1252,
            delta: 0.0015,
            delta1: 0.0011,
            beta: 0.9,
            nu: 3.5,
            nu1: 3.5,
            kappa: 1.25,
        }
    }

    pub fn get(&self, name: ParamName) -> f64 {
        match name {
            ParamName::Lambda => self.recruitment,
            ParamName::Sigma => self.sigma,
            ParamName::Mu => self.mu,
            ParamName::Theta => self.theta,
            ParamName::Theta1 => self.theta1,
            ParamName::Gamma1 => self.gamma1,
            ParamName::Gamma2 => self.gamma2,
            ParamName::Gamma3 => self.gamma3,
            ParamName::Gamma4 => self.gamma4,
            ParamName::Gamma5 => self.gamma5,
            ParamName::Omega => self.omega,
            ParamName::Varphi => self.varphi,
            ParamName::Phi => self.phi,
            ParamName::Rho => self.rho,
            ParamName::Eta => self.eta,
            ParamName::Epsilon => self.epsilon,
            ParamName::Epsilon1 => self.epsilon1,
            ParamName::Delta => self.delta,
            ParamName::Delta1 => self.delta1,
            ParamName::Beta => self.beta,
            ParamName::Nu => self.nu,
            ParamName::Nu1 => self.nu1,
            ParamName::Kappa => self.kappa,
        }
    }

    pub fn set(&mut self, name: ParamName, value: f64) {
        let slot = match name {
            ParamName::Lambda => &mut self.recruitment,
            ParamName::Sigma => &mut self.sigma,
            ParamName::Mu => &mut self.mu,
            ParamName::Theta => &mut self.theta,
            ParamName::Theta1 => &mut self.theta1,
            ParamName::Gamma1 => &mut self.gamma1,
            ParamName::Gamma2 => &mut self.gamma2,
            ParamName::Gamma3 => &mut self.gamma3,
            ParamName::Gamma4 => &mut self.gamma4,
            ParamName::Gamma5 => &mut self.gamma5,
            ParamName::Omega => &mut self.omega,
            ParamName::Varphi => &mut self.varphi,
            ParamName::Phi => &mut self.phi,
            ParamName::Rho => &mut self.rho,
            ParamName::Eta => &mut self.eta,
            ParamName::Epsilon => &mut self.epsilon,
            ParamName::Epsilon1 => &mut self.epsilon1,
            ParamName::Delta => &mut self.delta,
            ParamName::Delta1 => &mut self.delta1,
            ParamName::Beta => &mut self.beta,
            ParamName::Nu => &mut self.nu,
            ParamName::Nu1 => &mut self.nu1,
            ParamName::Kappa => &mut self.kappa,
        };
        *slot = value;
    }

    pub fn with(mut self, name: ParamName, value: f64) -> Params {
        self.set(name, value);
        self
    }

    /// Checks the feasibility constraints on every parameter.
    pub fn validate(&self) -> Result<()> {
        for name in ParamName::ALL {
            let value = self.get(name);
            if !value.is_finite() {
                return Err(invalid(name, format!("must be finite, got {value}")));
            }
            if value < 0.0 {
                return Err(invalid(name, format!("must be non-negative, got {value}")));
            }
        }
        if self.recruitment <= 0.0 {
            return Err(invalid(ParamName::Lambda, "must be positive".into()));
        }
        if self.mu <= 0.0 {
            return Err(invalid(ParamName::Mu, "must be positive".into()));
        }
        for name in [ParamName::Rho, ParamName::Eta, ParamName::Phi] {
            if self.get(name) > 1.0 {
                return Err(invalid(name, format!("is a fraction, got {}", self.get(name))));
            }
        }
        if self.varphi > self.omega {
            return Err(invalid(
                ParamName::Varphi,
                format!(
                    "must not exceed omega ({}), the R -> V flow (omega - varphi) R would be negative",
                    self.omega
                ),
            ));
        }
        Ok(())
    }

    pub fn validated(self) -> Result<Params> {
        self.validate().map(|_| self)
    }

    pub fn rates(&self) -> DerivedRates {
        DerivedRates::new(self)
    }

    /// Population level of the disease-free state, `Λ/μ`.
    pub fn carrying_capacity(&self) -> f64 {
        self.recruitment / self.mu
    }
}

fn invalid(name: ParamName, reason: String) -> Error {
    Error::InvalidParameter {
        name: name.key(),
        reason,
    }
}

/// Aggregate exit rates and transmission blocks shared by the threshold,
/// equilibrium and bifurcation analyses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedRates {
    /// σ + μ
    pub k0: f64,
    /// θ + γ₁ + μ
    pub k1: f64,
    /// ε + γ₂ + δ + μ
    pub k2: f64,
    /// θ₁ + γ₄ + μ
    pub k3: f64,
    /// ε₁ + γ₅ + δ₁ + μ
    pub k4: f64,
    /// γ₃ + δ + μ
    pub k5: f64,
    /// ω + μ
    pub k6: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub b4: f64,
}

impl DerivedRates {
    pub fn new(p: &Params) -> DerivedRates {
        let k0 = p.sigma + p.mu;
        DerivedRates {
            k0,
            k1: p.theta + p.gamma1 + p.mu,
            k2: p.epsilon + p.gamma2 + p.delta + p.mu,
            k3: p.theta1 + p.gamma4 + p.mu,
            k4: p.epsilon1 + p.gamma5 + p.delta1 + p.mu,
            k5: p.gamma3 + p.delta + p.mu,
            k6: p.omega + p.mu,
            b1: p.eta * p.beta * p.mu / k0,
            b2: (1.0 - p.eta) * p.beta * p.mu / k0,
            b3: p.phi * (1.0 - p.rho) * p.beta * p.sigma / k0,
            b4: (1.0 - p.phi) * (1.0 - p.rho) * p.beta * p.sigma / k0,
        }
    }
}

/// One point of the state space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct State {
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "I")]
    pub i: f64,
    #[serde(rename = "A1")]
    pub a1: f64,
    #[serde(rename = "I1")]
    pub i1: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    #[serde(rename = "R")]
    pub r: f64,
    /// Time in days.
    #[serde(default)]
    pub t: f64,
}

impl State {
    pub fn from_array(x: [f64; COMPARTMENTS], t: f64) -> State {
        State {
            s: x[S],
            v: x[V],
            a: x[A],
            i: x[I],
            a1: x[A1],
            i1: x[I1],
            q: x[Q],
            r: x[R],
            t,
        }
    }

    pub fn to_array(&self) -> [f64; COMPARTMENTS] {
        [self.s, self.v, self.a, self.i, self.a1, self.i1, self.q, self.r]
    }

    pub fn total(&self) -> f64 {
        self.to_array().iter().sum()
    }

    /// A + I + A1 + I1.
    pub fn infectious(&self) -> f64 {
        self.a + self.i + self.a1 + self.i1
    }

    /// Compartments that count as active cases: A + I + A1 + I1 + Q.
    pub fn active(&self) -> f64 {
        self.infectious() + self.q
    }

    /// Checks that every compartment is finite and non-negative.
    pub fn check_feasible(&self) -> Result<()> {
        for (name, value) in COMPARTMENT_NAMES.iter().zip(self.to_array()) {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidParameter {
                    name: "state",
                    reason: format!("compartment {name} must be finite and non-negative, got {value}"),
                });
            }
        }
        Ok(())
    }
}

/// Weighted infectious prevalence `I + νA + ν₁A₁ + κI₁`.
#[inline]
pub(crate) fn weighted_infectious(x: &[f64; COMPARTMENTS], p: &Params) -> f64 {
    x[I] + p.nu * x[A] + p.nu1 * x[A1] + p.kappa * x[I1]
}

/// Force of infection `λ = β (I + νA + ν₁A₁ + κI₁) / N`.
pub fn force_of_infection(state: &State, params: &Params) -> Result<f64> {
    foi(&state.to_array(), params).ok_or(Error::DegeneratePopulation)
}

#[inline]
pub(crate) fn foi(x: &[f64; COMPARTMENTS], p: &Params) -> Option<f64> {
    let n: f64 = x.iter().sum();
    if n == 0.0 {
        return None;
    }
    Some(p.beta * weighted_infectious(x, p) / n)
}

/// Time derivative of every compartment.
pub fn rhs(state: &State, params: &Params) -> Result<[f64; COMPARTMENTS]> {
    let x = state.to_array();
    let rates = params.rates();
    let lambda = foi(&x, params).ok_or(Error::DegeneratePopulation)?;
    Ok(vector_field(&x, lambda, params, &rates))
}

/// Right-hand side for a given force of infection.
#[inline]
pub(crate) fn vector_field(x: &[f64; COMPARTMENTS], lambda: f64, p: &Params, k: &DerivedRates) -> [f64; COMPARTMENTS] {
    let exposed_s = lambda * x[S];
    let exposed_v = (1.0 - p.rho) * lambda * x[V];
    [
        p.recruitment - (lambda + k.k0) * x[S] + p.varphi * x[R],
        p.sigma * x[S] - exposed_v - p.mu * x[V] + (p.omega - p.varphi) * x[R],
        p.eta * exposed_s - k.k1 * x[A],
        (1.0 - p.eta) * exposed_s - k.k2 * x[I],
        p.phi * exposed_v - k.k3 * x[A1],
        (1.0 - p.phi) * exposed_v - k.k4 * x[I1],
        p.theta * x[A] + p.theta1 * x[A1] + p.epsilon * x[I] + p.epsilon1 * x[I1] - k.k5 * x[Q],
        p.gamma1 * x[A] + p.gamma2 * x[I] + p.gamma3 * x[Q] + p.gamma4 * x[A1] + p.gamma5 * x[I1] - k.k6 * x[R],
    ]
}

/// `N' = Λ − μN − δ(I + Q) − δ₁I₁`, the balance the component sum of
/// [`rhs`] must reproduce.
pub fn population_rate(state: &State, params: &Params) -> f64 {
    params.recruitment - params.mu * state.total() - params.delta * (state.i + state.q) - params.delta1 * state.i1
}
