//! Endemic equilibria through the cubic in the equilibrium force of infection.
//!
//! At an endemic equilibrium every compartment is a rational function of the
//! force of infection `λ*`. Substituting these expressions into the
//! definition of `λ` yields `P(λ*) = Q₃λ*³ + Q₂λ*² + Q₁λ* + Q₀ = 0`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{rhs, Params, State};
use crate::threshold::r0;

/// Coefficients of `P` and the λ-free intermediates used to build them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndemicPolynomial {
    pub q3: f64,
    pub q2: f64,
    pub q1: f64,
    pub q0: f64,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
    pub x: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub d4: f64,
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    /// `ω + μ − φt₃`, the leading factor of `Q₃`.
    pub alpha: f64,
    pub r0_at_build: f64,
    /// False when `Q₃ ≤ 0`, contradicting the expected positive leading sign.
    pub q3_positive: bool,
    params: Params,
}

/// Builds `P` for the given parameters.
pub fn build_polynomial(params: &Params) -> Result<EndemicPolynomial> {
    params.validate()?;
    let p = params;
    let k = p.rates();
    for (name, value) in [
        ("k0", k.k0),
        ("k1", k.k1),
        ("k2", k.k2),
        ("k3", k.k3),
        ("k4", k.k4),
        ("k5", k.k5),
        ("k6", k.k6),
    ] {
        if !(value > 0.0) {
            return Err(Error::DegenerateRates(format!(
                "{name} = {value} must be positive to build the equilibrium polynomial"
            )));
        }
    }

    let vac = 1.0 - p.rho;
    let t1 = p.eta * p.theta / k.k1 + p.epsilon * (1.0 - p.eta) / k.k2;
    let t2 = p.phi * vac * p.theta1 / k.k3 + p.epsilon1 * (1.0 - p.phi) * vac / k.k4;
    let t3 = p.gamma1 * p.eta / k.k1 + p.gamma2 * (1.0 - p.eta) / k.k2 + p.gamma3 * t1 / k.k5;
    let t4 = p.gamma3 * t2 / k.k5 + p.gamma4 * p.phi * vac / k.k3 + p.gamma5 * (1.0 - p.phi) * vac / k.k4;
    let x = (p.omega - p.varphi) / k.k6;

    let d1 = 1.0 - (p.nu1 * p.phi * vac * p.beta / k.k3 + p.kappa * (1.0 - p.phi) * vac * p.beta / k.k4);
    let d2 = p.phi * vac / k.k3 + (1.0 - p.phi) * vac / k.k4 + t2 / k.k5 + t4 / k.k6;
    let d3 = 1.0 - (p.nu * p.eta * p.beta / k.k1 + (1.0 - p.eta) * p.beta / k.k2);
    let d4 = p.eta / k.k1 + (1.0 - p.eta) / k.k2 + t1 / k.k5 + t3 / k.k6;

    let f1 = p.sigma * d1 + p.mu * d3;
    let f2 = d1 * t3 * x + p.sigma * d2 + (vac - t4 * x) * d3 + p.mu * d4;
    let f3 = d2 * t3 * x + (vac - t4 * x) * d4;

    let alpha = k.k6 - p.varphi * t3;
    let base = k.k6 * k.k0;
    let q3 = f3 * alpha;
    let q2 = f3 * base + f2 * alpha;
    let q1 = f2 * base + f1 * alpha;
    let q0 = f1 * base;

    Ok(EndemicPolynomial {
        q3,
        q2,
        q1,
        q0,
        t1,
        t2,
        t3,
        t4,
        x,
        d1,
        d2,
        d3,
        d4,
        f1,
        f2,
        f3,
        alpha,
        r0_at_build: r0(p).r0,
        q3_positive: q3 > 0.0,
        params: *p,
    })
}

impl EndemicPolynomial {
    /// Coefficients from the cubic term down.
    pub fn coefficients(&self) -> [f64; 4] {
        [self.q3, self.q2, self.q1, self.q0]
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        ((self.q3 * lambda + self.q2) * lambda + self.q1) * lambda + self.q0
    }

    fn derivative(&self, lambda: f64) -> f64 {
        (3.0 * self.q3 * lambda + 2.0 * self.q2) * lambda + self.q1
    }

    /// `(ω+μ)(σ+μ)²(1 − R₀)`, which `Q₀` must reproduce.
    pub fn q0_identity(&self) -> f64 {
        let p = &self.params;
        let k0 = p.sigma + p.mu;
        (p.omega + p.mu) * k0 * k0 * (1.0 - self.r0_at_build)
    }

    fn denominator(&self, lambda: f64) -> f64 {
        let p = &self.params;
        (p.omega + p.mu) * (lambda + p.sigma + p.mu) - p.varphi * lambda * self.t3
    }

    /// `t₅ = φλt₄ / ((ω+μ)(λ+σ+μ) − φλt₃)`.
    pub fn t5(&self, lambda: f64) -> f64 {
        self.params.varphi * lambda * self.t4 / self.denominator(lambda)
    }

    /// `t₆ = (ω+μ)Λ / ((ω+μ)(λ+σ+μ) − φλt₃)`.
    pub fn t6(&self, lambda: f64) -> f64 {
        (self.params.omega + self.params.mu) * self.params.recruitment / self.denominator(lambda)
    }

    /// Equilibrium state corresponding to a force of infection `λ`.
    pub fn state_at(&self, lambda: f64) -> State {
        let p = &self.params;
        let k = p.rates();
        let t5 = self.t5(lambda);
        let t6 = self.t6(lambda);
        let vac = 1.0 - p.rho;
        let v = (p.sigma + self.x * self.t3 * lambda) * t6
            / (vac * lambda + p.mu - (p.sigma * t5 + self.x * lambda * (self.t3 * t5 + self.t4)));
        let s = t5 * v + t6;
        let a = p.eta * lambda * s / k.k1;
        let i = (1.0 - p.eta) * lambda * s / k.k2;
        let a1 = p.phi * vac * lambda * v / k.k3;
        let i1 = (1.0 - p.phi) * vac * lambda * v / k.k4;
        let q = (p.theta * a + p.epsilon * i + p.theta1 * a1 + p.epsilon1 * i1) / k.k5;
        let r = (p.gamma1 * a + p.gamma2 * i + p.gamma3 * q + p.gamma4 * a1 + p.gamma5 * i1) / k.k6;
        State {
            s,
            v,
            a,
            i,
            a1,
            i1,
            q,
            r,
            t: 0.0,
        }
    }

    pub fn params(&self) -> &Params {
        &self.params
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Positive,
    Zero,
    Negative,
}

impl Sign {
    pub fn of(value: f64) -> Sign {
        if value > 0.0 {
            Sign::Positive
        } else if value < 0.0 {
            Sign::Negative
        } else {
            Sign::Zero
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Sign::Positive => '+',
            Sign::Zero => '0',
            Sign::Negative => '-',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum R0Regime {
    Below,
    At,
    Above,
}

/// Row of the sign table for `P`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignCase {
    /// 1 to 4 from the signs of `(Q₂, Q₁)`; `None` when either vanishes.
    pub case_id: Option<u8>,
    pub signs: [Sign; 4],
    pub r0_regime: R0Regime,
    pub sign_changes: usize,
    /// Positive root counts allowed by Descartes' rule of signs.
    pub possible_root_counts: Vec<usize>,
    /// Some coefficient is zero or `Q₃` is not positive.
    pub boundary: bool,
}

impl SignCase {
    pub fn pattern(&self) -> String {
        self.signs.iter().map(|s| s.symbol()).collect()
    }
}

pub fn classify(poly: &EndemicPolynomial) -> SignCase {
    let coeffs = poly.coefficients();
    let signs = coeffs.map(Sign::of);
    let nonzero: Vec<Sign> = signs.iter().copied().filter(|s| *s != Sign::Zero).collect();
    let sign_changes = nonzero.windows(2).filter(|w| w[0] != w[1]).count();
    let possible_root_counts = (0..=sign_changes)
        .rev()
        .step_by(2)
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    let case_id = match (signs[1], signs[2]) {
        (Sign::Positive, Sign::Positive) => Some(1),
        (Sign::Positive, Sign::Negative) => Some(2),
        (Sign::Negative, Sign::Positive) => Some(3),
        (Sign::Negative, Sign::Negative) => Some(4),
        _ => None,
    };
    let r0_regime = if poly.r0_at_build < 1.0 {
        R0Regime::Below
    } else if poly.r0_at_build > 1.0 {
        R0Regime::Above
    } else {
        R0Regime::At
    };
    SignCase {
        case_id,
        signs,
        r0_regime,
        sign_changes,
        possible_root_counts,
        boundary: signs.contains(&Sign::Zero) || signs[0] != Sign::Positive,
    }
}

/// Real roots of `P`, from the eigenvalues of the companion matrix of the
/// monic polynomial, polished by Newton steps.
pub fn real_roots(poly: &EndemicPolynomial) -> Vec<f64> {
    let coeffs = poly.coefficients();
    let Some(lead) = coeffs.iter().position(|&c| c != 0.0) else {
        return Vec::new();
    };
    let c = &coeffs[lead..];
    let degree = c.len() - 1;
    if degree == 0 {
        return Vec::new();
    }
    let mut companion = DMatrix::<f64>::zeros(degree, degree);
    for j in 0..degree {
        companion[(0, j)] = -c[j + 1] / c[0];
    }
    for i in 1..degree {
        companion[(i, i - 1)] = 1.0;
    }
    let mut roots: Vec<f64> = companion
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= 1e-9 * (1.0 + z.re.abs()))
        .map(|z| polish(poly, z.re))
        .collect();
    roots.sort_by(f64::total_cmp);
    roots
}

fn polish(poly: &EndemicPolynomial, mut root: f64) -> f64 {
    let mut value = poly.eval(root).abs();
    for _ in 0..10 {
        let slope = poly.derivative(root);
        if slope == 0.0 || value == 0.0 {
            break;
        }
        let next = root - poly.eval(root) / slope;
        let next_value = poly.eval(next).abs();
        if !(next_value < value) {
            break;
        }
        root = next;
        value = next_value;
    }
    root
}

/// An endemic equilibrium reconstructed from a positive root of `P`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndemicEquilibrium {
    pub lambda_star: f64,
    pub state: State,
    /// Largest absolute component of the vector field at `state`.
    pub residual: f64,
    /// Every compartment is above `−1e-8 · Λ/μ`.
    pub feasible: bool,
}

/// Every positive real root of `P` with its reconstructed state, feasible or not.
pub fn endemic_candidates(params: &Params) -> Result<Vec<EndemicEquilibrium>> {
    let poly = build_polynomial(params)?;
    let floor = -1e-8 * params.carrying_capacity();
    let mut out = Vec::new();
    for lambda_star in real_roots(&poly).into_iter().filter(|&l| l > 0.0) {
        let state = poly.state_at(lambda_star);
        let finite = state.to_array().iter().all(|v| v.is_finite());
        let residual = if finite && state.total() > 0.0 {
            rhs(&state, params)?.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
        } else {
            f64::INFINITY
        };
        let feasible = finite && state.to_array().iter().all(|&v| v >= floor);
        out.push(EndemicEquilibrium {
            lambda_star,
            state,
            residual,
            feasible,
        });
    }
    Ok(out)
}

/// Feasible endemic equilibria in increasing order of `λ*`.
pub fn endemic_equilibria(params: &Params) -> Result<Vec<EndemicEquilibrium>> {
    Ok(endemic_candidates(params)?.into_iter().filter(|e| e.feasible).collect())
}

/// Symptomatic endemic prevalence with and without vaccination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuppressionReport {
    pub sigma: f64,
    pub i_star_sigma: f64,
    pub i_star_zero: f64,
    /// `I*(σ) < I*(0)`.
    pub suppressed: bool,
}

/// Compares the symptomatic endemic level `I*` at the given `σ` and at `σ = 0`
/// under a perfect, non-waning vaccine.
pub fn vaccination_suppression_check(params: &Params) -> Result<SuppressionReport> {
    if params.rho != 1.0 || params.omega != 0.0 {
        return Err(Error::InvalidRegime(format!(
            "the comparison requires rho = 1 and omega = 0 (got rho = {}, omega = {})",
            params.rho, params.omega
        )));
    }
    let unvaccinated = Params { sigma: 0.0, ..*params };
    let i_star = |p: &Params| -> Result<f64> {
        let found = endemic_equilibria(p)?;
        match found.as_slice() {
            [] => Err(Error::NotApplicable(format!(
                "no endemic equilibrium at sigma = {} (R0 = {:.6})",
                p.sigma,
                r0(p).r0
            ))),
            [one, ..] => Ok(one.state.i),
        }
    };
    let i_star_sigma = i_star(params)?;
    let i_star_zero = i_star(&unvaccinated)?;
    Ok(SuppressionReport {
        sigma: params.sigma,
        i_star_sigma,
        i_star_zero,
        suppressed: i_star_sigma < i_star_zero,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{vector_field, ParamName, COMPARTMENTS};
    use nalgebra::{SMatrix, SVector};

    /// Solves the equilibrium equations with `λ` held fixed, which are linear
    /// in the state.
    fn linear_equilibrium(p: &Params, lambda: f64) -> [f64; COMPARTMENTS] {
        let k = p.rates();
        let zero = [0.0; COMPARTMENTS];
        let c = vector_field(&zero, lambda, p, &k);
        let m = SMatrix::<f64, 8, 8>::from_fn(|row, col| {
            let mut e = zero;
            e[col] = 1.0;
            vector_field(&e, lambda, p, &k)[row] - c[row]
        });
        let sol = m.lu().solve(&(-SVector::<f64, 8>::from(c))).unwrap();
        std::array::from_fn(|i| sol[i])
    }

    fn consistency(p: &Params, lambda: f64) -> (f64, [f64; COMPARTMENTS]) {
        let x = linear_equilibrium(p, lambda);
        let n: f64 = x.iter().sum();
        let w = x[3] + p.nu * x[2] + p.nu1 * x[4] + p.kappa * x[5];
        (n - p.beta * w / lambda, x)
    }

    #[test]
    fn polynomial_agrees_with_linear_solve_oracle() {
        let p = Params::fitted();
        let poly = build_polynomial(&p).unwrap();
        let k = p.rates();
        for lambda in [1e-4, 3e-3, 0.02, 0.1, 0.7] {
            let (phi, x) = consistency(&p, lambda);
            let factor = (poly.alpha * lambda + k.k6 * k.k0)
                * ((1.0 - p.rho) * lambda + p.mu - poly.x * lambda * poly.t4)
                / x[0];
            let expected = phi * factor;
            let got = poly.eval(lambda);
            assert!(
                (got - expected).abs() <= 1e-8 * got.abs().max(expected.abs()),
                "lambda {lambda}: {got} vs {expected}"
            );
        }
    }

    #[test]
    fn reconstructed_state_matches_linear_solve() {
        let p = Params::fitted();
        let poly = build_polynomial(&p).unwrap();
        for lambda in [1e-3, 0.05] {
            let s = poly.state_at(lambda).to_array();
            let x = linear_equilibrium(&p, lambda);
            for (a, b) in s.iter().zip(x) {
                assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn literal_eta_reading_breaks_the_equilibrium() {
        // Reading the coefficient of (1 − η)/k₂ in t₃ as η instead of γ₂
        // leaves Q₀ unchanged but no longer produces an equilibrium.
        let p = Params::fitted();
        let poly = build_polynomial(&p).unwrap();
        let k = p.rates();
        let mut alt = poly;
        alt.t3 = p.gamma1 * p.eta / k.k1 + p.eta * (1.0 - p.eta) / k.k2 + p.gamma3 * poly.t1 / k.k5;
        assert_eq!(poly.q0, poly.f1 * k.k6 * k.k0);
        let lambda = endemic_equilibria(&p).unwrap()[0].lambda_star;
        let good = rhs(&poly.state_at(lambda), &p).unwrap();
        let bad = rhs(&alt.state_at(lambda), &p).unwrap();
        let norm = |d: [f64; 8]| d.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(norm(good) <= 1e-8 * p.recruitment);
        assert!(norm(bad) > 1e-3 * p.recruitment);
    }

    #[test]
    fn q0_identity_and_threshold() {
        let p = Params::fitted();
        let poly = build_polynomial(&p).unwrap();
        assert!((poly.q0 - poly.q0_identity()).abs() <= 1e-9 * poly.q0.abs());
        assert!(poly.q0 < 0.0);
        let below = p.with(ParamName::Beta, p.beta * 0.5 / poly.r0_at_build);
        assert!(build_polynomial(&below).unwrap().q0 > 0.0);
        let at = p.with(ParamName::Beta, p.beta / poly.r0_at_build);
        let k = at.rates();
        let q0 = build_polynomial(&at).unwrap().q0;
        assert!(q0.abs() <= 1e-9 * k.k6 * k.k0 * k.k0);
    }

    #[test]
    fn leading_coefficient_is_positive_for_imperfect_vaccine() {
        let poly = build_polynomial(&Params::fitted()).unwrap();
        assert!(poly.q3_positive);
        let perfect = build_polynomial(&Params::fitted().with(ParamName::Rho, 1.0)).unwrap();
        assert_eq!(perfect.q3, 0.0);
        assert!(classify(&perfect).boundary);
    }

    fn case_from(coeffs: [f64; 4], r0: f64) -> SignCase {
        let mut poly = build_polynomial(&Params::fitted()).unwrap();
        poly.q3 = coeffs[0];
        poly.q2 = coeffs[1];
        poly.q1 = coeffs[2];
        poly.q0 = coeffs[3];
        poly.r0_at_build = r0;
        classify(&poly)
    }

    #[test]
    fn sign_table_rows() {
        let c = case_from([1.0, 1.0, 1.0, 1.0], 0.5);
        assert_eq!((c.case_id, c.possible_root_counts.clone()), (Some(1), vec![0]));
        let c = case_from([1.0, 1.0, 1.0, -1.0], 1.5);
        assert_eq!((c.case_id, c.possible_root_counts.clone()), (Some(1), vec![1]));
        let c = case_from([1.0, 1.0, -1.0, 1.0], 0.5);
        assert_eq!((c.case_id, c.possible_root_counts.clone()), (Some(2), vec![0, 2]));
        let c = case_from([1.0, 1.0, -1.0, -1.0], 1.5);
        assert_eq!((c.case_id, c.possible_root_counts.clone()), (Some(2), vec![1]));
        let c = case_from([1.0, -1.0, 1.0, 1.0], 0.5);
        assert_eq!((c.case_id, c.possible_root_counts.clone()), (Some(3), vec![0, 2]));
        let c = case_from([1.0, -1.0, 1.0, -1.0], 1.5);
        assert_eq!((c.case_id, c.possible_root_counts.clone()), (Some(3), vec![1, 3]));
        let c = case_from([1.0, -1.0, -1.0, 1.0], 0.5);
        assert_eq!((c.case_id, c.possible_root_counts.clone()), (Some(4), vec![0, 2]));
        let c = case_from([1.0, -1.0, -1.0, -1.0], 1.5);
        assert_eq!((c.case_id, c.possible_root_counts.clone()), (Some(4), vec![1]));
        assert_eq!(c.pattern(), "+---");
        assert!(!c.boundary);
    }

    #[test]
    fn zero_coefficients_are_flagged() {
        let c = case_from([1.0, 0.0, -1.0, 1.0], 0.5);
        assert!(c.boundary);
        assert_eq!(c.case_id, None);
        assert_eq!(c.possible_root_counts, vec![0, 2]);
    }

    #[test]
    fn subcritical_case_one_has_no_equilibrium() {
        let p = Params::fitted();
        let below = p.with(ParamName::Beta, p.beta * 0.5 / r0(&p).r0);
        let case = classify(&build_polynomial(&below).unwrap());
        assert_eq!(case.case_id, Some(1));
        assert!(endemic_equilibria(&below).unwrap().is_empty());
    }

    #[test]
    fn fitted_vector_has_one_endemic_equilibrium() {
        let p = Params::fitted();
        let eqs = endemic_equilibria(&p).unwrap();
        assert_eq!(eqs.len(), 1);
        let e = eqs[0];
        assert!(e.residual <= 1e-8 * p.recruitment, "{}", e.residual);
        let lambda = crate::model::force_of_infection(&e.state, &p).unwrap();
        assert!((lambda - e.lambda_star).abs() <= 1e-10 * e.lambda_star);
    }

    #[test]
    fn perfect_vaccine_equilibrium_has_no_vaccinated_infections() {
        let p = Params {
            rho: 1.0,
            omega: 0.0,
            varphi: 0.0,
            beta: 20.0,
            ..Params::fitted()
        };
        assert!(r0(&p).r0 > 1.0);
        let eqs = endemic_equilibria(&p).unwrap();
        assert_eq!(eqs.len(), 1);
        assert_eq!(eqs[0].state.a1, 0.0);
        assert_eq!(eqs[0].state.i1, 0.0);
        assert!(eqs[0].residual <= 1e-8 * p.recruitment);
    }

    #[test]
    fn vaccination_lowers_symptomatic_prevalence() {
        let p = Params {
            rho: 1.0,
            omega: 0.0,
            varphi: 0.0,
            beta: 20.0,
            ..Params::fitted()
        };
        let report = vaccination_suppression_check(&p).unwrap();
        assert!(report.suppressed, "{report:?}");
        let same = vaccination_suppression_check(&p.with(ParamName::Sigma, 0.0)).unwrap();
        assert_eq!(same.i_star_sigma, same.i_star_zero);
        assert!(!same.suppressed);
    }

    #[test]
    fn suppression_check_guards_its_regime() {
        assert!(matches!(
            vaccination_suppression_check(&Params::fitted()),
            Err(Error::InvalidRegime(_))
        ));
        let p = Params {
            rho: 1.0,
            omega: 0.0,
            varphi: 0.0,
            beta: 1.0,
            ..Params::fitted()
        };
        assert!(matches!(
            vaccination_suppression_check(&p),
            Err(Error::NotApplicable(_))
        ));
    }
}
