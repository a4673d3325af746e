//! Disease-free equilibrium, basic reproduction number and local stability
//! of the disease-free state.

use nalgebra::{Complex, SMatrix, SVector};

use crate::error::{Error, Result};
use crate::model::{Params, State, A, A1, I, I1, Q, R, S, V};

pub type Matrix5 = SMatrix<f64, 5, 5>;
pub type Matrix8 = SMatrix<f64, 8, 8>;

/// `E₀ = (Λ/(σ+μ), σΛ/(μ(σ+μ)), 0, …, 0)`.
pub fn disease_free_equilibrium(params: &Params) -> State {
    let k0 = params.sigma + params.mu;
    State {
        s: params.recruitment / k0,
        v: params.sigma * params.recruitment / (params.mu * k0),
        ..State::default()
    }
}

/// Basic reproduction number split by infectious compartment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct R0Breakdown {
    pub r_a: f64,
    pub r_i: f64,
    pub r_a1: f64,
    pub r_i1: f64,
    pub r0: f64,
}

/// Closed-form `R₀ = νB₁/k₁ + B₂/k₂ + ν₁B₃/k₃ + κB₄/k₄`.
pub fn r0(params: &Params) -> R0Breakdown {
    let k = params.rates();
    let r_a = params.nu * k.b1 / k.k1;
    let r_i = k.b2 / k.k2;
    let r_a1 = params.nu1 * k.b3 / k.k3;
    let r_i1 = params.kappa * k.b4 / k.k4;
    R0Breakdown {
        r_a,
        r_i,
        r_a1,
        r_i1,
        r0: r_a + r_i + r_a1 + r_i1,
    }
}

/// New-infection Jacobian `J_F` at `E₀`, coordinates `(A, I, A1, I1, Q)`.
pub fn new_infection_matrix(params: &Params) -> Matrix5 {
    let k = params.rates();
    let weights = [params.nu, 1.0, params.nu1, params.kappa, 0.0];
    let blocks = [k.b1, k.b2, k.b3, k.b4, 0.0];
    Matrix5::from_fn(|i, j| blocks[i] * weights[j])
}

/// Transition Jacobian `J_U` at `E₀`, coordinates `(A, I, A1, I1, Q)`.
pub fn transition_matrix(params: &Params) -> Matrix5 {
    let k = params.rates();
    let mut u = Matrix5::from_diagonal(&SVector::from([k.k1, k.k2, k.k3, k.k4, k.k5]));
    u[(4, 0)] = -params.theta;
    u[(4, 1)] = -params.epsilon;
    u[(4, 2)] = -params.theta1;
    u[(4, 3)] = -params.epsilon1;
    u
}

/// Closed-form inverse of [`transition_matrix`].
pub fn transition_matrix_inverse(params: &Params) -> Result<Matrix5> {
    let k = params.rates();
    let diag = [k.k1, k.k2, k.k3, k.k4, k.k5];
    if let Some(pos) = diag.iter().position(|&v| v == 0.0 || !v.is_finite()) {
        return Err(Error::DegenerateRates(format!(
            "J_U is singular: k{} = {}",
            pos + 1,
            diag[pos]
        )));
    }
    let mut inv = Matrix5::from_diagonal(&SVector::from(diag.map(|v| 1.0 / v)));
    inv[(4, 0)] = params.theta / (k.k1 * k.k5);
    inv[(4, 1)] = params.epsilon / (k.k2 * k.k5);
    inv[(4, 2)] = params.theta1 / (k.k3 * k.k5);
    inv[(4, 3)] = params.epsilon1 / (k.k4 * k.k5);
    Ok(inv)
}

/// Next-generation matrix `K = J_F J_U⁻¹`.
pub fn next_generation_matrix(params: &Params) -> Result<Matrix5> {
    Ok(new_infection_matrix(params) * transition_matrix_inverse(params)?)
}

/// Eigenvalues of the next-generation matrix.
pub fn ngm_spectrum(params: &Params) -> Result<Vec<Complex<f64>>> {
    Ok(next_generation_matrix(params)?
        .complex_eigenvalues()
        .iter()
        .copied()
        .collect())
}

/// Spectral radius of the next-generation matrix.
pub fn r0_ngm_oracle(params: &Params) -> Result<f64> {
    Ok(ngm_spectrum(params)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Jacobian of the vector field at `E₀`, coordinates `(S, V, A, I, A1, I1, Q, R)`.
pub fn dfe_jacobian(params: &Params) -> Matrix8 {
    let p = params;
    let k = p.rates();
    let m1 = p.mu * p.beta / k.k0;
    let m2 = p.sigma * p.beta / k.k0;
    let mut c = [0.0; 8];
    c[A] = p.nu;
    c[I] = 1.0;
    c[A1] = p.nu1;
    c[I1] = p.kappa;

    let mut j = Matrix8::zeros();
    j[(S, S)] = -k.k0;
    j[(S, R)] = p.varphi;
    j[(V, S)] = p.sigma;
    j[(V, V)] = -p.mu;
    j[(V, R)] = p.omega - p.varphi;
    for col in [A, I, A1, I1] {
        j[(S, col)] = -m1 * c[col];
        j[(V, col)] = -(1.0 - p.rho) * m2 * c[col];
        j[(A, col)] = p.eta * m1 * c[col];
        j[(I, col)] = (1.0 - p.eta) * m1 * c[col];
        j[(A1, col)] = p.phi * (1.0 - p.rho) * m2 * c[col];
        j[(I1, col)] = (1.0 - p.phi) * (1.0 - p.rho) * m2 * c[col];
    }
    j[(A, A)] -= k.k1;
    j[(I, I)] -= k.k2;
    j[(A1, A1)] -= k.k3;
    j[(I1, I1)] -= k.k4;
    j[(Q, A)] = p.theta;
    j[(Q, I)] = p.epsilon;
    j[(Q, A1)] = p.theta1;
    j[(Q, I1)] = p.epsilon1;
    j[(Q, Q)] = -k.k5;
    j[(R, A)] = p.gamma1;
    j[(R, I)] = p.gamma2;
    j[(R, A1)] = p.gamma4;
    j[(R, I1)] = p.gamma5;
    j[(R, Q)] = p.gamma3;
    j[(R, R)] = -k.k6;
    j
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub eigenvalues: Vec<Complex<f64>>,
    pub max_real_part: f64,
    pub r0: f64,
    /// True when every eigenvalue has a negative real part.
    pub stable: bool,
}

/// Spectrum of the Jacobian at the disease-free equilibrium.
pub fn dfe_local_stability(params: &Params) -> StabilityReport {
    let eigenvalues: Vec<Complex<f64>> = dfe_jacobian(params).complex_eigenvalues().iter().copied().collect();
    let max_real_part = eigenvalues.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    StabilityReport {
        eigenvalues,
        max_real_part,
        r0: r0(params).r0,
        stable: max_real_part < 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{rhs, ParamName};

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn dfe_without_vaccination() {
        let p = Params::fitted().with(ParamName::Sigma, 0.0);
        let e = disease_free_equilibrium(&p);
        assert_eq!(e.s, p.recruitment / p.mu);
        assert_eq!(e.v, 0.0);
    }

    #[test]
    fn dfe_matches_hand_arithmetic() {
        let e = disease_free_equilibrium(&Params::fitted());
        // 3538.3 / (7.9e-4 + 2.6433e-5) and 7.9e-4 * 3538.3 / (2.6433e-5 * 8.16433e-4)
        let s = 3538.3 / 8.16433e-4;
        let v = 7.9e-4 * 3538.3 / (2.6433e-5 * 8.16433e-4);
        assert!(rel(e.s, s) < 1e-12);
        assert!(rel(e.v, v) < 1e-12);
        assert!(rel(e.s + e.v, 3538.3 / 2.6433e-5) < 1e-12);
    }

    #[test]
    fn dfe_is_a_fixed_point() {
        let p = Params::fitted();
        let d = rhs(&disease_free_equilibrium(&p), &p).unwrap();
        assert!(d.iter().all(|v| v.abs() <= 1e-12 * p.recruitment));
    }

    #[test]
    fn r0_of_fitted_vector() {
        let b = r0(&Params::fitted());
        assert!((b.r0 - 6.0744).abs() < 1e-3, "{}", b.r0);
        assert_eq!(b.r0, b.r_a + b.r_i + b.r_a1 + b.r_i1);
    }

    #[test]
    fn r0_vanishes_without_contacts() {
        let b = r0(&Params::fitted().with(ParamName::Beta, 0.0));
        assert_eq!([b.r_a, b.r_i, b.r_a1, b.r_i1, b.r0], [0.0; 5]);
        assert_eq!(
            r0_ngm_oracle(&Params::fitted().with(ParamName::Beta, 0.0)).unwrap(),
            0.0
        );
    }

    #[test]
    fn perfect_vaccine_reduces_r0_to_two_terms() {
        let p = Params::fitted().with(ParamName::Rho, 1.0);
        let b = r0(&p);
        assert_eq!(b.r_a1, 0.0);
        assert_eq!(b.r_i1, 0.0);
        let k0 = p.sigma + p.mu;
        let k1 = p.theta + p.gamma1 + p.mu;
        let k2 = p.epsilon + p.gamma2 + p.delta + p.mu;
        let reduced = p.beta * p.mu / k0 * (p.nu * p.eta / k1 + (1.0 - p.eta) / k2);
        assert!(rel(b.r0, reduced) < 1e-14);
    }

    #[test]
    fn closed_form_inverse_is_an_inverse() {
        let p = Params::fitted();
        let prod = transition_matrix(&p) * transition_matrix_inverse(&p).unwrap();
        assert!((prod - Matrix5::identity()).amax() < 1e-12);
    }

    #[test]
    fn ngm_has_rank_one_spectrum() {
        let p = Params::fitted();
        let mut moduli: Vec<f64> = ngm_spectrum(&p).unwrap().iter().map(|z| z.norm()).collect();
        moduli.sort_by(f64::total_cmp);
        assert!(moduli[..4].iter().all(|&m| m < 1e-10), "{moduli:?}");
        assert!(rel(moduli[4], r0(&p).r0) < 1e-10);
    }

    #[test]
    fn singular_transition_matrix_is_reported() {
        let p = Params {
            theta: 0.0,
            gamma1: 0.0,
            mu: 0.0,
            ..Params::fitted()
        };
        assert!(matches!(r0_ngm_oracle(&p), Err(Error::DegenerateRates(_))));
    }

    #[test]
    fn stability_follows_the_threshold() {
        let base = Params::fitted();
        let r = r0(&base).r0;
        let below = base.with(ParamName::Beta, base.beta * 0.5 / r);
        let above = base.with(ParamName::Beta, base.beta * 2.0 / r);
        assert!(dfe_local_stability(&below).max_real_part < 0.0);
        assert!(dfe_local_stability(&above).max_real_part > 0.0);
        let at = base.with(ParamName::Beta, base.beta / r);
        assert!(dfe_local_stability(&at).max_real_part.abs() < 1e-8);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = Params::fitted();
        let e = disease_free_equilibrium(&p);
        let j = dfe_jacobian(&p);
        let x0 = e.to_array();
        for col in 0..8 {
            let h = 1e-3;
            let mut plus = x0;
            let mut minus = x0;
            plus[col] += h;
            minus[col] -= h;
            let fp = rhs(&State::from_array(plus, 0.0), &p).unwrap();
            let fm = rhs(&State::from_array(minus, 0.0), &p).unwrap();
            for row in 0..8 {
                let fd = (fp[row] - fm[row]) / (2.0 * h);
                assert!(
                    (fd - j[(row, col)]).abs() <= 1e-6 * (1.0 + j[(row, col)].abs()),
                    "({row},{col}): {fd} vs {}",
                    j[(row, col)]
                );
            }
        }
    }
}
