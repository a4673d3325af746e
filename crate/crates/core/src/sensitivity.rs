//! Local sensitivity of the basic reproduction number.
//!
//! The local index of a parameter `p` is `γ_p = ∂R₀/∂p` and the normalized
//! index is `ε_p = γ_p · p / R₀`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ParamName, Params};
use crate::threshold::r0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityRow {
    pub param: ParamName,
    pub value: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

/// Parameters that do not appear in `R₀`.
pub fn is_structural_zero(name: ParamName) -> bool {
    matches!(
        name,
        ParamName::Lambda | ParamName::Gamma3 | ParamName::Omega | ParamName::Varphi
    )
}

/// Exact derivative for the parameters that enter `R₀` linearly.
pub fn linear_index(params: &Params, name: ParamName) -> Option<f64> {
    let k = params.rates();
    match name {
        ParamName::Beta => Some(r0(&Params { beta: 1.0, ..*params }).r0),
        ParamName::Nu => Some(k.b1 / k.k1),
        ParamName::Nu1 => Some(k.b3 / k.k3),
        ParamName::Kappa => Some(k.b4 / k.k4),
        _ => None,
    }
}

/// Differences each of the four contributions before summing, so a small
/// contribution is not swamped by rounding in the total.
fn central_difference(params: &Params, name: ParamName, h: f64) -> f64 {
    let p = params.get(name);
    let plus = r0(&params.with(name, p + h));
    let minus = r0(&params.with(name, p - h));
    ((plus.r_a - minus.r_a) + (plus.r_i - minus.r_i) + (plus.r_a1 - minus.r_a1) + (plus.r_i1 - minus.r_i1)) / (2.0 * h)
}

/// Rounding error, in ulps of `R₀`, allowed in each evaluated contribution.
const ROUNDING_ULPS: f64 = 64.0;

/// Central difference of `R₀` with step `h = max(1e-6·|p|, 1e-10)`, checked
/// against step `h/2` up to rounding noise and returned with Richardson
/// extrapolation.
pub fn finite_difference_index(params: &Params, name: ParamName) -> Result<f64> {
    let p = params.get(name);
    if !p.is_finite() {
        return Err(Error::InvalidParameter {
            name: name.key(),
            reason: format!("must be finite, got {p}"),
        });
    }
    let h = (1e-6 * p.abs()).max(1e-10);
    let coarse = central_difference(params, name, h);
    let fine = central_difference(params, name, 0.5 * h);
    let r0_value = r0(params).r0;
    let floor = ROUNDING_ULPS * f64::EPSILON * r0_value / (0.5 * h);
    if !coarse.is_finite() || !fine.is_finite() || (coarse - fine).abs() > 1e-6 * coarse.abs().max(fine.abs()) + floor {
        return Err(Error::DerivativeInstability {
            param: name.key(),
            coarse,
            fine,
        });
    }
    Ok((4.0 * fine - coarse) / 3.0)
}

/// `γ_p = ∂R₀/∂p`: zero for parameters absent from `R₀`, exact for the
/// linear ones, and a verified central difference otherwise.
pub fn local_index(params: &Params, name: ParamName) -> Result<f64> {
    if is_structural_zero(name) {
        return Ok(0.0);
    }
    if let Some(exact) = linear_index(params, name) {
        return Ok(exact);
    }
    finite_difference_index(params, name)
}

/// `ε_p = γ_p · p / R₀`.
pub fn normalized_index(params: &Params, name: ParamName) -> Result<f64> {
    let gamma = local_index(params, name)?;
    normalize(params, name, gamma)
}

fn normalize(params: &Params, name: ParamName, gamma: f64) -> Result<f64> {
    if is_structural_zero(name) {
        return Ok(0.0);
    }
    let r0_value = r0(params).r0;
    if r0_value == 0.0 {
        return Err(Error::UndefinedIndex { param: name.key() });
    }
    if name == ParamName::Beta {
        // R₀ is homogeneous of degree one in β.
        return Ok(1.0);
    }
    Ok(gamma * params.get(name) / r0_value)
}

/// One row per parameter, in parameter-table order.
pub fn sensitivity_table(params: &Params) -> Result<Vec<SensitivityRow>> {
    ParamName::ALL
        .par_iter()
        .map(|&name| {
            let gamma = local_index(params, name)?;
            Ok(SensitivityRow {
                param: name,
                value: params.get(name),
                gamma,
                epsilon: normalize(params, name, gamma)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(table: &[SensitivityRow], name: ParamName) -> SensitivityRow {
        *table.iter().find(|r| r.param == name).unwrap()
    }

    #[test]
    fn beta_index_is_exact() {
        let p = Params::fitted();
        let r = r0(&p).r0;
        assert!((local_index(&p, ParamName::Beta).unwrap() - r / p.beta).abs() <= 1e-12 * r / p.beta);
        assert_eq!(normalized_index(&p, ParamName::Beta).unwrap(), 1.0);
    }

    #[test]
    fn finite_differences_match_linear_parameters() {
        let p = Params::fitted();
        for name in [ParamName::Beta, ParamName::Nu, ParamName::Nu1, ParamName::Kappa] {
            let exact = linear_index(&p, name).unwrap();
            let fd = finite_difference_index(&p, name).unwrap();
            assert!((fd - exact).abs() <= 1e-8 * exact.abs(), "{name}: {fd} vs {exact}");
        }
    }

    #[test]
    fn absent_parameters_give_exact_zeros() {
        let table = sensitivity_table(&Params::fitted()).unwrap();
        for name in [
            ParamName::Lambda,
            ParamName::Gamma3,
            ParamName::Omega,
            ParamName::Varphi,
        ] {
            let r = row(&table, name);
            assert_eq!((r.gamma, r.epsilon), (0.0, 0.0));
        }
    }

    #[test]
    fn fitted_vector_indices() {
        let p = Params::fitted();
        let table = sensitivity_table(&p).unwrap();
        assert_eq!(table.len(), 23);
        let sigma = row(&table, ParamName::Sigma);
        assert!((sigma.gamma - 185.9).abs() <= 0.1 * 185.9, "{}", sigma.gamma);
        assert!(sigma.epsilon > 0.0);
        assert!((row(&table, ParamName::Kappa).epsilon - 0.5181).abs() <= 0.05);
        assert!((row(&table, ParamName::Rho).epsilon + 0.4251).abs() <= 0.05);
        assert!(row(&table, ParamName::Theta).epsilon.abs() < row(&table, ParamName::Theta1).epsilon.abs());
        assert!(row(&table, ParamName::Epsilon).epsilon.abs() < row(&table, ParamName::Epsilon1).epsilon.abs());
        let r = r0(&p).r0;
        for entry in &table {
            if entry.value != 0.0 && !is_structural_zero(entry.param) {
                let expected = entry.gamma * entry.value / r;
                assert!(
                    (entry.epsilon - expected).abs() <= 1e-12 * expected.abs(),
                    "{}",
                    entry.param
                );
            }
        }
    }

    #[test]
    fn undefined_without_transmission() {
        let p = Params::fitted().with(ParamName::Beta, 0.0);
        assert!(matches!(
            normalized_index(&p, ParamName::Sigma),
            Err(Error::UndefinedIndex { .. })
        ));
    }

    #[test]
    fn doubling_beta_keeps_normalized_indices() {
        let p = Params::fitted();
        let doubled = p.with(ParamName::Beta, 2.0 * p.beta);
        assert_eq!(r0(&doubled).r0, 2.0 * r0(&p).r0);
        let a = sensitivity_table(&p).unwrap();
        let b = sensitivity_table(&doubled).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(
                (x.epsilon - y.epsilon).abs() <= 1e-9 * x.epsilon.abs(),
                "{}: {} vs {}",
                x.param,
                x.epsilon,
                y.epsilon
            );
        }
    }
}
