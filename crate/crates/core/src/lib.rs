//! Eight-compartment vaccination model of COVID-19 transmission (S, V, A, I,
//! A1, I1, Q, R).
//!
//! The crate is organised around a single parameter record, [`Params`], that
//! every analysis reads from:
//!
//! - [`model`]: force of infection, right-hand side and derived rates.
//! - [`ode`]: adaptive Dormand–Prince integration with feasibility checks.
//! - [`threshold`]: disease-free equilibrium, R₀ and its next-generation
//!   matrix oracle, local stability of the disease-free state.
//! - [`equilibrium`]: the endemic-equilibrium polynomial, its sign
//!   classification and reconstruction of endemic states.
//! - [`bifurcation`]: critical contact rate, center-manifold coefficients and
//!   bistability experiments.
//! - [`data`] and [`fit`]: JHU time-series ingestion and least-squares
//!   calibration.
//! - [`sensitivity`]: local and normalized sensitivity indices of R₀.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bifurcation;
pub mod cli;
pub mod data;
pub mod equilibrium;
pub mod error;
pub mod fit;
pub mod io;
pub mod model;
pub mod ode;
pub mod sensitivity;
pub mod threshold;

pub use error::{Error, Result};
pub use model::{DerivedRates, ParamName, Params, State};
