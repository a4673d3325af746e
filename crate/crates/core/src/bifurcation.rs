//! Direction of the bifurcation at `R₀ = 1` from the centre-manifold
//! coefficients `a` and `b`, and a numerical bistability experiment.

use nalgebra::SVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::equilibrium::{endemic_equilibria, EndemicEquilibrium};
use crate::error::{Error, Result};
use crate::model::{Params, State, A, A1, COMPARTMENTS, I, I1, Q, R, S, V};
use crate::ode::{integrate, IntegratorConfig, Trajectory};
use crate::threshold::{dfe_jacobian, disease_free_equilibrium, r0, Matrix8};

pub type Vector8 = SVector<f64, COMPARTMENTS>;

/// Second derivatives `H[k][i][j] = ∂²f_k/∂x_i∂x_j`.
pub type Hessian = [[[f64; COMPARTMENTS]; COMPARTMENTS]; COMPARTMENTS];

/// Contact rate at which `R₀ = 1`.
pub fn critical_beta(params: &Params) -> Result<f64> {
    let unit = r0(&Params { beta: 1.0, ..*params }).r0;
    if !(unit > 0.0) || !unit.is_finite() {
        return Err(Error::NoThreshold);
    }
    Ok(1.0 / unit)
}

/// Copy of `params` with `β = β*`.
pub fn at_threshold(params: &Params) -> Result<Params> {
    Ok(Params {
        beta: critical_beta(params)?,
        ..*params
    })
}

/// Left (`w`) and right (`v`) null vectors of `J(E₀)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullVectors {
    pub left: Vector8,
    pub right: Vector8,
    /// `‖wJ‖` and `‖Jv‖`.
    pub residuals: (f64, f64),
    pub jacobian_norm: f64,
}

/// Null vectors of the Jacobian at the disease-free equilibrium, normalised
/// so that `v·w = 1` with a non-negative `A` component of `w`. The caller is
/// expected to pass parameters at the threshold.
pub fn null_eigenvectors(params: &Params) -> Result<NullVectors> {
    let j = dfe_jacobian(params);
    let norm = j.norm();
    let tol = 1e-8 * norm;

    let svd = j.svd(true, true);
    let mut order: Vec<usize> = (0..COMPARTMENTS).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let smallest = svd.singular_values[order[0]];
    let next = svd.singular_values[order[1]];
    if smallest > tol || next <= tol {
        return Err(Error::DegenerateSpectrum { smallest, next });
    }
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let mut left: Vector8 = u.column(order[0]).into_owned();
    let mut right: Vector8 = v_t.row(order[0]).transpose().into_owned();

    for k in [S, V, Q, R] {
        if left[k].abs() > 1e-8 * left.amax() {
            return Err(Error::DegenerateSpectrum { smallest, next });
        }
        left[k] = 0.0;
    }
    let orientation = if left[A] != 0.0 {
        left[A]
    } else {
        left[A] + left[I] + left[A1] + left[I1]
    };
    if orientation < 0.0 {
        left = -left;
    }
    let overlap = left.dot(&right);
    if overlap.abs() <= 1e-12 * left.norm() * right.norm() {
        return Err(Error::DegenerateSpectrum { smallest, next });
    }
    right /= overlap;

    let residuals = ((left.transpose() * j).norm(), (j * right).norm());
    Ok(NullVectors {
        left,
        right,
        residuals,
        jacobian_norm: norm,
    })
}

/// Coefficients of `λS` and `λV` in each component of the vector field.
fn transmission_coefficients(p: &Params) -> ([f64; COMPARTMENTS], [f64; COMPARTMENTS]) {
    let mut via_s = [0.0; COMPARTMENTS];
    via_s[S] = -1.0;
    via_s[A] = p.eta;
    via_s[I] = 1.0 - p.eta;
    let mut via_v = [0.0; COMPARTMENTS];
    let vac = 1.0 - p.rho;
    via_v[V] = -vac;
    via_v[A1] = p.phi * vac;
    via_v[I1] = (1.0 - p.phi) * vac;
    (via_s, via_v)
}

fn infectiousness_weights(p: &Params) -> [f64; COMPARTMENTS] {
    let mut c = [0.0; COMPARTMENTS];
    c[A] = p.nu;
    c[I] = 1.0;
    c[A1] = p.nu1;
    c[I1] = p.kappa;
    c
}

/// Hessian of `βXY/N` where `Y = c·x` and `X` is compartment `target`.
fn product_hessian(
    beta: f64,
    x: &[f64; COMPARTMENTS],
    c: &[f64; COMPARTMENTS],
    target: usize,
) -> [[f64; COMPARTMENTS]; COMPARTMENTS] {
    let n: f64 = x.iter().sum();
    let y: f64 = c.iter().zip(x).map(|(a, b)| a * b).sum();
    let xs = x[target];
    let d = |i: usize| if i == target { 1.0 } else { 0.0 };
    let mut h = [[0.0; COMPARTMENTS]; COMPARTMENTS];
    for (i, row) in h.iter_mut().enumerate() {
        for (j, entry) in row.iter_mut().enumerate() {
            *entry = beta
                * ((d(i) * c[j] + d(j) * c[i]) / n
                    - (d(i) * y + xs * c[i]) / (n * n)
                    - (d(j) * y + xs * c[j]) / (n * n)
                    + 2.0 * xs * y / (n * n * n));
        }
    }
    h
}

/// Analytic second derivatives of the vector field at state `x`.
pub fn hessian(params: &Params, x: &[f64; COMPARTMENTS]) -> Hessian {
    let c = infectiousness_weights(params);
    let hs = product_hessian(params.beta, x, &c, S);
    let hv = product_hessian(params.beta, x, &c, V);
    let (via_s, via_v) = transmission_coefficients(params);
    let mut out = [[[0.0; COMPARTMENTS]; COMPARTMENTS]; COMPARTMENTS];
    for k in 0..COMPARTMENTS {
        for i in 0..COMPARTMENTS {
            for j in 0..COMPARTMENTS {
                out[k][i][j] = via_s[k] * hs[i][j] + via_v[k] * hv[i][j];
            }
        }
    }
    out
}

/// `∂J/∂β` at the disease-free equilibrium.
pub fn dfe_jacobian_beta_derivative(params: &Params) -> Matrix8 {
    dfe_jacobian(&Params { beta: 1.0, ..*params }) - dfe_jacobian(&Params { beta: 0.0, ..*params })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Backward,
    Forward,
    Indeterminate,
}

impl Direction {
    pub fn classify(a: f64, b: f64) -> Direction {
        if b > 0.0 && a > 0.0 {
            Direction::Backward
        } else if b > 0.0 && a < 0.0 {
            Direction::Forward
        } else {
            Direction::Indeterminate
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Backward => "backward",
            Direction::Forward => "forward",
            Direction::Indeterminate => "indeterminate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BifurcationReport {
    pub beta_star: f64,
    pub a_coeff: f64,
    pub b_coeff: f64,
    pub direction: Direction,
    /// `‖wJ‖` and `‖Jv‖` at `β*`.
    pub eigen_residuals: (f64, f64),
    pub jacobian_norm: f64,
    /// False when `b ≤ 0`, contradicting the expected sign.
    pub b_positive: bool,
    pub vectors: NullVectors,
}

/// Centre-manifold coefficients at `β = β*` (the `β` in `params` is ignored).
pub fn bifurcation_coefficients(params: &Params) -> Result<BifurcationReport> {
    params.validate()?;
    let p = at_threshold(params)?;
    let vectors = null_eigenvectors(&p)?;
    let (w, v) = (vectors.left, vectors.right);

    let e0 = disease_free_equilibrium(&p).to_array();
    let h = hessian(&p, &e0);
    let mut a = 0.0;
    for (k, hk) in h.iter().enumerate() {
        if w[k] == 0.0 {
            continue;
        }
        let mut quad = 0.0;
        for i in 0..COMPARTMENTS {
            for j in 0..COMPARTMENTS {
                quad += v[i] * v[j] * hk[i][j];
            }
        }
        a += w[k] * quad;
    }
    let b = (w.transpose() * dfe_jacobian_beta_derivative(&p) * v)[(0, 0)];

    Ok(BifurcationReport {
        beta_star: p.beta,
        a_coeff: a,
        b_coeff: b,
        direction: Direction::classify(a, b),
        eigen_residuals: vectors.residuals,
        jacobian_norm: vectors.jacobian_norm,
        b_positive: b > 0.0,
        vectors,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attractor {
    DiseaseFree,
    Endemic,
}

impl Attractor {
    /// Classifies by the final infectious mass against one individual.
    pub fn of(state: &State) -> Attractor {
        if state.infectious() < 1.0 {
            Attractor::DiseaseFree
        } else {
            Attractor::Endemic
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Attractor::DiseaseFree => "disease-free",
            Attractor::Endemic => "endemic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BistabilityReport {
    pub r0: f64,
    pub low: Trajectory,
    pub high: Trajectory,
    pub low_attractor: Attractor,
    pub high_attractor: Attractor,
    /// The two runs end on different attractors.
    pub bistable: bool,
}

/// Default horizon of the bistability experiment: ten demographic time scales.
pub fn default_horizon(params: &Params) -> f64 {
    10.0 / params.mu
}

/// Integrates two initial conditions below threshold and classifies where
/// each ends up.
pub fn bistability_demo(params: &Params, initial_low: &State, initial_high: &State) -> Result<BistabilityReport> {
    let horizon = default_horizon(params);
    let config = IntegratorConfig::default().with_stride(horizon / 1000.0);
    bistability_demo_with(params, initial_low, initial_high, horizon, &config)
}

pub fn bistability_demo_with(
    params: &Params,
    initial_low: &State,
    initial_high: &State,
    horizon: f64,
    config: &IntegratorConfig,
) -> Result<BistabilityReport> {
    let r0 = r0(params).r0;
    if !(r0 < 1.0) {
        return Err(Error::InvalidRegime(format!(
            "bistability below threshold requires R0 < 1, got {r0:.6}"
        )));
    }
    let low = integrate(initial_low, params, initial_low.t + horizon, config)?;
    let high = integrate(initial_high, params, initial_high.t + horizon, config)?;
    let low_attractor = Attractor::of(low.last());
    let high_attractor = Attractor::of(high.last());
    Ok(BistabilityReport {
        r0,
        bistable: low_attractor != high_attractor,
        low,
        high,
        low_attractor,
        high_attractor,
    })
}

/// Initial conditions for the bistability experiment: the disease-free state
/// seeded with a tenth of the smallest endemic infection, and the largest
/// endemic equilibrium with its infections reduced by a tenth.
pub fn bistability_initials(params: &Params) -> Result<(State, State)> {
    let equilibria = endemic_equilibria(params)?;
    let by_lambda = |a: &&EndemicEquilibrium, b: &&EndemicEquilibrium| a.lambda_star.total_cmp(&b.lambda_star);
    let (Some(smallest), Some(largest)) = (equilibria.iter().min_by(by_lambda), equilibria.iter().max_by(by_lambda))
    else {
        return Err(Error::NotApplicable("no feasible endemic equilibrium".into()));
    };
    let infected = [A, I, A1, I1, Q];
    let scale = if equilibria.len() > 1 { 0.1 } else { 1e-3 };
    let mut low = disease_free_equilibrium(params).to_array();
    let small = smallest.state.to_array();
    for k in infected {
        low[k] = scale * small[k];
    }
    let mut high = largest.state.to_array();
    for k in infected {
        high[k] *= 0.9;
    }
    Ok((State::from_array(low, 0.0), State::from_array(high, 0.0)))
}

/// Parameter set exhibiting a backward bifurcation together with its
/// endemic equilibria below threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardWitness {
    pub params: Params,
    pub report: BifurcationReport,
    pub equilibria: Vec<EndemicEquilibrium>,
    pub draws: usize,
}

/// Random parameter set from the box used by [`search_backward_witness`],
/// with `β` left at zero.
pub fn sample_search_params<G: Rng>(rng: &mut G) -> Params {
    let log_uniform = |rng: &mut G, lo: f64, hi: f64| 10f64.powf(rng.gen_range(lo..hi));
    let rate = |rng: &mut G| rng.gen_range(0.01..0.3);
    let omega = log_uniform(rng, -2.0, 0.0);
    Params {
        recruitment: 1000.0,
        mu: log_uniform(rng, -3.0, -1.5),
        sigma: log_uniform(rng, -2.0, 0.0),
        rho: rng.gen_range(0.5..1.0),
        omega,
        varphi: omega * rng.gen_range(0.5..1.0),
        theta: rate(rng),
        theta1: rate(rng),
        gamma1: rate(rng),
        gamma2: rate(rng),
        gamma3: rate(rng),
        gamma4: rate(rng),
        gamma5: rate(rng),
        epsilon: rate(rng),
        epsilon1: rate(rng),
        delta: rng.gen_range(0.0..0.05),
        delta1: rng.gen_range(0.0..0.05),
        eta: rng.gen_range(0.0..1.0),
        phi: rng.gen_range(0.0..1.0),
        nu: rng.gen_range(0.0..2.0),
        nu1: rng.gen_range(0.0..2.0),
        kappa: rng.gen_range(0.0..2.0),
        beta: 0.0,
    }
}

/// Seeded random search for parameters with `a > 0`, `b > 0` and a feasible
/// endemic equilibrium at `β = 0.98 β*`.
pub fn search_backward_witness(seed: u64, max_draws: usize) -> Option<BackwardWitness> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for draw in 1..=max_draws {
        let candidate = sample_search_params(&mut rng);
        let Ok(report) = bifurcation_coefficients(&candidate) else {
            continue;
        };
        if report.direction != Direction::Backward {
            continue;
        }
        let params = Params {
            beta: 0.98 * report.beta_star,
            ..candidate
        };
        let Ok(equilibria) = endemic_equilibria(&params) else {
            continue;
        };
        if r0(&params).r0 < 1.0 && !equilibria.is_empty() {
            return Some(BackwardWitness {
                params,
                report,
                equilibria,
                draws: draw,
            });
        }
    }
    None
}
