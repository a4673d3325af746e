//! Command-line front end.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bifurcation::{bifurcation_coefficients, bistability_demo, bistability_initials, search_backward_witness};
use crate::data::{
    self, derive_active, estimate_primaries, initial_state, DataFiles, Demographics, InitialStateConfig,
    DEFAULT_COUNTRY, DEFAULT_WINDOW_DAYS,
};
use crate::equilibrium::{build_polynomial, classify, endemic_candidates};
use crate::error::{Error, Result};
use crate::fit::{fit, FitOptions, FitSpec, Observations};
use crate::io;
use crate::model::{Params, State, I};
use crate::ode::{integrate, integrate_at, IntegratorConfig};
use crate::sensitivity::sensitivity_table;
use crate::threshold::{dfe_local_stability, disease_free_equilibrium, r0};

#[derive(Debug, Parser)]
#[command(
    name = "vaxdyn",
    version,
    about = "Vaccination epidemic model: simulation, analysis and calibration"
)]
pub struct Cli {
    /// Parameter file (TOML, `key = value`); omitted keys keep the fitted defaults.
    #[arg(long, global = true)]
    pub params: Option<PathBuf>,

    /// Output directory, created if absent.
    #[arg(long, global = true, env = "VAXDYN_OUT", default_value = "vaxdyn-out")]
    pub out: PathBuf,

    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Relative tolerance of the integrator.
    #[arg(long, global = true)]
    pub rel_tol: Option<f64>,

    /// Absolute tolerance of the integrator, in individuals.
    #[arg(long, global = true)]
    pub abs_tol: Option<f64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the model and write the trajectory.
    Simulate(SimulateArgs),
    /// Reproduction number, equilibria, sign case and bifurcation report.
    Analyze,
    /// Calibrate parameters against active-case counts.
    Fit(FitArgs),
    /// Local sensitivity indices of the reproduction number.
    Sensitivity,
    /// Two initial conditions below threshold converging to different attractors.
    Bistability(BistabilityArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Initial state file (TOML with keys S, V, A, I, A1, I1, Q, R).
    /// Defaults to the disease-free state with ten symptomatic infections.
    #[arg(long)]
    pub initial: Option<PathBuf>,
    /// Final time in days.
    #[arg(long, default_value_t = 365.0)]
    pub t_end: f64,
    /// Spacing of output samples in days.
    #[arg(long, default_value_t = 1.0)]
    pub stride: f64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Directory holding the global time-series CSVs.
    #[arg(long, conflicts_with = "active")]
    pub data_dir: Option<PathBuf>,
    /// Active-case CSV with header `day,active` or `date,active`.
    #[arg(long)]
    pub active: Option<PathBuf>,
    #[arg(long, default_value = DEFAULT_COUNTRY)]
    pub country: String,
    /// Fit specification (TOML); defaults to the literature ranges.
    #[arg(long)]
    pub fit_spec: Option<PathBuf>,
    /// Initial state; defaults to one derived from the first observation.
    #[arg(long)]
    pub initial: Option<PathBuf>,
    /// Population used for the derived initial state.
    #[arg(long)]
    pub population: Option<f64>,
    #[arg(long, default_value_t = 8)]
    pub starts: usize,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
}

#[derive(Debug, Args)]
pub struct BistabilityArgs {
    /// Initial state expected to clear the infection.
    #[arg(long, requires = "high")]
    pub low: Option<PathBuf>,
    /// Initial state expected to persist.
    #[arg(long, requires = "low")]
    pub high: Option<PathBuf>,
    /// Horizon in days; defaults to ten demographic time scales.
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Number of random draws when searching for a parameter set.
    #[arg(long, default_value_t = 2000)]
    pub draws: usize,
}

/// Failure of one stage of a command.
#[derive(Debug)]
pub struct CliError {
    pub stage: &'static str,
    pub source: Error,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.stage, self.source)
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        self.source.exit_code()
    }
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, CliError>;
}

impl<T> Stage<T> for Result<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, CliError> {
        self.map_err(|source| CliError { stage, source })
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Runs a parsed command line and returns the summary printed on stdout.
pub fn run(cli: &Cli) -> CliResult<String> {
    fs::create_dir_all(&cli.out)
        .map_err(|e| Error::io(&cli.out, e))
        .stage("output")?;
    match &cli.command {
        Command::Simulate(args) => cmd_simulate(cli, args),
        Command::Analyze => cmd_analyze(cli),
        Command::Fit(args) => cmd_fit(cli, args),
        Command::Sensitivity => cmd_sensitivity(cli),
        Command::Bistability(args) => cmd_bistability(cli, args),
    }
}

fn load_params(cli: &Cli, base: Params) -> CliResult<Params> {
    match &cli.params {
        Some(path) => io::read_params_over(path, base).stage("params"),
        None => Ok(base),
    }
}

fn integrator(cli: &Cli) -> CliResult<IntegratorConfig> {
    let mut config = IntegratorConfig::default();
    if let Some(tol) = cli.rel_tol {
        config.rel_tol = tol;
    }
    if let Some(tol) = cli.abs_tol {
        config.abs_tol = Some(tol);
    }
    config.validate().stage("integrator")?;
    Ok(config)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e)).stage("output")
}

fn cmd_simulate(cli: &Cli, args: &SimulateArgs) -> CliResult<String> {
    let params = load_params(cli, Params::fitted())?;
    let initial = match &args.initial {
        Some(path) => io::read_state(path).stage("initial state")?,
        None => {
            let mut x = disease_free_equilibrium(&params).to_array();
            x[I] = 10.0;
            State::from_array(x, 0.0)
        }
    };
    let config = integrator(cli)?.with_stride(args.stride);
    let traj = integrate(&initial, &params, initial.t + args.t_end, &config).stage("simulate")?;
    let path = cli.out.join("trajectory.csv");
    io::write_file(&path, |w| io::write_trajectory_csv(w, &traj)).stage("output")?;
    let (t_peak, peak) = traj.peak_active();
    let mut summary = io::r0_report(&r0(&params));
    writeln!(
        summary,
        "peak_active = {peak}\npeak_time = {t_peak}\nt_final = {}",
        traj.last().t
    )
    .unwrap();
    summary.push_str(&io::state_report("final_", traj.last()));
    write_text(&cli.out.join("summary.txt"), &summary)?;
    Ok(summary)
}

fn cmd_analyze(cli: &Cli) -> CliResult<String> {
    let params = load_params(cli, Params::fitted())?;
    let mut report = io::r0_report(&r0(&params));
    report.push_str(&io::state_report("dfe_", &disease_free_equilibrium(&params)));
    report.push_str(&io::stability_report(&dfe_local_stability(&params)));
    let poly = build_polynomial(&params).stage("equilibrium")?;
    let [q3, q2, q1, q0] = poly.coefficients();
    writeln!(report, "q3 = {q3}\nq2 = {q2}\nq1 = {q1}\nq0 = {q0}").unwrap();
    report.push_str(&io::sign_case_report(&classify(&poly)));
    let candidates = endemic_candidates(&params).stage("equilibrium")?;
    let feasible = candidates.iter().filter(|e| e.feasible).count();
    writeln!(report, "feasible_endemic_equilibria = {feasible}").unwrap();
    let path = cli.out.join("equilibria.csv");
    io::write_file(&path, |w| io::write_equilibria_csv(w, &candidates)).stage("output")?;
    let bif = bifurcation_coefficients(&params).stage("bifurcation")?;
    report.push_str(&io::bifurcation_report(&bif));
    write_text(&cli.out.join("analysis.txt"), &report)?;
    Ok(report)
}

fn cmd_sensitivity(cli: &Cli) -> CliResult<String> {
    let params = load_params(cli, Params::fitted())?;
    let rows = sensitivity_table(&params).stage("sensitivity")?;
    io::write_file(&cli.out.join("sensitivity.csv"), |w| {
        io::write_sensitivity_csv(w, &rows)
    })
    .stage("output")?;
    io::write_file(&cli.out.join("sensitivity_chart.csv"), |w| {
        io::write_sensitivity_chart(w, &rows)
    })
    .stage("output")?;
    let mut summary = String::new();
    for r in &rows {
        writeln!(summary, "{} = {}", r.param.key(), r.epsilon).unwrap();
    }
    Ok(summary)
}

fn cmd_fit(cli: &Cli, args: &FitArgs) -> CliResult<String> {
    let (observations, base) = match (&args.data_dir, &args.active) {
        (Some(dir), _) => {
            let series = DataFiles::in_dir(dir).load(&args.country).stage("ingest")?;
            let active = derive_active(&series).window(data::window_start(), data::truncation_date());
            if active.is_empty() {
                return Err(Error::FitFailure("no observations in the fitting window".into())).stage("fit");
            }
            let primaries = estimate_primaries(
                &series,
                &Demographics::south_africa(),
                data::window_start(),
                data::truncation_date(),
                DEFAULT_WINDOW_DAYS,
            )
            .stage("ingest")?;
            let base = Params {
                recruitment: primaries.recruitment,
                mu: primaries.mu,
                sigma: primaries.sigma,
                ..Params::initial_estimates()
            };
            (Observations::from(&active), base)
        }
        (None, Some(path)) => (io::read_active_csv(path).stage("ingest")?, Params::initial_estimates()),
        (None, None) => {
            return Err(Error::InvalidParameter {
                name: "data",
                reason: "pass --data-dir or --active".into(),
            })
            .stage("fit")
        }
    };
    let fixed = load_params(cli, base)?;
    let spec = match &args.fit_spec {
        Some(path) => io::read_fit_spec(path).stage("fit spec")?,
        None => FitSpec::literature(),
    };
    let initial = match (&args.initial, observations.values.first()) {
        (Some(path), _) => io::read_state(path).stage("initial state")?,
        (None, Some(&first)) => {
            let mut config = InitialStateConfig {
                asymptomatic_share: fixed.eta,
                ..InitialStateConfig::default()
            };
            if let Some(n) = args.population {
                config.population = n;
            }
            initial_state(first, &config).stage("initial state")?
        }
        (None, None) => return Err(Error::FitFailure("no observations in the fitting window".into())).stage("fit"),
    };
    let options = FitOptions {
        starts: args.starts,
        max_iterations: args.max_iter,
        seed: cli.seed,
        integrator: IntegratorConfig {
            rel_tol: cli.rel_tol.unwrap_or(FitOptions::default().integrator.rel_tol),
            abs_tol: cli.abs_tol.or(FitOptions::default().integrator.abs_tol),
            ..IntegratorConfig::default()
        },
        ..FitOptions::default()
    };
    let result = fit(&spec, &observations, &fixed, &initial, &options).stage("fit")?;

    io::write_params(&cli.out.join("fitted_params.toml"), &result.params).stage("output")?;
    io::write_file(&cli.out.join("residuals.csv"), |w| {
        io::write_residual_csv(w, &observations, &result.residuals)
    })
    .stage("output")?;
    let times: Vec<f64> = if observations.times.first() == Some(&initial.t) {
        observations.times.clone()
    } else {
        std::iter::once(initial.t)
            .chain(observations.times.iter().copied())
            .collect()
    };
    let traj = integrate_at(&initial, &result.params, &times, &options.integrator).stage("simulate")?;
    io::write_file(&cli.out.join("fitted_trajectory.csv"), |w| {
        io::write_trajectory_csv(w, &traj)
    })
    .stage("output")?;
    fs::write(cli.out.join("fit_initial_state.toml"), io::state_to_toml(&initial))
        .map_err(|e| Error::io(cli.out.join("fit_initial_state.toml"), e))
        .stage("output")?;
    let report = io::fit_report(&result);
    write_text(&cli.out.join("fit.txt"), &report)?;
    Ok(report)
}

fn cmd_bistability(cli: &Cli, args: &BistabilityArgs) -> CliResult<String> {
    let params = match &cli.params {
        Some(_) => load_params(cli, Params::fitted())?,
        None => {
            search_backward_witness(cli.seed, args.draws)
                .ok_or_else(|| Error::NotApplicable(format!("no backward-bifurcation set in {} draws", args.draws)))
                .stage("bifurcation")?
                .params
        }
    };
    let (low, high) = match (&args.low, &args.high) {
        (Some(l), Some(h)) => (
            io::read_state(l).stage("initial state")?,
            io::read_state(h).stage("initial state")?,
        ),
        _ => bistability_initials(&params).stage("bifurcation")?,
    };
    let report = match (args.t_end, cli.rel_tol, cli.abs_tol) {
        (None, None, None) => bistability_demo(&params, &low, &high),
        (t_end, _, _) => {
            let horizon = t_end.unwrap_or_else(|| crate::bifurcation::default_horizon(&params));
            let config = integrator(cli)?.with_stride(horizon / 1000.0);
            crate::bifurcation::bistability_demo_with(&params, &low, &high, horizon, &config)
        }
    }
    .stage("bistability")?;
    io::write_file(&cli.out.join("bistability_low.csv"), |w| {
        io::write_trajectory_csv(w, &report.low)
    })
    .stage("output")?;
    io::write_file(&cli.out.join("bistability_high.csv"), |w| {
        io::write_trajectory_csv(w, &report.high)
    })
    .stage("output")?;
    io::write_params(&cli.out.join("bistability_params.toml"), &params).stage("output")?;
    let text = format!(
        "r0 = {}\nlow_attractor = {}\nhigh_attractor = {}\nbistable = {}\n",
        report.r0,
        report.low_attractor.as_str(),
        report.high_attractor.as_str(),
        report.bistable
    );
    write_text(&cli.out.join("bistability.txt"), &text)?;
    Ok(text)
}
