//! File formats: TOML inputs, CSV tables and key-value reports.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;

use crate::bifurcation::BifurcationReport;
use crate::data::parse_date_header;
use crate::equilibrium::{EndemicEquilibrium, SignCase};
use crate::error::{Error, Result};
use crate::fit::{FitResult, FitSpec, Observations};
use crate::model::{ParamName, Params, State, COMPARTMENT_NAMES};
use crate::ode::Trajectory;
use crate::sensitivity::SensitivityRow;
use crate::threshold::{R0Breakdown, StabilityReport};

fn config_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Applies `key = value` pairs from TOML text on top of `base`.
pub fn params_from_toml_str(text: &str, base: Params) -> std::result::Result<Params, String> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| e.to_string())?;
    let mut params = base;
    for (key, value) in &table {
        let name = ParamName::from_key(key).ok_or_else(|| format!("unknown parameter `{key}`"))?;
        let number = match value {
            toml::Value::Float(v) => *v,
            toml::Value::Integer(v) => *v as f64,
            other => return Err(format!("parameter `{key}` must be a number, got {}", other.type_str())),
        };
        params.set(name, number);
    }
    params.validate().map_err(|e| e.to_string())?;
    Ok(params)
}

/// Reads a parameter file; keys it omits keep the fitted default values.
pub fn read_params(path: &Path) -> Result<Params> {
    read_params_over(path, Params::fitted())
}

pub fn read_params_over(path: &Path, base: Params) -> Result<Params> {
    let text = read_text(path)?;
    params_from_toml_str(&text, base).map_err(|m| config_error(path, m))
}

pub fn params_to_toml(params: &Params) -> String {
    let mut out = String::new();
    for name in ParamName::ALL {
        writeln!(out, "{} = {:e}", name.key(), params.get(name)).unwrap();
    }
    out
}

pub fn write_params(path: &Path, params: &Params) -> Result<()> {
    fs::write(path, params_to_toml(params)).map_err(|e| Error::io(path, e))
}

/// Reads an initial state with keys `S, V, A, I, A1, I1, Q, R` and optional `t`.
pub fn read_state(path: &Path) -> Result<State> {
    let text = read_text(path)?;
    let state: State = toml::from_str(&text).map_err(|e| config_error(path, e.to_string()))?;
    state.check_feasible().map_err(|e| config_error(path, e.to_string()))?;
    Ok(state)
}

pub fn state_to_toml(state: &State) -> String {
    let mut out = String::new();
    for (name, value) in COMPARTMENT_NAMES.iter().zip(state.to_array()) {
        writeln!(out, "{name} = {value:e}").unwrap();
    }
    writeln!(out, "t = {:e}", state.t).unwrap();
    out
}

pub fn read_fit_spec(path: &Path) -> Result<FitSpec> {
    let text = read_text(path)?;
    FitSpec::from_toml_str(&text).map_err(|m| config_error(path, m))
}

/// Reads a two-column CSV with header `day,active` or `date,active`.
/// Times are days since the first row.
pub fn read_active_csv(path: &Path) -> Result<Observations> {
    let file = path.display().to_string();
    let csv_err = |source| Error::Csv {
        file: file.clone(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let kind = headers.get(0).map(str::trim).unwrap_or_default().to_ascii_lowercase();
    if headers.len() != 2 || !matches!(kind.as_str(), "day" | "date") || headers[1].trim() != "active" {
        return Err(config_error(path, "expected header `day,active` or `date,active`"));
    }
    let malformed = |value: &str, column: &str| Error::MalformedValue {
        value: value.to_string(),
        column: column.to_string(),
        file: file.clone(),
    };
    let mut raw_times = Vec::new();
    let mut values = Vec::new();
    let mut first_date: Option<NaiveDate> = None;
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let (key, value) = (record[0].trim(), record[1].trim());
        let t = if kind == "day" {
            key.parse::<f64>().map_err(|_| malformed(key, "day"))?
        } else {
            let date = parse_date_header(key).ok_or_else(|| malformed(key, "date"))?;
            let origin = *first_date.get_or_insert(date);
            (date - origin).num_days() as f64
        };
        let v: f64 = value.parse().map_err(|_| malformed(value, "active"))?;
        if !v.is_finite() {
            return Err(malformed(value, "active"));
        }
        raw_times.push(t);
        values.push(v);
    }
    if raw_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(config_error(path, "times must be strictly increasing"));
    }
    let t0 = raw_times.first().copied().unwrap_or(0.0);
    Ok(Observations {
        times: raw_times.iter().map(|t| t - t0).collect(),
        values,
    })
}

pub fn write_active_csv<W: Write>(mut w: W, observations: &Observations) -> std::io::Result<()> {
    writeln!(w, "day,active")?;
    for (t, v) in observations.times.iter().zip(&observations.values) {
        writeln!(w, "{t},{v}")?;
    }
    Ok(())
}

/// Header `t,S,V,A,I,A1,I1,Q,R,N`.
pub fn write_trajectory_csv<W: Write>(mut w: W, trajectory: &Trajectory) -> std::io::Result<()> {
    writeln!(w, "t,{},N", COMPARTMENT_NAMES.join(","))?;
    for (t, s) in trajectory.times.iter().zip(&trajectory.states) {
        write!(w, "{t}")?;
        for v in s.to_array() {
            write!(w, ",{v}")?;
        }
        writeln!(w, ",{}", s.total())?;
    }
    Ok(())
}

/// Header `lambda_star,S,V,A,I,A1,I1,Q,R,residual,feasible`.
pub fn write_equilibria_csv<W: Write>(mut w: W, equilibria: &[EndemicEquilibrium]) -> std::io::Result<()> {
    writeln!(w, "lambda_star,{},residual,feasible", COMPARTMENT_NAMES.join(","))?;
    for e in equilibria {
        write!(w, "{}", e.lambda_star)?;
        for v in e.state.to_array() {
            write!(w, ",{v}")?;
        }
        writeln!(w, ",{},{}", e.residual, e.feasible)?;
    }
    Ok(())
}

/// Header `param,value,gamma,epsilon`.
pub fn write_sensitivity_csv<W: Write>(mut w: W, rows: &[SensitivityRow]) -> std::io::Result<()> {
    writeln!(w, "param,value,gamma,epsilon")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.param.key(), r.value, r.gamma, r.epsilon)?;
    }
    Ok(())
}

/// Bar-chart data: header `param,epsilon`.
pub fn write_sensitivity_chart<W: Write>(mut w: W, rows: &[SensitivityRow]) -> std::io::Result<()> {
    writeln!(w, "param,epsilon")?;
    for r in rows {
        writeln!(w, "{},{}", r.param.key(), r.epsilon)?;
    }
    Ok(())
}

/// Header `t,observed,model,residual`.
pub fn write_residual_csv<W: Write>(mut w: W, observations: &Observations, residuals: &[f64]) -> std::io::Result<()> {
    writeln!(w, "t,observed,model,residual")?;
    for ((t, d), r) in observations.times.iter().zip(&observations.values).zip(residuals) {
        writeln!(w, "{t},{d},{},{r}", d + r)?;
    }
    Ok(())
}

pub fn r0_report(r: &R0Breakdown) -> String {
    format!(
        "r0 = {}\nr_a = {}\nr_i = {}\nr_a1 = {}\nr_i1 = {}\n",
        r.r0, r.r_a, r.r_i, r.r_a1, r.r_i1
    )
}

pub fn state_report(prefix: &str, s: &State) -> String {
    let mut out = String::new();
    for (name, value) in COMPARTMENT_NAMES.iter().zip(s.to_array()) {
        writeln!(out, "{prefix}{name} = {value}").unwrap();
    }
    out
}

pub fn stability_report(s: &StabilityReport) -> String {
    format!("dfe_max_real_part = {}\ndfe_stable = {}\n", s.max_real_part, s.stable)
}

pub fn sign_case_report(c: &SignCase) -> String {
    let counts: Vec<String> = c.possible_root_counts.iter().map(|n| n.to_string()).collect();
    format!(
        "sign_case = {}\nsign_pattern = {}\nsign_changes = {}\npossible_positive_roots = {}\nboundary_case = {}\n",
        c.case_id.map_or("none".to_string(), |k| k.to_string()),
        c.pattern(),
        c.sign_changes,
        counts.join(","),
        c.boundary
    )
}

pub fn bifurcation_report(b: &BifurcationReport) -> String {
    format!(
        "beta_star = {}\na = {}\nb = {}\ndirection = {}\nb_positive = {}\nleft_residual = {}\nright_residual = {}\n",
        b.beta_star,
        b.a_coeff,
        b.b_coeff,
        b.direction.as_str(),
        b.b_positive,
        b.eigen_residuals.0,
        b.eigen_residuals.1
    )
}

pub fn fit_report(f: &FitResult) -> String {
    let mut out = format!(
        "loss = {}\ninitial_loss = {}\niterations = {}\nbest_start = {}\n",
        f.loss, f.initial_loss, f.iterations, f.best_start
    );
    let losses: Vec<String> = f.start_losses.iter().map(|l| l.to_string()).collect();
    writeln!(out, "start_losses = {}", losses.join(",")).unwrap();
    for (name, hit) in &f.at_bound {
        writeln!(out, "{} = {} ({})", name.key(), f.params.get(*name), hit.as_str()).unwrap();
    }
    out
}

/// Creates `path` and fills it through `body`.
pub fn write_file<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut std::io::BufWriter<fs::File>) -> std::io::Result<()>,
{
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}
