#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vaxdyn::Params;

/// Random parameter set satisfying every validity constraint, with rates
/// spread over a few orders of magnitude.
pub fn random_params<G: Rng>(rng: &mut G) -> Params {
    let log_uniform = |rng: &mut G, lo: f64, hi: f64| 10f64.powf(rng.gen_range(lo..hi));
    let rate = |rng: &mut G| log_uniform(rng, -2.5, -0.3);
    let omega = log_uniform(rng, -3.0, -0.5);
    Params {
        recruitment: log_uniform(rng, 1.0, 4.0),
        mu: log_uniform(rng, -4.5, -2.0),
        sigma: log_uniform(rng, -4.0, -0.5),
        rho: rng.gen_range(0.0..1.0),
        omega,
        varphi: omega * rng.gen_range(0.0..1.0),
        theta: rate(rng),
        theta1: rate(rng),
        gamma1: rate(rng),
        gamma2: rate(rng),
        gamma3: rate(rng),
        gamma4: rate(rng),
        gamma5: rate(rng),
        epsilon: rate(rng),
        epsilon1: rate(rng),
        delta: rng.gen_range(0.0..0.02),
        delta1: rng.gen_range(0.0..0.02),
        eta: rng.gen_range(0.0..1.0),
        phi: rng.gen_range(0.0..1.0),
        nu: rng.gen_range(0.0..3.0),
        nu1: rng.gen_range(0.0..3.0),
        kappa: rng.gen_range(0.0..3.0),
        beta: log_uniform(rng, -2.0, 0.5),
    }
}

pub fn params_from_seed(seed: u64) -> Params {
    random_params(&mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Writes the three case files and, when given, the cumulative dose file in
/// the global time-series layouts.
pub fn write_jhu_fixture(
    dir: &std::path::Path,
    country: &str,
    dates: &[chrono::NaiveDate],
    confirmed: &[f64],
    deaths: &[f64],
    recovered: &[f64],
    doses_cumulative: Option<&[f64]>,
) {
    use std::fmt::Write as _;
    use vaxdyn::data::{CONFIRMED_FILE, DEATHS_FILE, RECOVERED_FILE, VACCINE_FILE};
    let case_file = |values: &[f64]| {
        let mut text = String::from("Province/State,Country/Region,Lat,Long");
        for d in dates {
            write!(text, ",{}", d.format("%-m/%-d/%y")).unwrap();
        }
        text.push_str("\n,Elsewhere,0,0");
        for _ in dates {
            text.push_str(",7");
        }
        write!(text, "\n,{country},-30.5595,22.9375").unwrap();
        for v in values {
            write!(text, ",{v}").unwrap();
        }
        text.push('\n');
        text
    };
    std::fs::write(dir.join(CONFIRMED_FILE), case_file(confirmed)).unwrap();
    std::fs::write(dir.join(DEATHS_FILE), case_file(deaths)).unwrap();
    std::fs::write(dir.join(RECOVERED_FILE), case_file(recovered)).unwrap();
    if let Some(doses) = doses_cumulative {
        let mut text = String::from(
            "UID,iso2,iso3,code3,FIPS,Admin2,Province_State,Country_Region,Lat,Long_,Combined_Key,Population",
        );
        for d in dates {
            write!(text, ",{}", d.format("%Y-%m-%d")).unwrap();
        }
        write!(
            text,
            "\n710,ZA,ZAF,710,,,,{country},-30.5595,22.9375,{country},59308690"
        )
        .unwrap();
        for v in doses {
            write!(text, ",{v}").unwrap();
        }
        text.push('\n');
        std::fs::write(dir.join(VACCINE_FILE), text).unwrap();
    }
}
