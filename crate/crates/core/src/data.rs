//! Ingestion of wide-format case and vaccination time series.
//!
//! Each file has one row per region, a handful of metadata columns and one
//! column per date. Case files use `M/D/YY` headers, vaccination files may
//! use `YYYY-MM-DD`; both are accepted everywhere.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use log::warn;

use crate::error::{Error, Result};
use crate::model::State;

pub const DEFAULT_COUNTRY: &str = "South Africa";
pub const CONFIRMED_FILE: &str = "time_series_covid19_confirmed_global.csv";
pub const DEATHS_FILE: &str = "time_series_covid19_deaths_global.csv";
pub const RECOVERED_FILE: &str = "time_series_covid19_recovered_global.csv";
pub const VACCINE_FILE: &str = "time_series_covid19_vaccine_doses_admin_global.csv";

const METADATA_COLUMNS: [&str; 15] = [
    "Province/State",
    "Country/Region",
    "Lat",
    "Long",
    "UID",
    "iso2",
    "iso3",
    "code3",
    "FIPS",
    "Admin2",
    "Province_State",
    "Country_Region",
    "Long_",
    "Combined_Key",
    "Population",
];

/// First day of the case series.
pub fn series_origin() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 22).unwrap()
}

/// Last day with consistent recovery records.
pub fn truncation_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2021, 8, 5).unwrap()
}

/// Start of the vaccination campaign and of the calibration window.
pub fn window_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2021, 2, 17).unwrap()
}

/// Whole days since [`series_origin`].
pub fn day_index(date: NaiveDate) -> i64 {
    (date - series_origin()).num_days()
}

pub fn parse_date_header(text: &str) -> Option<NaiveDate> {
    let text = text.trim();
    NaiveDate::parse_from_str(text, "%m/%d/%y")
        .or_else(|_| NaiveDate::parse_from_str(text, "%Y-%m-%d"))
        .ok()
}

/// One country's row (summed over provinces) of a wide-format file.
#[derive(Debug, Clone, PartialEq)]
pub struct WideSeries {
    pub dates: Vec<NaiveDate>,
    /// `None` where the file has an empty cell for every matching row.
    pub values: Vec<Option<f64>>,
}

/// Reads a wide-format file and sums the rows of `country`.
pub fn read_wide<R: Read>(reader: R, country: &str, label: &str) -> Result<WideSeries> {
    let csv_err = |source| Error::Csv {
        file: label.to_string(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();

    let mut country_col = None;
    let mut date_cols: Vec<(usize, NaiveDate)> = Vec::new();
    for (idx, name) in headers.iter().enumerate() {
        let name = name.trim().trim_start_matches('\u{feff}');
        if name == "Country/Region" || name == "Country_Region" {
            country_col = Some(idx);
        } else if METADATA_COLUMNS.contains(&name) {
            continue;
        } else if let Some(date) = parse_date_header(name) {
            if date_cols.iter().any(|(_, d)| *d == date) {
                return Err(Error::MalformedDateHeader {
                    column: format!("{name} (duplicate)"),
                    file: label.to_string(),
                });
            }
            date_cols.push((idx, date));
        } else {
            return Err(Error::MalformedDateHeader {
                column: name.to_string(),
                file: label.to_string(),
            });
        }
    }
    let country_col = country_col.ok_or_else(|| Error::MalformedDateHeader {
        column: "missing Country/Region column".into(),
        file: label.to_string(),
    })?;
    date_cols.sort_by_key(|(_, d)| *d);

    let mut totals: Vec<Option<f64>> = vec![None; date_cols.len()];
    let mut found = false;
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        if record.get(country_col).map(str::trim) != Some(country) {
            continue;
        }
        found = true;
        for (slot, (idx, date)) in totals.iter_mut().zip(&date_cols) {
            let cell = record.get(*idx).unwrap_or("").trim();
            if cell.is_empty() {
                continue;
            }
            let value: f64 = cell.parse().map_err(|_| Error::MalformedValue {
                value: cell.to_string(),
                column: date.to_string(),
                file: label.to_string(),
            })?;
            if !value.is_finite() {
                return Err(Error::MalformedValue {
                    value: cell.to_string(),
                    column: date.to_string(),
                    file: label.to_string(),
                });
            }
            *slot = Some(slot.unwrap_or(0.0) + value);
        }
    }
    if !found {
        return Err(Error::MissingCountry {
            country: country.to_string(),
            file: label.to_string(),
        });
    }
    Ok(WideSeries {
        dates: date_cols.into_iter().map(|(_, d)| d).collect(),
        values: totals,
    })
}

pub fn read_wide_file(path: &Path, country: &str) -> Result<WideSeries> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_wide(file, country, &path.display().to_string())
}

/// Replaces decreases in a cumulative series by the running maximum.
/// Returns the corrected series and one message per corrected date.
pub fn clamp_monotone(dates: &[NaiveDate], values: &[f64], label: &str) -> (Vec<f64>, Vec<String>) {
    let mut out = Vec::with_capacity(values.len());
    let mut warnings = Vec::new();
    let mut running = f64::NEG_INFINITY;
    for (date, &v) in dates.iter().zip(values) {
        if v < running {
            let msg = format!("{label}: cumulative value decreased on {date} ({v} < {running}); clamped");
            warn!("{msg}");
            warnings.push(msg);
            out.push(running);
        } else {
            running = v;
            out.push(v);
        }
    }
    (out, warnings)
}

/// Joined daily series for one country.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseSeries {
    pub dates: Vec<NaiveDate>,
    pub confirmed_cum: Vec<f64>,
    pub deaths_cum: Vec<f64>,
    pub recovered_cum: Vec<f64>,
    /// Daily doses; `None` before vaccination data begins.
    pub vaccinations_daily: Vec<Option<f64>>,
    pub warnings: Vec<String>,
}

fn cumulative(series: &WideSeries, label: &str) -> (BTreeMap<NaiveDate, f64>, Vec<String>) {
    let observed: Vec<(NaiveDate, f64)> = series
        .dates
        .iter()
        .zip(&series.values)
        .filter_map(|(d, v)| v.map(|v| (*d, v)))
        .collect();
    let dates: Vec<NaiveDate> = observed.iter().map(|(d, _)| *d).collect();
    let values: Vec<f64> = observed.iter().map(|(_, v)| *v).collect();
    let (clamped, warnings) = clamp_monotone(&dates, &values, label);
    (dates.into_iter().zip(clamped).collect(), warnings)
}

/// Joins the three cumulative case series on their common dates and attaches
/// daily doses differenced from a cumulative vaccination series.
pub fn join_series(
    confirmed: &WideSeries,
    deaths: &WideSeries,
    recovered: &WideSeries,
    vaccinations: Option<&WideSeries>,
) -> Result<CaseSeries> {
    let (c, mut warnings) = cumulative(confirmed, "confirmed");
    let (d, w) = cumulative(deaths, "deaths");
    warnings.extend(w);
    let (r, w) = cumulative(recovered, "recovered");
    warnings.extend(w);

    let dates: Vec<NaiveDate> = c
        .keys()
        .filter(|date| d.contains_key(date) && r.contains_key(date))
        .copied()
        .collect();
    if dates.is_empty() {
        return Err(Error::EmptyWindow("case files share no dates".into()));
    }

    let mut daily: BTreeMap<NaiveDate, f64> = BTreeMap::new();
    if let Some(vac) = vaccinations {
        let (cum, w) = cumulative(vac, "vaccinations");
        warnings.extend(w);
        let mut previous = 0.0;
        for (date, total) in cum {
            daily.insert(date, total - previous);
            previous = total;
        }
    }

    Ok(CaseSeries {
        confirmed_cum: dates.iter().map(|k| c[k]).collect(),
        deaths_cum: dates.iter().map(|k| d[k]).collect(),
        recovered_cum: dates.iter().map(|k| r[k]).collect(),
        vaccinations_daily: dates.iter().map(|k| daily.get(k).copied()).collect(),
        dates,
        warnings,
    })
}

/// Loads the case files and, if given, the cumulative vaccination file.
pub fn load_series(
    confirmed: &Path,
    deaths: &Path,
    recovered: &Path,
    vaccinations: Option<&Path>,
    country: &str,
) -> Result<CaseSeries> {
    let c = read_wide_file(confirmed, country)?;
    let d = read_wide_file(deaths, country)?;
    let r = read_wide_file(recovered, country)?;
    let v = vaccinations.map(|p| read_wide_file(p, country)).transpose()?;
    join_series(&c, &d, &r, v.as_ref())
}

/// Standard file names inside a data directory.
pub struct DataFiles {
    pub confirmed: PathBuf,
    pub deaths: PathBuf,
    pub recovered: PathBuf,
    pub vaccinations: Option<PathBuf>,
}

impl DataFiles {
    pub fn in_dir(dir: &Path) -> DataFiles {
        let vac = dir.join(VACCINE_FILE);
        DataFiles {
            confirmed: dir.join(CONFIRMED_FILE),
            deaths: dir.join(DEATHS_FILE),
            recovered: dir.join(RECOVERED_FILE),
            vaccinations: vac.exists().then_some(vac),
        }
    }

    pub fn load(&self, country: &str) -> Result<CaseSeries> {
        load_series(
            &self.confirmed,
            &self.deaths,
            &self.recovered,
            self.vaccinations.as_deref(),
            country,
        )
    }
}

/// Dated active-case counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSeries {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl ActiveSeries {
    /// Inclusive date window.
    pub fn window(&self, start: NaiveDate, end: NaiveDate) -> ActiveSeries {
        let (dates, values) = self
            .dates
            .iter()
            .zip(&self.values)
            .filter(|(d, _)| **d >= start && **d <= end)
            .map(|(d, v)| (*d, *v))
            .unzip();
        ActiveSeries { dates, values }
    }

    /// Days elapsed since the first date of the series.
    pub fn day_offsets(&self) -> Vec<f64> {
        match self.dates.first() {
            Some(first) => self.dates.iter().map(|d| (*d - *first).num_days() as f64).collect(),
            None => Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `confirmed − recovered − deaths`, up to and including `cutoff`.
pub fn derive_active_until(series: &CaseSeries, cutoff: NaiveDate) -> ActiveSeries {
    let (dates, values) = (0..series.dates.len())
        .filter(|&k| series.dates[k] <= cutoff)
        .map(|k| {
            (
                series.dates[k],
                series.confirmed_cum[k] - series.recovered_cum[k] - series.deaths_cum[k],
            )
        })
        .unzip();
    ActiveSeries { dates, values }
}

/// Active cases truncated at [`truncation_date`].
pub fn derive_active(series: &CaseSeries) -> ActiveSeries {
    derive_active_until(series, truncation_date())
}

/// Population figures used for the demographic rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Demographics {
    pub population: f64,
    /// Annual growth rate (fraction per year).
    pub growth_rate: f64,
    /// Annual crude death rate (fraction per year).
    pub death_rate: f64,
}

impl Demographics {
    pub fn south_africa() -> Demographics {
        Demographics {
            population: 60.2e6,
            growth_rate: 0.012,
            death_rate: 9.468e-3,
        }
    }
}

/// Directly estimated rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimaryEstimates {
    /// Daily recruitment `population · (growth + death) / 365`.
    pub recruitment: f64,
    /// Daily natural death rate `death / 365`.
    pub mu: f64,
    /// Daily vaccination rate `doses / (window_days · population)`.
    pub sigma: f64,
    pub doses: f64,
    pub window_days: f64,
}

pub fn primary_rates(demographics: &Demographics, doses: f64, window_days: f64) -> PrimaryEstimates {
    PrimaryEstimates {
        recruitment: demographics.population * (demographics.growth_rate + demographics.death_rate) / 365.0,
        mu: demographics.death_rate / 365.0,
        sigma: doses / (window_days * demographics.population),
        doses,
        window_days,
    }
}

/// Length of the vaccination window used for `σ`; the campaign figures
/// quote 172 days for 17 February to 5 August 2021.
pub const DEFAULT_WINDOW_DAYS: f64 = 172.0;

/// Estimates `Λ`, `μ` and `σ` from the doses administered in `[start, end]`.
pub fn estimate_primaries(
    series: &CaseSeries,
    demographics: &Demographics,
    start: NaiveDate,
    end: NaiveDate,
    window_days: f64,
) -> Result<PrimaryEstimates> {
    let doses: Vec<f64> = series
        .dates
        .iter()
        .zip(&series.vaccinations_daily)
        .filter(|(d, _)| **d >= start && **d <= end)
        .filter_map(|(_, v)| *v)
        .collect();
    if doses.is_empty() {
        return Err(Error::EmptyWindow(format!(
            "no vaccination records between {start} and {end}"
        )));
    }
    Ok(primary_rates(demographics, doses.iter().sum(), window_days))
}

/// Choices for the state at the start of the calibration window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialStateConfig {
    pub population: f64,
    /// Asymptomatic share of the unvaccinated active cases outside `Q`.
    pub asymptomatic_share: f64,
    /// Share of the observed active cases placed in `Q`.
    pub isolated_share: f64,
    pub vaccinated: f64,
    pub recovered: f64,
}

impl Default for InitialStateConfig {
    fn default() -> Self {
        InitialStateConfig {
            population: 60.2e6,
            asymptomatic_share: 0.45,
            isolated_share: 0.5,
            vaccinated: 0.0,
            recovered: 0.0,
        }
    }
}

/// State at time 0 from the first observed active count: `Q` takes the
/// isolated share, the rest is split between `A` and `I`, nobody vaccinated
/// is infected yet, and `S` absorbs the remaining population.
pub fn initial_state(active: f64, config: &InitialStateConfig) -> Result<State> {
    let share_ok = |v: f64| (0.0..=1.0).contains(&v);
    if !share_ok(config.asymptomatic_share) || !share_ok(config.isolated_share) {
        return Err(Error::InvalidParameter {
            name: "initial_state",
            reason: "shares must lie in [0, 1]".into(),
        });
    }
    let q = config.isolated_share * active;
    let rest = active - q;
    let s = config.population - active - config.vaccinated - config.recovered;
    let state = State {
        s,
        v: config.vaccinated,
        a: config.asymptomatic_share * rest,
        i: (1.0 - config.asymptomatic_share) * rest,
        a1: 0.0,
        i1: 0.0,
        q,
        r: config.recovered,
        t: 0.0,
    };
    state.check_feasible()?;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONFIRMED: &str = "\
Province/State,Country/Region,Lat,Long,1/22/20,1/23/20,1/24/20
,Narnia,0,0,1,2,3
,South Africa,-30.5595,22.9375,10,20,35
";

    #[test]
    fn three_dates_give_three_rows() {
        let s = read_wide(CONFIRMED.as_bytes(), DEFAULT_COUNTRY, "c.csv").unwrap();
        assert_eq!(s.dates.len(), 3);
        assert_eq!(s.values, vec![Some(10.0), Some(20.0), Some(35.0)]);
        assert_eq!(s.dates[0], series_origin());
    }

    #[test]
    fn calendar_indices() {
        assert_eq!(day_index(window_start()), 392);
        assert_eq!(day_index(truncation_date()), 561);
        assert_eq!((truncation_date() - window_start()).num_days() + 1, 170);
    }

    #[test]
    fn provinces_are_summed() {
        let text = "\
Province/State,Country/Region,Lat,Long,1/22/20
A,Land,0,0,4
B,Land,0,0,5
";
        let s = read_wide(text.as_bytes(), "Land", "x").unwrap();
        assert_eq!(s.values, vec![Some(9.0)]);
    }

    #[test]
    fn missing_country_and_bad_headers() {
        assert!(matches!(
            read_wide(CONFIRMED.as_bytes(), "Atlantis", "c.csv"),
            Err(Error::MissingCountry { .. })
        ));
        let bad = "Province/State,Country/Region,Lat,Long,Jan 22\n,South Africa,0,0,1\n";
        let err = read_wide(bad.as_bytes(), DEFAULT_COUNTRY, "c.csv").unwrap_err();
        assert!(matches!(err, Error::MalformedDateHeader { ref column, .. } if column == "Jan 22"));
        assert_eq!(err.exit_code(), 4);
        let junk = "Province/State,Country/Region,Lat,Long,1/22/20\n,South Africa,0,0,lots\n";
        assert!(matches!(
            read_wide(junk.as_bytes(), DEFAULT_COUNTRY, "c.csv"),
            Err(Error::MalformedValue { .. })
        ));
    }

    #[test]
    fn iso_dates_and_vaccine_metadata() {
        let text = "\
UID,iso2,iso3,code3,FIPS,Admin2,Province_State,Country_Region,Lat,Long_,Combined_Key,Population,2021-02-16,2021-02-17,2021-02-18
710,ZA,ZAF,710,,,,South Africa,-30,22,South Africa,59308690,,100,250
";
        let s = read_wide(text.as_bytes(), DEFAULT_COUNTRY, "v.csv").unwrap();
        assert_eq!(s.values, vec![None, Some(100.0), Some(250.0)]);
    }

    #[test]
    fn decreasing_values_are_clamped_with_warning() {
        let dates: Vec<NaiveDate> = (0..4).map(|k| series_origin() + chrono::Days::new(k)).collect();
        let (out, warnings) = clamp_monotone(&dates, &[1.0, 5.0, 4.0, 6.0], "x");
        assert_eq!(out, vec![1.0, 5.0, 5.0, 6.0]);
        assert_eq!(warnings.len(), 1);
    }

    fn wide(dates: &[NaiveDate], values: &[f64]) -> WideSeries {
        WideSeries {
            dates: dates.to_vec(),
            values: values.iter().map(|v| Some(*v)).collect(),
        }
    }

    #[test]
    fn closed_cases_give_zero_active() {
        let dates: Vec<NaiveDate> = (0..3).map(|k| series_origin() + chrono::Days::new(k)).collect();
        let series = join_series(
            &wide(&dates, &[10.0, 20.0, 30.0]),
            &wide(&dates, &[1.0, 2.0, 3.0]),
            &wide(&dates, &[9.0, 18.0, 27.0]),
            None,
        )
        .unwrap();
        assert_eq!(derive_active(&series).values, vec![0.0; 3]);
    }

    #[test]
    fn truncation_drops_days_after_cutoff() {
        let start = truncation_date() - chrono::Days::new(2);
        let dates: Vec<NaiveDate> = (0..5).map(|k| start + chrono::Days::new(k)).collect();
        // Recoveries stop being reported after the cutoff, so actives ramp up.
        let series = join_series(
            &wide(&dates, &[100.0, 110.0, 120.0, 130.0, 140.0]),
            &wide(&dates, &[0.0; 5]),
            &wide(&dates, &[90.0, 100.0, 110.0, 0.0, 0.0]),
            None,
        )
        .unwrap();
        let active = derive_active(&series);
        assert_eq!(active.values, vec![10.0, 10.0, 10.0]);
        assert_eq!(*active.dates.last().unwrap(), truncation_date());
        assert_eq!(series.warnings.len(), 2);
    }

    #[test]
    fn vaccination_is_differenced() {
        let dates: Vec<NaiveDate> = (0..3).map(|k| window_start() + chrono::Days::new(k)).collect();
        let vac = WideSeries {
            dates: vec![dates[1], dates[2]],
            values: vec![Some(100.0), Some(250.0)],
        };
        let series = join_series(
            &wide(&dates, &[1.0, 2.0, 3.0]),
            &wide(&dates, &[0.0; 3]),
            &wide(&dates, &[0.0; 3]),
            Some(&vac),
        )
        .unwrap();
        assert_eq!(series.vaccinations_daily, vec![None, Some(100.0), Some(150.0)]);
        let est = estimate_primaries(&series, &Demographics::south_africa(), dates[0], dates[2], 3.0).unwrap();
        assert_eq!(est.doses, 250.0);
        let none = estimate_primaries(&series, &Demographics::south_africa(), dates[0], dates[0], 1.0);
        assert!(matches!(none, Err(Error::EmptyWindow(_))));
    }

    #[test]
    fn primary_rates_from_campaign_totals() {
        let est = primary_rates(&Demographics::south_africa(), 8_182_380.0, DEFAULT_WINDOW_DAYS);
        assert!((est.sigma - 7.9e-4).abs() < 0.05e-4, "{}", est.sigma);
        assert!((est.mu - 2.594e-5).abs() < 1e-8, "{}", est.mu);
        assert!((est.recruitment - 3540.7).abs() < 1.0, "{}", est.recruitment);
        assert_eq!(primary_rates(&Demographics::south_africa(), 0.0, 172.0).sigma, 0.0);
    }

    #[test]
    fn initial_state_partitions_population() {
        let config = InitialStateConfig::default();
        let s = initial_state(1000.0, &config).unwrap();
        assert_eq!(s.active(), 1000.0);
        assert_eq!(s.q, 500.0);
        assert_eq!((s.a1, s.i1), (0.0, 0.0));
        assert!((s.total() - config.population).abs() < 1e-6);
    }
}
