//! Rolling-window backtest of the Black-Karasinski forecast distribution.
//!
//! Calendar lengths (calibration window, horizon) are converted to
//! observation counts with the sampling frequency of the series itself, so a
//! two-year horizon on weekly data is 104 observations. The model clock runs
//! in the calibration units: a horizon of `m` observations is simulated over
//! `m * dt` model years.

use std::io::Write;

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::critical::{decide, Thresholds, Verdict};
use crate::diagnostics::{cov_warning, CovReport, DEFAULT_COV_THRESHOLD};
use crate::error::{invalid, Error, Result};
use crate::gof::{pit_map, ForecastSet, GofStatistic, ProbSample, TestKind};
use crate::output::Metadata;
use crate::ratesim::{
    bk_variance, calibrate_fixed_k, calibrate_moment_matching, compose_rate, hp_filter, simulate_ou_terminal,
    volatility_adjust, OuParams, RateSeries, Units,
};
use crate::rng;

pub const PIPELINE: &str =
    "ln(rate) -> HP filter -> calibrate OU on cycle -> scale sigma by gamma -> exact OU to horizon -> rate = exp(trend_last + y)";

/// How backtest dates are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DateRule {
    /// Forecast dates; each maps to the last observation on or before it.
    Explicit(Vec<NaiveDate>),
    /// Every `every` observations (default: the horizon) from `start`
    /// (default: the first date with a full calibration window).
    Stride {
        start: Option<NaiveDate>,
        every: Option<usize>,
    },
}

impl Default for DateRule {
    fn default() -> Self {
        DateRule::Stride {
            start: None,
            every: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BacktestConfig {
    /// Calibration window in years.
    pub calibration_window: f64,
    /// Forecast horizon in years.
    pub horizon: f64,
    pub n_scenarios: usize,
    pub dates: DateRule,
    pub confidence: f64,
    pub gamma: f64,
    pub tests: Vec<TestKind>,
    pub seed: u64,
    pub units: Units,
    /// HP smoothing weight; `None` uses the frequency-scaled default.
    pub hp_lambda: Option<f64>,
    pub cov_threshold: f64,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            calibration_window: 3.0,
            horizon: 2.0,
            n_scenarios: 3000,
            dates: DateRule::default(),
            confidence: 0.05,
            gamma: 1.0,
            tests: vec![TestKind::Ad, TestKind::AdAsym, TestKind::Ks],
            seed: 1,
            units: Units::default(),
            hp_lambda: None,
            cov_threshold: DEFAULT_COV_THRESHOLD,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.calibration_window > 0.0) {
            return Err(invalid("calibration_window", "must be > 0"));
        }
        if !(self.horizon > 0.0) {
            return Err(invalid("horizon", "must be > 0"));
        }
        if self.n_scenarios == 0 {
            return Err(invalid("n_scenarios", "must be >= 1"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(invalid("confidence", "must lie in (0, 1)"));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(invalid("gamma", "must be > 0"));
        }
        if self.tests.is_empty() {
            return Err(invalid("tests", "at least one test is required"));
        }
        if !(self.units.dt() > 0.0) {
            return Err(invalid("units", "dt must be > 0"));
        }
        Ok(())
    }

    pub fn hp_lambda(&self) -> f64 {
        self.hp_lambda.unwrap_or_else(|| self.units.default_hp_lambda())
    }

    pub fn metadata(&self) -> Metadata {
        Metadata::new()
            .with("seed", self.seed)
            .with("gamma", self.gamma)
            .with("window_years", self.calibration_window)
            .with("horizon_years", self.horizon)
            .with("n_scenarios", self.n_scenarios)
            .with("confidence", self.confidence)
            .with("hp_lambda", self.hp_lambda())
            .with("units", self.units.describe())
            .with("pipeline", PIPELINE)
            .with("trend", "frozen at last filtered value")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestRecord {
    /// Forecast origin.
    pub date: NaiveDate,
    /// Date of the realized observation.
    pub target_date: NaiveDate,
    /// Calibrated parameters before the gamma adjustment.
    pub calibrated_params: OuParams,
    pub forecast_min: f64,
    pub forecast_mean: f64,
    pub forecast_max: f64,
    pub realized: f64,
    pub pit: f64,
    /// Window volatility with `k` held at the full-sample estimate.
    pub sigma_fixed_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: GofStatistic,
    pub threshold: f64,
    pub verdict: Verdict,
}

/// Volatility-ratio diagnostic between the full-history model and the
/// backtest windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub k_shared: f64,
    pub sigma_reference: f64,
    pub mean_window_sd: f64,
    pub reference_sd: f64,
    /// `ln(reference_sd / mean_window_sd)`.
    pub log_ratio: f64,
    /// `reference_sd / mean_window_sd`.
    pub plain_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub observations_per_year: f64,
    pub window_points: usize,
    pub horizon_steps: usize,
    /// Horizon on the model clock, in years.
    pub horizon_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestOutcome {
    pub records: Vec<BacktestRecord>,
    /// Forecast dates dropped for lack of a realized value.
    pub skipped: Vec<NaiveDate>,
    pub results: Vec<TestOutcome>,
    pub cov_report: CovReport,
    pub delta: DeltaReport,
    pub sampling: Sampling,
    pub threshold_source: String,
}

impl BacktestOutcome {
    pub fn verdict(&self, test: TestKind) -> Option<Verdict> {
        self.results
            .iter()
            .find(|r| r.statistic.test == test)
            .map(|r| r.verdict)
    }

    pub fn pits(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.pit).collect()
    }

    pub fn write_records_csv<W: Write>(&self, config: &BacktestConfig, mut w: W) -> Result<()> {
        let mut meta = config.metadata();
        meta.push("horizon_steps", self.sampling.horizon_steps);
        meta.push("window_points", self.sampling.window_points);
        meta.push("horizon_model_years", self.sampling.horizon_time);
        meta.write(&mut w)?;
        writeln!(w, "date,alpha,k,sigma,fmin,fmean,fmax,realized,pit")?;
        for r in &self.records {
            let p = r.calibrated_params;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.date.format("%Y-%m-%d"),
                p.alpha,
                p.k,
                p.sigma,
                r.forecast_min,
                r.forecast_mean,
                r.forecast_max,
                r.realized,
                r.pit
            )?;
        }
        Ok(())
    }

    pub fn summary_json(&self, config: &BacktestConfig) -> serde_json::Value {
        let tests: serde_json::Map<String, serde_json::Value> = self
            .results
            .iter()
            .map(|r| {
                (
                    r.statistic.test.name().to_string(),
                    serde_json::json!({
                        "statistic": r.statistic.value,
                        "threshold": r.threshold,
                        "verdict": r.verdict,
                    }),
                )
            })
            .collect();
        serde_json::json!({
            "metadata": config.metadata().0.iter().cloned().collect::<std::collections::BTreeMap<_, _>>(),
            "n": self.records.len(),
            "skipped": self.skipped,
            "tests": tests,
            "threshold_source": self.threshold_source,
            "cov": self.cov_report,
            "delta": self.delta,
            "sampling": self.sampling,
        })
    }
}

/// Signed volatility ratio `ln(sigma_sim / sigma_bkt)`.
pub fn delta_ratio(sigma_sim: f64, sigma_bkt: f64) -> Result<f64> {
    if !(sigma_sim > 0.0) || !(sigma_bkt > 0.0) {
        return Err(invalid("sigma", "both volatilities must be > 0"));
    }
    Ok((sigma_sim / sigma_bkt).ln())
}

/// Standard deviation at horizon `t` of `exp(y)` for an OU started at its
/// zero level, the common yardstick for comparing volatilities at fixed `k`.
pub fn horizon_sd(k: f64, sigma: f64, t: f64) -> Result<f64> {
    let p = OuParams::new(0.0, k, sigma)?;
    Ok(bk_variance(&p, 1.0, t)?.sqrt())
}

pub fn observations_per_year(dates: &[NaiveDate]) -> f64 {
    let mut gaps: Vec<i64> = dates.windows(2).map(|w| (w[1] - w[0]).num_days()).collect();
    gaps.sort_unstable();
    let median = gaps[gaps.len() / 2].max(1) as f64;
    365.25 / median
}

fn sampling(series: &RateSeries, config: &BacktestConfig) -> Result<Sampling> {
    let opy = observations_per_year(&series.dates);
    let window_points = (config.calibration_window * opy).round() as usize;
    let horizon_steps = ((config.horizon * opy).round() as usize).max(1);
    if window_points < 3 {
        return Err(invalid("calibration_window", "covers fewer than 3 observations"));
    }
    Ok(Sampling {
        observations_per_year: opy,
        window_points,
        horizon_steps,
        horizon_time: horizon_steps as f64 * series.dt,
    })
}

fn origin_indices(series: &RateSeries, config: &BacktestConfig, s: &Sampling) -> Result<Vec<usize>> {
    let first_ok = s.window_points - 1;
    let first_feasible = series.dates[first_ok];
    let last = series.len() - 1;
    let idx = match &config.dates {
        DateRule::Explicit(dates) => {
            let mut dates = dates.clone();
            dates.sort_unstable();
            dates.dedup();
            let mut out = Vec::with_capacity(dates.len());
            for d in dates {
                let pos = series.dates.partition_point(|x| *x <= d);
                if pos == 0 || pos - 1 < first_ok {
                    return Err(Error::InsufficientHistory {
                        date: d,
                        first_feasible,
                    });
                }
                out.push(pos - 1);
            }
            out
        }
        DateRule::Stride { start, every } => {
            let every = every.unwrap_or(s.horizon_steps);
            if every < s.horizon_steps {
                return Err(invalid("stride", "must be at least the horizon"));
            }
            let mut i = match start {
                Some(d) => {
                    let pos = series.dates.partition_point(|x| *x < *d);
                    if pos < first_ok {
                        return Err(Error::InsufficientHistory {
                            date: *d,
                            first_feasible,
                        });
                    }
                    pos
                }
                None => first_ok,
            };
            let mut out = Vec::new();
            while i + s.horizon_steps <= last {
                out.push(i);
                i += every;
            }
            if out.is_empty() {
                return Err(Error::InsufficientHistory {
                    date: series.dates[i.min(last)],
                    first_feasible,
                });
            }
            out
        }
    };
    for w in idx.windows(2) {
        if w[1] - w[0] < s.horizon_steps {
            return Err(Error::OverlappingDates {
                first: series.dates[w[0]],
                second: series.dates[w[1]],
            });
        }
    }
    Ok(idx)
}

fn log_values(values: &[f64]) -> Result<Vec<f64>> {
    values
        .iter()
        .map(|&v| {
            if v > 0.0 {
                Ok(v.ln())
            } else {
                Err(invalid(
                    "rate",
                    format!("lognormal model needs positive rates, got {v}"),
                ))
            }
        })
        .collect()
}

struct Forecast {
    calibrated: OuParams,
    sigma_fixed_k: f64,
    rates: ForecastSet,
}

fn forecast_at(
    series: &RateSeries,
    config: &BacktestConfig,
    s: &Sampling,
    origin: usize,
    k_shared: f64,
) -> Result<Forecast> {
    let window = &series.values[origin + 1 - s.window_points..=origin];
    let hp = hp_filter(&log_values(window)?, config.hp_lambda())?;
    let calibrated = calibrate_moment_matching(&hp.cycle, series.dt)?;
    let sigma_fixed_k = calibrate_fixed_k(&hp.cycle, series.dt, k_shared)?.sigma;
    let adjusted = volatility_adjust(&calibrated, config.gamma)?;
    let y0 = *hp.cycle.last().expect("window is non-empty");
    let trend = *hp.trend.last().expect("window is non-empty");
    // Keyed by calendar date so the same origin sees the same normals for
    // every gamma and every date selection.
    let seed = rng::derive_seed(config.seed, &[0x4254, series.dates[origin].num_days_from_ce() as u64]);
    let ys = simulate_ou_terminal(&adjusted, y0, s.horizon_time, 1, config.n_scenarios, seed)?;
    Ok(Forecast {
        calibrated,
        sigma_fixed_k,
        rates: ForecastSet::new(compose_rate(&ys, trend))?,
    })
}

/// Full-history calibration fixing the shared `k` and the reference
/// volatility.
fn reference_params(series: &RateSeries, config: &BacktestConfig) -> Result<OuParams> {
    let hp = hp_filter(&log_values(&series.values)?, config.hp_lambda())?;
    let full = calibrate_moment_matching(&hp.cycle, series.dt)?;
    calibrate_fixed_k(&hp.cycle, series.dt, full.k)
}

pub fn run_backtest(series: &RateSeries, config: &BacktestConfig, thresholds: &Thresholds) -> Result<BacktestOutcome> {
    config.validate()?;
    let s = sampling(series, config)?;
    let origins = origin_indices(series, config, &s)?;
    let reference = reference_params(series, config)?;
    let last = series.len() - 1;

    let computed: Vec<Result<Option<BacktestRecord>>> = origins
        .par_iter()
        .map(|&origin| {
            let target = origin + s.horizon_steps;
            if target > last {
                return Ok(None);
            }
            let f = forecast_at(series, config, &s, origin, reference.k)?;
            let realized = series.values[target];
            Ok(Some(BacktestRecord {
                date: series.dates[origin],
                target_date: series.dates[target],
                calibrated_params: f.calibrated,
                forecast_min: f.rates.min(),
                forecast_mean: f.rates.mean(),
                forecast_max: f.rates.max(),
                realized,
                pit: pit_map(realized, &f.rates),
                sigma_fixed_k: f.sigma_fixed_k,
            }))
        })
        .collect();

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (&origin, r) in origins.iter().zip(computed) {
        match r? {
            Some(rec) => records.push(rec),
            None => {
                log::warn!(
                    "no realized value {} observations after {}; record skipped",
                    s.horizon_steps,
                    series.dates[origin]
                );
                skipped.push(series.dates[origin]);
            }
        }
    }
    if records.is_empty() {
        return Err(Error::NoRecords);
    }

    let n = records.len();
    let sample = ProbSample::new(records.iter().map(|r| r.pit).collect())?;
    let mut results = Vec::with_capacity(config.tests.len());
    for &test in &config.tests {
        let statistic = test.statistic(&sample);
        let threshold = thresholds.threshold(test, n, config.confidence)?;
        results.push(TestOutcome {
            statistic,
            threshold,
            verdict: decide(&statistic, threshold),
        });
    }

    let k = reference.k;
    let reference_sd = horizon_sd(k, reference.sigma, s.horizon_time)?;
    let mut window_sd = 0.0;
    for r in &records {
        window_sd += horizon_sd(k, config.gamma * r.sigma_fixed_k, s.horizon_time)?;
    }
    let mean_window_sd = window_sd / n as f64;
    let delta = DeltaReport {
        k_shared: k,
        sigma_reference: reference.sigma,
        mean_window_sd,
        reference_sd,
        log_ratio: delta_ratio(reference_sd, mean_window_sd)?,
        plain_ratio: reference_sd / mean_window_sd,
    };

    Ok(BacktestOutcome {
        records,
        skipped,
        results,
        cov_report: cov_warning(n, config.cov_threshold)?,
        delta,
        sampling: s,
        threshold_source: thresholds.source_label(n),
    })
}
