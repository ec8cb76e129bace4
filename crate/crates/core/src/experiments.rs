//! Monte Carlo power studies and the fictitious Black-Karasinski backtest.

use std::io::Write;

use libm::erfc;
use rand_distr::{Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backtest::{delta_ratio, horizon_sd, run_backtest, BacktestConfig, BacktestOutcome};
use crate::critical::{decide, quantile_sorted, Thresholds, Verdict, MIN_NULL_TRIALS};
use crate::error::{invalid, Error, Result};
use crate::gof::{pit_map, ForecastSet, ProbSample, TestKind};
use crate::output::Metadata;
use crate::ratesim::{calibrate_fixed_k, OuParams, RateSeries};
use crate::rng;

/// Largest double below one.
const PIT_CEIL: f64 = 1.0 - f64::EPSILON / 2.0;

/// Standard normal CDF, kept inside the open unit interval.
pub fn normal_pit(x: f64) -> f64 {
    let p = if x < 0.0 {
        0.5 * erfc(-x / std::f64::consts::SQRT_2)
    } else {
        1.0 - 0.5 * erfc(x / std::f64::consts::SQRT_2)
    };
    p.clamp(f64::MIN_POSITIVE, PIT_CEIL)
}

/// Distribution the observed sample is drawn from; the forecast is always
/// `N(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    Gaussian { mu: f64, sigma: f64 },
    TStudent { nu: f64, unit_variance: bool },
}

impl Alternative {
    fn validate(&self) -> Result<()> {
        match *self {
            Alternative::Gaussian { mu, sigma } => {
                if !mu.is_finite() || !(sigma > 0.0 && sigma.is_finite()) {
                    return Err(invalid("alternative", "need finite mu and sigma > 0"));
                }
            }
            Alternative::TStudent { nu, unit_variance } => {
                if !(nu > 0.0) {
                    return Err(invalid("nu", "must be > 0"));
                }
                if unit_variance && nu <= 2.0 {
                    return Err(Error::VarianceUndefined { nu });
                }
            }
        }
        Ok(())
    }

    /// `(mu, sigma_or_nu)` columns of the result table.
    pub fn columns(&self) -> (f64, f64) {
        match *self {
            Alternative::Gaussian { mu, sigma } => (mu, sigma),
            Alternative::TStudent { nu, .. } => (0.0, nu),
        }
    }

    /// Stream key; Gaussian scenarios share standard normals across
    /// `(mu, sigma)` so the curves are smooth in the parameters.
    fn key(&self, seed: u64, n: usize) -> u64 {
        match *self {
            Alternative::Gaussian { .. } => rng::derive_seed(seed, &[0x4741, n as u64]),
            Alternative::TStudent { nu, unit_variance } => {
                rng::derive_seed(seed, &[0x5453, rng::float_tag(nu), unit_variance as u64, n as u64])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioGrid {
    pub alternatives: Vec<Alternative>,
    pub sample_sizes: Vec<usize>,
    pub trials: usize,
    pub confidence: f64,
    pub tests: Vec<TestKind>,
    pub seed: u64,
}

impl ScenarioGrid {
    pub fn validate(&self) -> Result<()> {
        if self.trials < MIN_NULL_TRIALS {
            return Err(invalid("trials", format!("must be >= {MIN_NULL_TRIALS}")));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.iter().any(|&n| n < 2) {
            return Err(invalid("sample_sizes", "need at least one size, all >= 2"));
        }
        if self.alternatives.is_empty() || self.tests.is_empty() {
            return Err(invalid("grid", "need at least one alternative and one test"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(invalid("confidence", "must lie in (0, 1)"));
        }
        self.alternatives.iter().try_for_each(Alternative::validate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub test: TestKind,
    pub n: usize,
    pub mu: f64,
    pub sigma_or_nu: f64,
    pub rejections: usize,
    pub rejection_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub rows: Vec<ExperimentRow>,
    pub trials: usize,
    pub seed: u64,
}

impl ExperimentResult {
    pub fn rate(&self, test: TestKind, n: usize, sigma_or_nu: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.test == test && r.n == n && r.sigma_or_nu == sigma_or_nu)
            .map(|r| r.rejection_rate)
    }

    pub fn rate_at(&self, test: TestKind, n: usize, mu: f64, sigma_or_nu: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.test == test && r.n == n && r.mu == mu && r.sigma_or_nu == sigma_or_nu)
            .map(|r| r.rejection_rate)
    }

    pub fn write_csv<W: Write>(&self, meta: &Metadata, mut w: W) -> Result<()> {
        meta.write(&mut w)?;
        writeln!(w, "test,n,mu,sigma_or_nu,rejection_rate,trials,seed")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.test, r.n, r.mu, r.sigma_or_nu, r.rejection_rate, self.trials, self.seed
            )?;
        }
        Ok(())
    }
}

fn draw_sample(alt: &Alternative, n: usize, r: &mut impl rand::Rng) -> Vec<f64> {
    match *alt {
        Alternative::Gaussian { mu, sigma } => (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(r);
                normal_pit(mu + sigma * z)
            })
            .collect(),
        Alternative::TStudent { nu, unit_variance } => {
            let t = StudentT::new(nu).expect("validated nu");
            let scale = if unit_variance { ((nu - 2.0) / nu).sqrt() } else { 1.0 };
            (0..n).map(|_| normal_pit(scale * t.sample(r))).collect()
        }
    }
}

/// Rejection rates of every test for every (alternative, n) cell.
pub fn rejection_rates(grid: &ScenarioGrid, thresholds: &Thresholds) -> Result<ExperimentResult> {
    grid.validate()?;
    let mut rows = Vec::new();
    for &n in &grid.sample_sizes {
        let limits: Vec<f64> = grid
            .tests
            .iter()
            .map(|&t| thresholds.threshold(t, n, grid.confidence))
            .collect::<Result<_>>()?;
        for alt in &grid.alternatives {
            let key = alt.key(grid.seed, n);
            let counts = (0..grid.trials)
                .into_par_iter()
                .map(|i| {
                    let mut r = rng::stream_rng(key, i as u64);
                    let u = ProbSample::new(draw_sample(alt, n, &mut r)).expect("PITs lie in (0, 1)");
                    grid.tests
                        .iter()
                        .zip(&limits)
                        .map(|(t, &lim)| (decide(&t.statistic(&u), lim) == Verdict::Reject) as usize)
                        .collect::<Vec<_>>()
                })
                .reduce(
                    || vec![0; grid.tests.len()],
                    |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect(),
                );
            let (mu, sigma_or_nu) = alt.columns();
            for (&test, &rejections) in grid.tests.iter().zip(&counts) {
                rows.push(ExperimentRow {
                    test,
                    n,
                    mu,
                    sigma_or_nu,
                    rejections,
                    rejection_rate: rejections as f64 / grid.trials as f64,
                });
            }
        }
    }
    Ok(ExperimentResult {
        rows,
        trials: grid.trials,
        seed: grid.seed,
    })
}

pub fn rejection_rate_gaussian(grid: &ScenarioGrid, thresholds: &Thresholds) -> Result<ExperimentResult> {
    if grid
        .alternatives
        .iter()
        .any(|a| !matches!(a, Alternative::Gaussian { .. }))
    {
        return Err(invalid("alternatives", "expected Gaussian alternatives only"));
    }
    rejection_rates(grid, thresholds)
}

pub fn rejection_rate_tstudent(grid: &ScenarioGrid, thresholds: &Thresholds) -> Result<ExperimentResult> {
    if grid
        .alternatives
        .iter()
        .any(|a| !matches!(a, Alternative::TStudent { .. }))
    {
        return Err(invalid("alternatives", "expected t-Student alternatives only"));
    }
    rejection_rates(grid, thresholds)
}

/// Settings of the fictitious-history backtest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FictitiousConfig {
    /// True generating parameters (per year).
    pub params: OuParams,
    /// Observation step in years.
    pub dt: f64,
    /// Calibration window length in observations.
    pub window_steps: usize,
    /// Forecast horizons in years.
    pub horizons: Vec<f64>,
    pub sample_size: usize,
    pub trials: usize,
    pub n_scenarios: usize,
    pub confidence: f64,
    pub tests: Vec<TestKind>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FictitiousTrial {
    pub delta: f64,
    pub verdicts: Vec<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FictitiousResult {
    pub horizon: f64,
    pub horizon_steps: usize,
    pub tests: Vec<TestKind>,
    pub trials: Vec<FictitiousTrial>,
    /// Trials discarded for a degenerate calibration.
    pub dropped: usize,
}

impl FictitiousResult {
    pub fn deltas(&self) -> Vec<f64> {
        self.trials.iter().map(|t| t.delta).collect()
    }

    pub fn rejection_rate(&self, test: TestKind) -> Option<f64> {
        let j = self.tests.iter().position(|&t| t == test)?;
        let rej = self.trials.iter().filter(|t| t.verdicts[j] == Verdict::Reject).count();
        Some(rej as f64 / self.trials.len() as f64)
    }
}

/// One fictitious backtest: `sample_size` independent stationary histories,
/// each calibrated on its window with `k` held at the true value and
/// forecast `horizon_steps` ahead.
fn fictitious_trial(
    cfg: &FictitiousConfig,
    horizon_steps: usize,
    limits: &[f64],
    key: u64,
    trial: usize,
) -> Option<FictitiousTrial> {
    let p = cfg.params;
    let mut r = rng::stream_rng(key, trial as u64);
    let mut normal = || -> f64 { StandardNormal.sample(&mut r) };
    let stationary_sd = p.stationary_variance().sqrt();
    let (_, step_sd) = p.transition(0.0, cfg.dt);
    let decay = (-p.k * cfg.dt).exp();
    let h_time = horizon_steps as f64 * cfg.dt;
    let mut pits = Vec::with_capacity(cfg.sample_size);
    let mut window_sd = 0.0;
    let mut window = vec![0.0; cfg.window_steps];
    for _ in 0..cfg.sample_size {
        window[0] = p.alpha + stationary_sd * normal();
        for j in 1..cfg.window_steps {
            window[j] = p.alpha + (window[j - 1] - p.alpha) * decay + step_sd * normal();
        }
        let y0 = window[cfg.window_steps - 1];
        let (m, s) = p.transition(y0, h_time);
        let realized = m + s * normal();
        let fitted = calibrate_fixed_k(&window, cfg.dt, p.k).ok()?;
        let (fm, fs) = fitted.transition(y0, h_time);
        let scenarios: Vec<f64> = (0..cfg.n_scenarios).map(|_| fm + fs * normal()).collect();
        pits.push(pit_map(realized, &ForecastSet::new(scenarios).ok()?));
        window_sd += horizon_sd(p.k, fitted.sigma, h_time).ok()?;
    }
    let reference = horizon_sd(p.k, p.sigma, h_time).ok()?;
    let delta = delta_ratio(reference, window_sd / cfg.sample_size as f64).ok()?;
    let u = ProbSample::new(pits).ok()?;
    let verdicts = cfg
        .tests
        .iter()
        .zip(limits)
        .map(|(t, &lim)| decide(&t.statistic(&u), lim))
        .collect();
    Some(FictitiousTrial { delta, verdicts })
}

pub fn fictitious_bk_experiment(cfg: &FictitiousConfig, thresholds: &Thresholds) -> Result<Vec<FictitiousResult>> {
    OuParams::new(cfg.params.alpha, cfg.params.k, cfg.params.sigma)?;
    if cfg.params.sigma <= 0.0 {
        return Err(invalid("sigma", "must be > 0"));
    }
    if cfg.sample_size < 2 {
        return Err(invalid("sample_size", "must be >= 2"));
    }
    if cfg.window_steps < 3 || cfg.n_scenarios == 0 || cfg.trials == 0 {
        return Err(invalid("fictitious", "need window >= 3, scenarios >= 1, trials >= 1"));
    }
    if !(cfg.dt > 0.0) || cfg.horizons.iter().any(|h| !(*h > 0.0)) {
        return Err(invalid("horizons", "dt and horizons must be > 0"));
    }
    let limits: Vec<f64> = cfg
        .tests
        .iter()
        .map(|&t| thresholds.threshold(t, cfg.sample_size, cfg.confidence))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(cfg.horizons.len());
    for &h in &cfg.horizons {
        let horizon_steps = ((h / cfg.dt).round() as usize).max(1);
        let key = rng::derive_seed(cfg.seed, &[0x4642, horizon_steps as u64, cfg.sample_size as u64]);
        let raw: Vec<Option<FictitiousTrial>> = (0..cfg.trials)
            .into_par_iter()
            .map(|i| fictitious_trial(cfg, horizon_steps, &limits, key, i))
            .collect();
        let dropped = raw.iter().filter(|t| t.is_none()).count();
        out.push(FictitiousResult {
            horizon: h,
            horizon_steps,
            tests: cfg.tests.clone(),
            trials: raw.into_iter().flatten().collect(),
            dropped,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Rejection rate per test, aligned with the result's test list; `NaN`
    /// for empty bins.
    pub rates: Vec<f64>,
}

impl DeltaBin {
    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaBinning {
    pub bins: Vec<DeltaBin>,
    pub below: usize,
    pub above: usize,
}

/// Equal-width bins over the central `coverage` mass of the observed Δ.
pub fn bin_by_delta(result: &FictitiousResult, n_bins: usize, coverage: f64) -> Result<DeltaBinning> {
    if n_bins == 0 || !(coverage > 0.0 && coverage <= 1.0) {
        return Err(invalid("binning", "need n_bins >= 1 and coverage in (0, 1]"));
    }
    if result.trials.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut d = result.deltas();
    d.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - coverage);
    let lo = quantile_sorted(&d, tail);
    let hi = quantile_sorted(&d, 1.0 - tail);
    let width = (hi - lo) / n_bins as f64;
    let nt = result.tests.len();
    let mut counts = vec![0usize; n_bins];
    let mut rejects = vec![vec![0usize; nt]; n_bins];
    let (mut below, mut above) = (0, 0);
    for t in &result.trials {
        if t.delta < lo {
            below += 1;
            continue;
        }
        if t.delta > hi {
            above += 1;
            continue;
        }
        let b = if width > 0.0 {
            (((t.delta - lo) / width) as usize).min(n_bins - 1)
        } else {
            0
        };
        counts[b] += 1;
        for (j, v) in t.verdicts.iter().enumerate() {
            rejects[b][j] += (*v == Verdict::Reject) as usize;
        }
    }
    let bins = (0..n_bins)
        .map(|b| DeltaBin {
            lo: lo + b as f64 * width,
            hi: lo + (b + 1) as f64 * width,
            count: counts[b],
            rates: rejects[b]
                .iter()
                .map(|&r| {
                    if counts[b] > 0 {
                        r as f64 / counts[b] as f64
                    } else {
                        f64::NAN
                    }
                })
                .collect(),
        })
        .collect();
    Ok(DeltaBinning { bins, below, above })
}

/// `(lo, hi, count)` over the full range of `values`.
pub fn histogram(values: &[f64], n_bins: usize) -> Result<Vec<(f64, f64, usize)>> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    if n_bins == 0 {
        return Err(invalid("n_bins", "must be >= 1"));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / n_bins as f64;
    let mut counts = vec![0; n_bins];
    for &v in values {
        let b = if width > 0.0 {
            (((v - lo) / width) as usize).min(n_bins - 1)
        } else {
            0
        };
        counts[b] += 1;
    }
    Ok((0..n_bins)
        .map(|b| (lo + b as f64 * width, lo + (b + 1) as f64 * width, counts[b]))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaSweep {
    pub gammas: Vec<f64>,
    pub outcomes: Vec<BacktestOutcome>,
}

impl GammaSweep {
    pub fn verdict(&self, test: TestKind, gamma: f64) -> Option<Verdict> {
        let i = self.gammas.iter().position(|&g| g == gamma)?;
        self.outcomes[i].verdict(test)
    }

    /// `test,gamma,statistic,threshold,verdict` rows.
    pub fn write_csv<W: Write>(&self, meta: &Metadata, mut w: W) -> Result<()> {
        meta.write(&mut w)?;
        writeln!(w, "test,gamma,statistic,threshold,verdict")?;
        let tests: Vec<TestKind> = self.outcomes[0].results.iter().map(|r| r.statistic.test).collect();
        for t in tests {
            for (g, o) in self.gammas.iter().zip(&self.outcomes) {
                let r = o
                    .results
                    .iter()
                    .find(|r| r.statistic.test == t)
                    .expect("same tests for every gamma");
                writeln!(w, "{},{},{},{},{}", t, g, r.statistic.value, r.threshold, r.verdict)?;
            }
        }
        Ok(())
    }
}

/// Runs the backtest once per volatility multiplier.
pub fn empirical_gamma_sweep(
    series: &RateSeries,
    gammas: &[f64],
    config: &BacktestConfig,
    thresholds: &Thresholds,
) -> Result<GammaSweep> {
    if gammas.is_empty() || gammas.iter().any(|g| !(*g > 0.0)) {
        return Err(invalid("gammas", "need at least one gamma, all > 0"));
    }
    let outcomes = gammas
        .iter()
        .map(|&gamma| {
            run_backtest(
                series,
                &BacktestConfig {
                    gamma,
                    ..config.clone()
                },
                thresholds,
            )
        })
        .collect::<Result<_>>()?;
    Ok(GammaSweep {
        gammas: gammas.to_vec(),
        outcomes,
    })
}
