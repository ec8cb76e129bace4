//! Hodrick-Prescott detrending, exact Ornstein-Uhlenbeck simulation of the
//! Black-Karasinski log-cycle, moment-matching calibration, and the
//! lognormal variance of the resulting rate.
//!
//! Conventions used across the pipeline:
//!
//! * the HP filter runs on `ln(rate)`; the cycle `y = ln(rate) - trend` is
//!   the OU state, so a simulated rate is `exp(trend + y)`;
//! * parameters are in years (`k` per year, `sigma` per square-root year);
//!   the observation step `dt` comes from [`Units`].

use std::io::{Read, Write};

use chrono::NaiveDate;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;

/// Time-unit convention: observation spacing measured in trading days.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub trading_days_per_year: f64,
    pub days_per_step: f64,
}

impl Default for Units {
    fn default() -> Self {
        Self {
            trading_days_per_year: 250.0,
            days_per_step: 5.0,
        }
    }
}

impl Units {
    /// Observation step in years.
    pub fn dt(&self) -> f64 {
        self.days_per_step / self.trading_days_per_year
    }

    pub fn observations_per_quarter(&self) -> f64 {
        self.trading_days_per_year / 4.0 / self.days_per_step
    }

    /// `1600 * (observations per quarter)^4`.
    pub fn default_hp_lambda(&self) -> f64 {
        1600.0 * self.observations_per_quarter().powi(4)
    }

    pub fn describe(&self) -> String {
        format!(
            "dt={} years ({} trading days per step, {} trading days per year)",
            self.dt(),
            self.days_per_step,
            self.trading_days_per_year
        )
    }
}

/// A single-tenor rate history.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSeries {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
    /// Observation step in years.
    pub dt: f64,
}

impl RateSeries {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<f64>, dt: f64) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(invalid("series", "dates and values differ in length"));
        }
        if dates.len() < 2 {
            return Err(invalid("series", "need at least 2 observations"));
        }
        if !(dt > 0.0) {
            return Err(invalid("dt", format!("must be > 0, got {dt}")));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if let Some(w) = dates.windows(2).find(|w| w[1] <= w[0]) {
            return Err(invalid("dates", format!("not strictly ascending at {}", w[1])));
        }
        Ok(Self { dates, values, dt })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Reads `date,rate` CSV (ISO-8601 dates). Lines starting with `#` are
    /// metadata and skipped.
    pub fn read_csv<R: Read>(r: R, dt: f64) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(r);
        let headers = reader.headers()?.clone();
        if headers.len() < 2 || &headers[0] != "date" || &headers[1] != "rate" {
            return Err(Error::Parse {
                line: 1,
                reason: "expected header `date,rate`".into(),
            });
        }
        let mut dates = Vec::new();
        let mut values = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let date = NaiveDate::parse_from_str(rec.get(0).unwrap_or(""), "%Y-%m-%d").map_err(|e| Error::Parse {
                line,
                reason: format!("bad date: {e}"),
            })?;
            let value: f64 = rec.get(1).unwrap_or("").parse().map_err(|_| Error::Parse {
                line,
                reason: format!("bad rate `{}`", rec.get(1).unwrap_or("")),
            })?;
            dates.push(date);
            values.push(value);
        }
        Self::new(dates, values, dt)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "date,rate")?;
        for (d, v) in self.dates.iter().zip(&self.values) {
            writeln!(w, "{},{}", d.format("%Y-%m-%d"), v)?;
        }
        Ok(())
    }
}

/// Ornstein-Uhlenbeck parameters of the log-cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuParams {
    /// Long-run mean.
    pub alpha: f64,
    /// Mean-reversion speed per year.
    pub k: f64,
    /// Volatility per square-root year.
    pub sigma: f64,
}

/// Reference estimate on weekly Euribor 6M log-cycle data, expressed per
/// observation step.
pub const THETA_PER_STEP: OuParams = OuParams {
    alpha: -0.000_487_1,
    k: 0.011_853,
    sigma: 0.018_855,
};

impl OuParams {
    /// Validates `k > 0` and `sigma >= 0` (zero gives the deterministic
    /// relaxation path).
    pub fn new(alpha: f64, k: f64, sigma: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(invalid("alpha", "must be finite"));
        }
        if !(k > 0.0 && k.is_finite()) {
            return Err(invalid("k", format!("must be > 0, got {k}")));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(invalid("sigma", format!("must be >= 0, got {sigma}")));
        }
        Ok(Self { alpha, k, sigma })
    }

    /// Converts per-step parameters to per-year ones for step `dt` years.
    pub fn per_step_to_annual(self, dt: f64) -> Self {
        Self {
            alpha: self.alpha,
            k: self.k / dt,
            sigma: self.sigma / dt.sqrt(),
        }
    }

    pub fn stationary_variance(&self) -> f64 {
        self.sigma * self.sigma / (2.0 * self.k)
    }

    /// Mean and standard deviation of `y_{t+h}` given `y_t = y0`.
    pub fn transition(&self, y0: f64, h: f64) -> (f64, f64) {
        let decay = (-self.k * h).exp();
        let var = self.sigma * self.sigma * (-(-2.0 * self.k * h).exp_m1()) / (2.0 * self.k);
        (self.alpha + (y0 - self.alpha) * decay, var.sqrt())
    }
}

/// Hodrick-Prescott decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct HpDecomposition {
    pub trend: Vec<f64>,
    pub cycle: Vec<f64>,
    pub lambda: f64,
}

impl HpDecomposition {
    pub fn write_csv<W: Write>(&self, series: &RateSeries, mut w: W) -> Result<()> {
        writeln!(w, "date,rate,trend,cycle")?;
        for i in 0..series.len() {
            writeln!(
                w,
                "{},{},{},{}",
                series.dates[i].format("%Y-%m-%d"),
                series.values[i],
                self.trend[i],
                self.cycle[i]
            )?;
        }
        Ok(())
    }
}

/// Solves `min sum (y - t)^2 + lambda * sum (second difference of t)^2`.
///
/// The normal equations `(I + lambda D'D) t = y` are symmetric positive
/// definite and pentadiagonal; they are solved by banded Cholesky.
pub fn hp_filter(values: &[f64], lambda: f64) -> Result<HpDecomposition> {
    let n = values.len();
    if n < 3 {
        return Err(invalid("series", format!("HP filter needs >= 3 points, got {n}")));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda", format!("must be > 0, got {lambda}")));
    }
    // a0[i] = A[i][i], a1[i] = A[i][i-1], a2[i] = A[i][i-2].
    let mut a0 = vec![1.0; n];
    let mut a1 = vec![0.0; n];
    let mut a2 = vec![0.0; n];
    let coef = [1.0, -2.0, 1.0];
    for r in 0..n - 2 {
        for p in 0..3 {
            let i = r + p;
            a0[i] += lambda * coef[p] * coef[p];
            if p >= 1 {
                a1[i] += lambda * coef[p] * coef[p - 1];
            }
            if p >= 2 {
                a2[i] += lambda * coef[p] * coef[p - 2];
            }
        }
    }
    let mut l0 = vec![0.0; n];
    let mut l1 = vec![0.0; n];
    let mut l2 = vec![0.0; n];
    for i in 0..n {
        if i >= 2 {
            l2[i] = a2[i] / l0[i - 2];
        }
        if i >= 1 {
            let cross = if i >= 2 { l2[i] * l1[i - 1] } else { 0.0 };
            l1[i] = (a1[i] - cross) / l0[i - 1];
        }
        let pivot = a0[i] - l1[i] * l1[i] - l2[i] * l2[i];
        assert!(pivot > 0.0, "HP system lost positive definiteness at row {i}");
        l0[i] = pivot.sqrt();
    }
    let mut z = vec![0.0; n];
    for i in 0..n {
        let mut s = values[i];
        if i >= 1 {
            s -= l1[i] * z[i - 1];
        }
        if i >= 2 {
            s -= l2[i] * z[i - 2];
        }
        z[i] = s / l0[i];
    }
    let mut trend = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = z[i];
        if i + 1 < n {
            s -= l1[i + 1] * trend[i + 1];
        }
        if i + 2 < n {
            s -= l2[i + 2] * trend[i + 2];
        }
        trend[i] = s / l0[i];
    }
    let cycle = values.iter().zip(&trend).map(|(y, t)| y - t).collect();
    Ok(HpDecomposition { trend, cycle, lambda })
}

fn check_calibration_input(y: &[f64], dt: f64) -> Result<()> {
    if y.len() < 3 {
        return Err(invalid(
            "series",
            format!("calibration needs >= 3 points, got {}", y.len()),
        ));
    }
    if !(dt > 0.0) {
        return Err(invalid("dt", format!("must be > 0, got {dt}")));
    }
    if let Some(index) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(())
}

/// Sample mean of `y_1..y_n` and the two sums of the moment-matching
/// estimator: squared increments and squared deviations from the mean.
fn moment_sums(y: &[f64]) -> (f64, f64, f64) {
    let obs = &y[1..];
    let n = obs.len() as f64;
    let alpha = obs.iter().sum::<f64>() / n;
    let increments: f64 = y.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    let deviations: f64 = obs.iter().map(|v| (v - alpha).powi(2)).sum();
    (alpha, increments, deviations)
}

/// Two-step moment matching: `alpha` is the sample mean, the per-step
/// reversion is `sum(dy^2) / (2 sum((y - alpha)^2))`, and `sigma` comes from
/// the realized quadratic variation.
pub fn calibrate_moment_matching(y: &[f64], dt: f64) -> Result<OuParams> {
    check_calibration_input(y, dt)?;
    let (alpha, increments, deviations) = moment_sums(y);
    if deviations <= 0.0 || increments <= 0.0 {
        return Err(Error::DegenerateSeries);
    }
    let n = (y.len() - 1) as f64;
    let k_step = increments / (2.0 * deviations);
    Ok(OuParams {
        alpha,
        k: k_step / dt,
        sigma: (increments / (n * dt)).sqrt(),
    })
}

/// Moment matching with the reversion speed held at `k` (per year):
/// `sigma^2 = 2 k * sample variance`.
pub fn calibrate_fixed_k(y: &[f64], dt: f64, k: f64) -> Result<OuParams> {
    check_calibration_input(y, dt)?;
    if !(k > 0.0) {
        return Err(invalid("k", format!("must be > 0, got {k}")));
    }
    let (alpha, _, deviations) = moment_sums(y);
    if deviations <= 0.0 {
        return Err(Error::DegenerateSeries);
    }
    let n = (y.len() - 1) as f64;
    Ok(OuParams {
        alpha,
        k,
        sigma: (2.0 * k * deviations / n).sqrt(),
    })
}

/// Paths stored row-major, `steps + 1` values per path starting at `y0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathMatrix {
    pub n_paths: usize,
    pub steps: usize,
    data: Vec<f64>,
}

impl PathMatrix {
    pub fn path(&self, i: usize) -> &[f64] {
        let w = self.steps + 1;
        &self.data[i * w..(i + 1) * w]
    }

    pub fn value(&self, path: usize, step: usize) -> f64 {
        self.data[path * (self.steps + 1) + step]
    }

    pub fn terminal(&self) -> Vec<f64> {
        (0..self.n_paths).map(|i| self.value(i, self.steps)).collect()
    }

    /// Values of every path at `step`.
    pub fn column(&self, step: usize) -> Vec<f64> {
        (0..self.n_paths).map(|i| self.value(i, step)).collect()
    }

    pub fn write_csv<W: Write>(&self, dt: f64, mut w: W) -> Result<()> {
        write!(w, "t")?;
        for p in 0..self.n_paths {
            write!(w, ",path{p}")?;
        }
        writeln!(w)?;
        for s in 0..=self.steps {
            write!(w, "{}", s as f64 * dt)?;
            for p in 0..self.n_paths {
                write!(w, ",{}", self.value(p, s))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn check_sim(params: &OuParams, dt: f64, steps: usize, n_paths: usize) -> Result<()> {
    OuParams::new(params.alpha, params.k, params.sigma)?;
    if !(dt > 0.0) {
        return Err(invalid("dt", format!("must be > 0, got {dt}")));
    }
    if steps == 0 || n_paths == 0 {
        return Err(invalid("steps/n_paths", "must be >= 1"));
    }
    Ok(())
}

struct ExactStep {
    alpha: f64,
    decay: f64,
    scale: f64,
}

impl ExactStep {
    fn new(p: &OuParams, dt: f64) -> Self {
        let (_, scale) = p.transition(0.0, dt);
        Self {
            alpha: p.alpha,
            decay: (-p.k * dt).exp(),
            scale,
        }
    }

    #[inline]
    fn advance(&self, y: f64, z: f64) -> f64 {
        self.alpha + (y - self.alpha) * self.decay + self.scale * z
    }
}

/// Exact discretization of the OU process.
///
/// Path `i` uses stream `i` of the key derived from `seed`; step `j` of that
/// path consumes the `j`-th normal draw of the stream.
pub fn simulate_ou(params: &OuParams, y0: f64, dt: f64, steps: usize, n_paths: usize, seed: u64) -> Result<PathMatrix> {
    check_sim(params, dt, steps, n_paths)?;
    let step = ExactStep::new(params, dt);
    let key = rng::derive_seed(seed, &[0x4f55]);
    let mut data = vec![0.0; n_paths * (steps + 1)];
    data.par_chunks_mut(steps + 1).enumerate().for_each(|(i, row)| {
        let mut r = rng::stream_rng(key, i as u64);
        row[0] = y0;
        for j in 1..=steps {
            let z: f64 = StandardNormal.sample(&mut r);
            row[j] = step.advance(row[j - 1], z);
        }
    });
    Ok(PathMatrix { n_paths, steps, data })
}

/// Terminal values only; identical to `simulate_ou(..).terminal()`.
pub fn simulate_ou_terminal(
    params: &OuParams,
    y0: f64,
    dt: f64,
    steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    check_sim(params, dt, steps, n_paths)?;
    let step = ExactStep::new(params, dt);
    let key = rng::derive_seed(seed, &[0x4f55]);
    Ok((0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream_rng(key, i as u64);
            let mut y = y0;
            for _ in 0..steps {
                let z: f64 = StandardNormal.sample(&mut r);
                y = step.advance(y, z);
            }
            y
        })
        .collect())
}

/// Variance of `X_t = exp(y_t)` with `y_0 = ln(x0)`.
pub fn bk_variance(params: &OuParams, x0: f64, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(invalid("t", format!("must be >= 0, got {t}")));
    }
    if !(x0 > 0.0) {
        return Err(invalid("x0", format!("must be > 0, got {x0}")));
    }
    let OuParams { alpha, k, sigma } = *params;
    let e1 = (-k * t).exp();
    let one_minus_e2 = -(-2.0 * k * t).exp_m1();
    let ln_x0 = x0.ln();
    let log_m2 = 2.0 * ln_x0 * e1 + 2.0 * alpha * (1.0 - e1) + sigma * sigma / k * one_minus_e2;
    let log_m1 = ln_x0 * e1 + alpha * (1.0 - e1) + sigma * sigma / (4.0 * k) * one_minus_e2;
    // m2 - m1^2 = m1^2 (exp(v) - 1) with v = log_m2 - 2 log_m1 >= 0.
    let v = log_m2 - 2.0 * log_m1;
    Ok((2.0 * log_m1).exp() * v.exp_m1())
}

/// Scales the volatility by `gamma`.
pub fn volatility_adjust(params: &OuParams, gamma: f64) -> Result<OuParams> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid("gamma", format!("must be > 0, got {gamma}")));
    }
    Ok(OuParams {
        sigma: params.sigma * gamma,
        ..*params
    })
}

/// Rates from simulated log-cycle values and the frozen log-trend level.
pub fn compose_rate(cycle: &[f64], log_trend: f64) -> Vec<f64> {
    cycle.iter().map(|y| (log_trend + y).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Dense Gaussian elimination on the HP normal equations.
    fn hp_dense(y: &[f64], lambda: f64) -> Vec<f64> {
        let n = y.len();
        let mut a = vec![vec![0.0; n]; n];
        for (i, row) in a.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for r in 0..n - 2 {
            let c = [(r, 1.0), (r + 1, -2.0), (r + 2, 1.0)];
            for &(i, ci) in &c {
                for &(j, cj) in &c {
                    a[i][j] += lambda * ci * cj;
                }
            }
        }
        let mut b = y.to_vec();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
                .unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            for row in col + 1..n {
                let f = a[row][col] / a[col][col];
                for j in col..n {
                    a[row][j] -= f * a[col][j];
                }
                b[row] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    #[test]
    fn hp_matches_dense_solver() {
        let y: Vec<f64> = (0..25).map(|i| (i as f64 * 0.7).sin() + 0.05 * i as f64).collect();
        for lambda in [0.5, 100.0, 1600.0] {
            let hp = hp_filter(&y, lambda).unwrap();
            let dense = hp_dense(&y, lambda);
            for (a, b) in hp.trend.iter().zip(&dense) {
                assert_relative_eq!(a, b, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn hp_constant_and_linear_pass_through() {
        let c = vec![0.3; 10];
        let hp = hp_filter(&c, 1e5).unwrap();
        assert!(hp.cycle.iter().all(|v| v.abs() < 1e-9));
        let lin: Vec<f64> = (0..40).map(|i| 1.0 + 0.25 * i as f64).collect();
        let hp = hp_filter(&lin, 1e6).unwrap();
        assert!(hp.cycle.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn hp_small_lambda_tracks_series() {
        let y: Vec<f64> = (0..20).map(|i| ((i * 7) % 5) as f64).collect();
        let hp = hp_filter(&y, 1e-9).unwrap();
        assert!(hp.cycle.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn hp_reconstruction_is_exact() {
        let y: Vec<f64> = (0..200).map(|i| (i as f64 * 0.13).cos() * 2.0 + 1.0).collect();
        let hp = hp_filter(&y, Units::default().default_hp_lambda()).unwrap();
        for i in 0..y.len() {
            assert!((hp.trend[i] + hp.cycle[i] - y[i]).abs() <= 1e-10);
        }
    }

    #[test]
    fn hp_rejects_bad_input() {
        assert!(hp_filter(&[1.0, 2.0], 10.0).is_err());
        assert!(hp_filter(&[1.0, 2.0, 3.0], 0.0).is_err());
    }

    #[test]
    fn default_lambda_for_weekly_data() {
        let u = Units::default();
        assert_relative_eq!(u.dt(), 0.02);
        assert_relative_eq!(u.observations_per_quarter(), 12.5);
        assert_relative_eq!(u.default_hp_lambda(), 1600.0 * 12.5f64.powi(4));
    }

    #[test]
    fn calibration_simple_cases() {
        let y = [0.1, 0.3, 0.1, 0.3, 0.1, 0.3];
        let p = calibrate_moment_matching(&y, 1.0).unwrap();
        // mean of y_1..y_5
        assert_relative_eq!(p.alpha, (0.3 + 0.1 + 0.3 + 0.1 + 0.3) / 5.0);
        let noisy: Vec<f64> = (0..50).map(|i| 2.0 + 1e-6 * ((i * 37 % 11) as f64 - 5.0)).collect();
        let p = calibrate_moment_matching(&noisy, 0.02).unwrap();
        assert_relative_eq!(p.alpha, 2.0, epsilon = 1e-5);
        assert!(matches!(
            calibrate_moment_matching(&[1.0; 5], 1.0),
            Err(Error::DegenerateSeries)
        ));
        assert!(calibrate_moment_matching(&[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn zero_volatility_relaxes_deterministically() {
        let p = OuParams::new(0.5, 2.0, 0.0).unwrap();
        let paths = simulate_ou(&p, 1.5, 0.1, 10, 3, 1).unwrap();
        for s in 0..=10 {
            let t = s as f64 * 0.1;
            let expect = 0.5 + (1.5 - 0.5) * (-2.0 * t).exp();
            for i in 0..3 {
                assert_relative_eq!(paths.value(i, s), expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn terminal_matches_full_paths() {
        let p = OuParams::new(0.0, 1.0, 0.3).unwrap();
        let full = simulate_ou(&p, 0.2, 0.05, 7, 50, 9).unwrap();
        let term = simulate_ou_terminal(&p, 0.2, 0.05, 7, 50, 9).unwrap();
        assert_eq!(full.terminal(), term);
    }

    #[test]
    fn long_horizon_reaches_stationary_law() {
        let p = OuParams::new(0.4, 5.0, 0.5).unwrap();
        let y = simulate_ou_terminal(&p, -3.0, 10.0, 1, 200_000, 5).unwrap();
        let m = y.iter().sum::<f64>() / y.len() as f64;
        let v = y.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (y.len() - 1) as f64;
        assert_relative_eq!(m, 0.4, epsilon = 0.005);
        assert_relative_eq!(v, p.stationary_variance(), max_relative = 0.02);
    }

    #[test]
    fn bk_variance_edges() {
        let p = OuParams::new(-0.1, 0.6, 0.13).unwrap();
        assert_eq!(bk_variance(&p, 1.3, 0.0).unwrap(), 0.0);
        let flat = OuParams { sigma: 0.0, ..p };
        assert_eq!(bk_variance(&flat, 1.3, 2.0).unwrap(), 0.0);
        assert!(bk_variance(&p, 1.3, -1.0).is_err());
        assert!(bk_variance(&p, 0.0, 1.0).is_err());
        assert!(bk_variance(&p, 1.3, 1.0).unwrap() > 0.0);
    }

    #[test]
    fn bk_variance_increases_with_gamma() {
        let p = THETA_PER_STEP.per_step_to_annual(0.02);
        let mut last = 0.0;
        for g in [0.5, 1.0, 1.5, 2.0, 2.5, 3.0] {
            let v = bk_variance(&volatility_adjust(&p, g).unwrap(), 1.0, 2.0).unwrap();
            assert!(v > last);
            last = v;
        }
    }

    #[test]
    fn gamma_adjustment() {
        let t = THETA_PER_STEP;
        assert_eq!(volatility_adjust(&t, 1.0).unwrap(), t);
        let adj = volatility_adjust(&t, 3.0).unwrap();
        assert_relative_eq!(adj.sigma, 0.056_565, epsilon = 1e-12);
        assert_eq!((adj.alpha, adj.k), (t.alpha, t.k));
        assert!(volatility_adjust(&t, 0.0).is_err());
        assert!(volatility_adjust(&t, -1.0).is_err());
    }

    #[test]
    fn compose_rate_basics() {
        assert_eq!(compose_rate(&[0.0], 0.0), vec![1.0]);
        let r = compose_rate(&[-0.2, 0.0, 0.1], 1.0f64.ln());
        assert!(r.windows(2).all(|w| w[0] < w[1]));
        assert_relative_eq!(r[1], 1.0);
    }

    #[test]
    fn decompose_simulate_recompose_is_continuous() {
        let rates: Vec<f64> = (0..120)
            .map(|i| 2.0 + 0.5 * (i as f64 / 9.0).sin() + 0.004 * i as f64)
            .collect();
        let logs: Vec<f64> = rates.iter().map(|r| r.ln()).collect();
        let hp = hp_filter(&logs, 1e4).unwrap();
        let p = OuParams::new(0.0, 1.0, 0.0).unwrap();
        let y0 = *hp.cycle.last().unwrap();
        let paths = simulate_ou(&p, y0, 1e-9, 1, 1, 0).unwrap();
        let r0 = compose_rate(&[paths.value(0, 1)], *hp.trend.last().unwrap())[0];
        assert_relative_eq!(r0, *rates.last().unwrap(), max_relative = 1e-8);
    }

    #[test]
    fn series_validation() {
        let d = |s: &str| NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap();
        assert!(RateSeries::new(vec![d("2000-01-07"), d("2000-01-07")], vec![1.0, 1.0], 0.02).is_err());
        assert!(RateSeries::new(vec![d("2000-01-07")], vec![1.0], 0.02).is_err());
        let csv = "date,rate\n2000-01-07,3.1\n2000-01-14,3.2\n";
        let s = RateSeries::read_csv(csv.as_bytes(), 0.02).unwrap();
        assert_eq!(s.len(), 2);
        let bad = "date,rate\n2000-01-07,3.1\n2000-01-14,abc\n";
        match RateSeries::read_csv(bad.as_bytes(), 0.02) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn hp_parts_sum_to_input(
            v in prop::collection::vec(-3.0..3.0f64, 3..80),
            log_lambda in -2.0..8.0f64,
        ) {
            let d = hp_filter(&v, 10f64.powf(log_lambda)).unwrap();
            for i in 0..v.len() {
                prop_assert!((d.trend[i] + d.cycle[i] - v[i]).abs() < 1e-9);
            }
        }

        #[test]
        fn bk_variance_is_nonnegative(
            alpha in -1.0..1.0f64,
            k in 0.01..5.0f64,
            sigma in 0.0..1.0f64,
            x0 in 0.001..10.0f64,
            t in 0.0..10.0f64,
        ) {
            let v = bk_variance(&OuParams { alpha, k, sigma }, x0, t).unwrap();
            prop_assert!(v >= 0.0 && v.is_finite());
        }

        #[test]
        fn transitions_compose(
            k in 0.01..5.0f64,
            sigma in 0.01..1.0f64,
            y0 in -1.0..1.0f64,
            h1 in 0.001..3.0f64,
            h2 in 0.001..3.0f64,
        ) {
            let p = OuParams { alpha: 0.1, k, sigma };
            let (m1, s1) = p.transition(y0, h1);
            let (m2, s2) = p.transition(m1, h2);
            let (m, s) = p.transition(y0, h1 + h2);
            let decay = (-k * h2).exp();
            prop_assert!((m2 - m).abs() < 1e-12);
            prop_assert!((s2 * s2 + decay * decay * s1 * s1 - s * s).abs() < 1e-12);
        }
    }
}
