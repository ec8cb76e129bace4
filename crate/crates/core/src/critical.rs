//! Rejection thresholds: the asymptotic Anderson-Darling table and Monte
//! Carlo null distributions at any sample size.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gof::{GofStatistic, ProbSample, TestKind};
use crate::rng;

pub const MIN_NULL_TRIALS: usize = 1000;
pub const DEFAULT_THRESHOLD_TRIALS: usize = 100_000;

/// Upper tail percentiles of the asymptotic `W^2` distribution.
pub const AD_ASYMPTOTIC: [(f64, f64); 7] = [
    (0.250, 1.248),
    (0.150, 1.610),
    (0.100, 1.933),
    (0.050, 2.492),
    (0.010, 3.880),
    (0.005, 4.500),
    (0.001, 6.000),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Reject,
    Accept,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Reject => "REJECT",
            Verdict::Accept => "ACCEPT",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Rejects iff the statistic strictly exceeds the threshold.
pub fn decide(statistic: &GofStatistic, threshold: f64) -> Verdict {
    if statistic.value > threshold {
        Verdict::Reject
    } else {
        Verdict::Accept
    }
}

/// Monte Carlo draws of a statistic under uniform `H0`.
#[derive(Debug, Clone, PartialEq)]
pub struct NullDistribution {
    pub test: TestKind,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    sorted_draws: Vec<f64>,
}

impl NullDistribution {
    pub fn sorted_draws(&self) -> &[f64] {
        &self.sorted_draws
    }

    /// Builds a distribution from pre-computed draws (sorted here).
    pub fn from_draws(test: TestKind, n: usize, seed: u64, mut draws: Vec<f64>) -> Result<Self> {
        if draws.len() < MIN_NULL_TRIALS {
            return Err(invalid(
                "trials",
                format!("need at least {MIN_NULL_TRIALS} draws, got {}", draws.len()),
            ));
        }
        draws.sort_by(f64::total_cmp);
        Ok(Self {
            test,
            n,
            trials: draws.len(),
            seed,
            sorted_draws: draws,
        })
    }

    /// CSV: `test,n,trials,seed` header and value row, then a `draw`
    /// column with one sorted value per line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "test,n,trials,seed")?;
        writeln!(w, "{},{},{},{}", self.test, self.n, self.trials, self.seed)?;
        writeln!(w, "draw")?;
        for d in &self.sorted_draws {
            writeln!(w, "{d}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let reader = BufReader::new(r);
        let mut lines = reader.lines().enumerate();
        let mut next = |expect: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, line)) => Ok((i + 1, line?)),
                None => Err(Error::Parse {
                    line: 0,
                    reason: format!("unexpected end of file, expected {expect}"),
                }),
            }
        };
        let (l, header) = next("header")?;
        if header.trim() != "test,n,trials,seed" {
            return Err(Error::Parse {
                line: l,
                reason: "bad header".into(),
            });
        }
        let (l, meta) = next("metadata row")?;
        let fields: Vec<&str> = meta.trim().split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: l,
                reason: "expected 4 fields".into(),
            });
        }
        let parse_err = |reason: String| Error::Parse { line: l, reason };
        let test: TestKind = fields[0].parse().map_err(|e: Error| parse_err(e.to_string()))?;
        let n: usize = fields[1].parse().map_err(|_| parse_err("bad n".into()))?;
        let trials: usize = fields[2].parse().map_err(|_| parse_err("bad trials".into()))?;
        let seed: u64 = fields[3].parse().map_err(|_| parse_err("bad seed".into()))?;
        let (l, h2) = next("draw header")?;
        if h2.trim() != "draw" {
            return Err(Error::Parse {
                line: l,
                reason: "expected `draw` header".into(),
            });
        }
        let mut draws = Vec::with_capacity(trials);
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let v: f64 = line.trim().parse().map_err(|_| Error::Parse {
                line: i + 1,
                reason: format!("not a number: `{line}`"),
            })?;
            draws.push(v);
        }
        if draws.len() != trials {
            return Err(Error::Parse {
                line: 2,
                reason: format!("declared {trials} trials, found {} draws", draws.len()),
            });
        }
        let dist = Self::from_draws(test, n, seed, draws)?;
        Ok(dist)
    }
}

/// Simulates `trials` samples of `n` uniforms and evaluates `test` on each.
///
/// Trial `i` draws from stream `i` of a key derived from `(seed, test, n)`,
/// so the result is identical for any number of worker threads.
pub fn simulate_null(test: TestKind, n: usize, trials: usize, seed: u64) -> Result<NullDistribution> {
    if n == 0 {
        return Err(invalid("n", "sample size must be >= 1"));
    }
    if trials < MIN_NULL_TRIALS {
        return Err(invalid(
            "trials",
            format!("need at least {MIN_NULL_TRIALS}, got {trials}"),
        ));
    }
    let key = rng::derive_seed(seed, &[0x4e55_4c4c, n as u64]);
    let draws: Vec<f64> = (0..trials)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(n),
            |buf, i| {
                let mut r = rng::stream_rng(key, i as u64);
                buf.clear();
                buf.extend((0..n).map(|_| rng::open_unit(&mut r)));
                let u = ProbSample::new(buf.clone()).expect("open-interval draws");
                test.statistic(&u).value
            },
        )
        .collect();
    NullDistribution::from_draws(test, n, seed, draws)
}

/// Empirical `(1 - confidence)` quantile with linear interpolation between
/// adjacent order statistics.
pub fn critical_value(dist: &NullDistribution, confidence: f64) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(invalid("confidence", format!("must lie in (0, 1), got {confidence}")));
    }
    Ok(quantile_sorted(&dist.sorted_draws, 1.0 - confidence))
}

pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let m = sorted.len();
    if m == 1 {
        return sorted[0];
    }
    let h = (m - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(m - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    BuiltinTable,
    MonteCarlo,
}

/// Percentile values keyed by tail probability for one test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalTable {
    pub test: TestKind,
    /// `None` for the asymptotic table.
    pub n: Option<usize>,
    pub trials: usize,
    pub seed: u64,
    pub provenance: Provenance,
    /// `(tail_probability, percentile)`, tail probability descending.
    pub entries: Vec<(f64, f64)>,
}

impl CriticalTable {
    pub fn value(&self, tail: f64) -> Option<f64> {
        self.entries
            .iter()
            .find(|(t, _)| (t - tail).abs() < 1e-12)
            .map(|&(_, v)| v)
    }

    pub fn from_null(dist: &NullDistribution, tails: &[f64]) -> Result<Self> {
        let mut entries = tails
            .iter()
            .map(|&t| critical_value(dist, t).map(|v| (t, v)))
            .collect::<Result<Vec<_>>>()?;
        entries.sort_by(|a, b| b.0.total_cmp(&a.0));
        Ok(Self {
            test: dist.test,
            n: Some(dist.n),
            trials: dist.trials,
            seed: dist.seed,
            provenance: Provenance::MonteCarlo,
            entries,
        })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "test,n,trials,seed")?;
        let n = self.n.map_or_else(|| "inf".to_string(), |n| n.to_string());
        writeln!(w, "{},{},{},{}", self.test, n, self.trials, self.seed)?;
        writeln!(w, "tail_prob,value")?;
        for (t, v) in &self.entries {
            writeln!(w, "{t},{v}")?;
        }
        Ok(())
    }
}

/// The asymptotic Anderson-Darling percentile table.
pub fn builtin_ad_table() -> CriticalTable {
    CriticalTable {
        test: TestKind::Ad,
        n: None,
        trials: 0,
        seed: 0,
        provenance: Provenance::BuiltinTable,
        entries: AD_ASYMPTOTIC.to_vec(),
    }
}

/// Where rejection thresholds come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ThresholdMode {
    /// Asymptotic table (Anderson-Darling only, tabulated tails only).
    Builtin,
    /// Monte Carlo null distribution at the actual sample size.
    MonteCarlo { trials: usize, seed: u64 },
}

impl Default for ThresholdMode {
    fn default() -> Self {
        ThresholdMode::MonteCarlo {
            trials: DEFAULT_THRESHOLD_TRIALS,
            seed: 20_141_231,
        }
    }
}

type NullMemo = HashMap<(TestKind, usize), Arc<NullDistribution>>;

/// Memoizing threshold lookup with an optional on-disk cache.
#[derive(Debug, Clone)]
pub struct Thresholds {
    mode: ThresholdMode,
    cache_dir: Option<PathBuf>,
    memo: Arc<Mutex<NullMemo>>,
}

impl Thresholds {
    pub fn new(mode: ThresholdMode) -> Self {
        Self {
            mode,
            cache_dir: None,
            memo: Arc::default(),
        }
    }

    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }

    pub fn mode(&self) -> ThresholdMode {
        self.mode
    }

    pub fn source_label(&self, n: usize) -> String {
        match self.mode {
            ThresholdMode::Builtin => "asymptotic AD table".to_string(),
            ThresholdMode::MonteCarlo { trials, seed } => {
                format!("Monte Carlo at n={n} ({trials} trials, seed {seed})")
            }
        }
    }

    /// Null distribution for `(test, n)` in Monte Carlo mode.
    pub fn null(&self, test: TestKind, n: usize) -> Result<Arc<NullDistribution>> {
        let ThresholdMode::MonteCarlo { trials, seed } = self.mode else {
            return Err(invalid("threshold mode", "null distributions need Monte Carlo mode"));
        };
        if let Some(d) = self.memo.lock().expect("poisoned").get(&(test, n)) {
            return Ok(d.clone());
        }
        let dist = match &self.cache_dir {
            Some(dir) => load_or_simulate(dir, test, n, trials, seed)?,
            None => simulate_null(test, n, trials, seed)?,
        };
        let dist = Arc::new(dist);
        self.memo.lock().expect("poisoned").insert((test, n), dist.clone());
        Ok(dist)
    }

    pub fn threshold(&self, test: TestKind, n: usize, confidence: f64) -> Result<f64> {
        match self.mode {
            ThresholdMode::Builtin => {
                if test != TestKind::Ad {
                    return Err(Error::MissingThreshold {
                        test: test.to_string(),
                        tail: confidence,
                    });
                }
                builtin_ad_table().value(confidence).ok_or(Error::MissingThreshold {
                    test: test.to_string(),
                    tail: confidence,
                })
            }
            ThresholdMode::MonteCarlo { .. } => critical_value(&*self.null(test, n)?, confidence),
        }
    }
}

pub fn cache_file_name(test: TestKind, n: usize, trials: usize, seed: u64) -> String {
    format!("null_{}_n{}_t{}_s{}.csv", test, n, trials, seed)
}

/// Reads a cached null distribution or simulates and stores it.
pub fn load_or_simulate(dir: &Path, test: TestKind, n: usize, trials: usize, seed: u64) -> Result<NullDistribution> {
    let path = dir.join(cache_file_name(test, n, trials, seed));
    if let Ok(file) = fs::File::open(&path) {
        match NullDistribution::read_csv(file) {
            Ok(d) if d.test == test && d.n == n && d.trials == trials && d.seed == seed => return Ok(d),
            Ok(_) => log::warn!("cache entry {} does not match its key; regenerating", path.display()),
            Err(e) => log::warn!("unreadable cache entry {}: {e}; regenerating", path.display()),
        }
    }
    let dist = simulate_null(test, n, trials, seed)?;
    fs::create_dir_all(dir)?;
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    {
        let mut w = std::io::BufWriter::new(fs::File::create(&tmp)?);
        dist.write_csv(&mut w)?;
        w.flush()?;
    }
    fs::rename(&tmp, &path)?;
    Ok(dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ramp() -> NullDistribution {
        let draws: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        NullDistribution::from_draws(TestKind::Ad, 5, 0, draws).unwrap()
    }

    #[test]
    fn builtin_table_values() {
        let t = builtin_ad_table();
        assert_eq!(t.value(0.05), Some(2.492));
        assert_eq!(t.value(0.001), Some(6.000));
        assert!(t.value(0.01).unwrap() > t.value(0.05).unwrap());
        for w in t.entries.windows(2) {
            assert!(w[0].0 > w[1].0 && w[0].1 < w[1].1);
        }
    }

    #[test]
    fn quantile_interpolation() {
        let v: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_relative_eq!(quantile_sorted(&v, 0.95), 95.05, epsilon = 1e-12);
        assert_relative_eq!(quantile_sorted(&v, 0.5), 50.5, epsilon = 1e-12);
        assert_relative_eq!(quantile_sorted(&v, 1.0), 100.0);
    }

    #[test]
    fn critical_value_limits() {
        let d = ramp();
        assert_relative_eq!(critical_value(&d, 1e-12).unwrap(), 1000.0, epsilon = 1e-6);
        assert_relative_eq!(critical_value(&d, 0.5).unwrap(), 500.5);
        assert!(critical_value(&d, 0.0).is_err());
        assert!(critical_value(&d, 1.0).is_err());
    }

    #[test]
    fn decide_is_strict() {
        let s = |v| GofStatistic {
            test: TestKind::Ad,
            value: v,
            n: 5,
        };
        assert_eq!(decide(&s(3.0), 2.492), Verdict::Reject);
        assert_eq!(decide(&s(2.492), 2.492), Verdict::Accept);
        for &(_, thr) in &AD_ASYMPTOTIC {
            assert_eq!(decide(&s(0.1), thr), Verdict::Accept);
        }
    }

    #[test]
    fn too_few_trials_rejected() {
        assert!(simulate_null(TestKind::Ad, 5, 999, 1).is_err());
        assert!(simulate_null(TestKind::Ad, 0, 1000, 1).is_err());
    }

    #[test]
    fn simulation_is_reproducible() {
        let a = simulate_null(TestKind::Ks, 7, 2000, 11).unwrap();
        let b = simulate_null(TestKind::Ks, 7, 2000, 11).unwrap();
        assert_eq!(a.sorted_draws(), b.sorted_draws());
        let c = simulate_null(TestKind::Ks, 7, 2000, 12).unwrap();
        assert_ne!(a.sorted_draws(), c.sorted_draws());
        assert!(a.sorted_draws().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn worker_count_does_not_matter() {
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| simulate_null(TestKind::AdAsym, 5, 3000, 3).unwrap());
        let b = four.install(|| simulate_null(TestKind::AdAsym, 5, 3000, 3).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let a = simulate_null(TestKind::Cm, 4, 1000, 5).unwrap();
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let b = NullDistribution::read_csv(&buf[..]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cache_reuses_file() {
        let dir = tempfile::tempdir().unwrap();
        let a = load_or_simulate(dir.path(), TestKind::Ad, 3, 1000, 9).unwrap();
        let path = dir.path().join(cache_file_name(TestKind::Ad, 3, 1000, 9));
        assert!(path.exists());
        let b = load_or_simulate(dir.path(), TestKind::Ad, 3, 1000, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn builtin_mode_only_serves_ad() {
        let t = Thresholds::new(ThresholdMode::Builtin);
        assert_eq!(t.threshold(TestKind::Ad, 5, 0.05).unwrap(), 2.492);
        assert!(t.threshold(TestKind::Ks, 5, 0.05).is_err());
        assert!(t.threshold(TestKind::Ad, 5, 0.07).is_err());
    }
}
