use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;
use gofbt::backtest::{run_backtest, BacktestConfig, DateRule};
use gofbt::critical::{decide, simulate_null, CriticalTable, ThresholdMode, Thresholds, DEFAULT_THRESHOLD_TRIALS};
use gofbt::diagnostics::{cov_curve, cov_warning, write_cov_csv, DEFAULT_COV_THRESHOLD};
use gofbt::figures::{run_figure, Artifact, FigureId, FigureOptions};
use gofbt::fixture::{euribor_fixture, SWEEP_GAMMAS};
use gofbt::gof::{ProbSample, TestKind};
use gofbt::output::Metadata;
use gofbt::ratesim::{
    calibrate_moment_matching, compose_rate, hp_filter, simulate_ou, volatility_adjust, OuParams, RateSeries, Units,
    THETA_PER_STEP,
};
use gofbt::svg::{LineChart, Series};

use crate::manifest::{digest_file, emit, InputDigest};
use crate::settings::Settings;
use crate::{Cli, Command, Common};

macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        writeln!(std::io::stdout().lock(), $($arg)*)?;
    }};
}

pub const CACHE_ENV: &str = "GOFBT_CACHE_DIR";
const DEFAULT_SEED: u64 = 1;
const DEFAULT_THRESHOLD_SEED: u64 = 20_141_231;
const DEFAULT_OUT_DIR: &str = "gofbt-out";
const TAILS: [f64; 8] = [0.25, 0.15, 0.10, 0.05, 0.025, 0.01, 0.005, 0.001];

/// Command-line misuse, reported with exit status 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn parse_tests(s: &str) -> Result<Vec<TestKind>> {
    s.split(',')
        .map(|t| t.trim().parse::<TestKind>().map_err(|e| anyhow!(Usage(e.to_string()))))
        .collect()
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<T>()
                .map_err(|_| anyhow!(Usage(format!("bad {what} `{x}`"))))
        })
        .collect()
}

struct Env {
    settings: Settings,
}

impl Env {
    fn units(&mut self) -> Result<Units> {
        let d = Units::default();
        Ok(Units {
            trading_days_per_year: self
                .settings
                .get("trading_days_per_year", None, d.trading_days_per_year)?,
            days_per_step: self.settings.get("days_per_step", None, d.days_per_step)?,
        })
    }

    fn seed(&mut self, c: &Common, default: u64) -> Result<u64> {
        self.settings.get("seed", c.seed, default)
    }

    fn confidence(&mut self, c: &Common) -> Result<f64> {
        let v = self.settings.get("confidence", c.confidence, 0.05)?;
        if !(v > 0.0 && v < 1.0) {
            bail!(Usage(format!("--confidence must lie in (0, 1), got {v}")));
        }
        Ok(v)
    }

    fn out_dir(&mut self, c: &Common, required: bool) -> Result<Option<PathBuf>> {
        let flag = c.out_dir.as_ref().map(|p| p.display().to_string());
        let v: Option<String> = if required {
            Some(self.settings.get("out_dir", flag, DEFAULT_OUT_DIR.to_string())?)
        } else {
            self.settings.get_opt("out_dir", flag)?
        };
        Ok(v.map(PathBuf::from))
    }

    fn thresholds(&mut self, c: &Common) -> Result<Thresholds> {
        let mode: String = self
            .settings
            .get("thresholds", c.thresholds.clone(), "mc".to_string())?;
        let trials = self
            .settings
            .get("threshold_trials", c.threshold_trials, DEFAULT_THRESHOLD_TRIALS)?;
        let seed = self
            .settings
            .get("threshold_seed", c.threshold_seed, DEFAULT_THRESHOLD_SEED)?;
        let th = match mode.as_str() {
            "mc" => Thresholds::new(ThresholdMode::MonteCarlo { trials, seed }),
            "table" => Thresholds::new(ThresholdMode::Builtin),
            other => bail!(Usage(format!("--thresholds must be `mc` or `table`, got `{other}`"))),
        };
        Ok(match std::env::var_os(CACHE_ENV) {
            Some(dir) if !dir.is_empty() => th.with_cache_dir(dir),
            _ => th,
        })
    }

    fn series(&mut self, data: Option<&Path>) -> Result<(RateSeries, Vec<InputDigest>)> {
        let flag = data.map(|p| p.display().to_string());
        let path: Option<String> = self.settings.get_opt("data", flag)?;
        let dt = self.units()?.dt();
        match path {
            Some(p) => {
                let p = PathBuf::from(p);
                let file = std::fs::File::open(&p).with_context(|| format!("opening {}", p.display()))?;
                let s = RateSeries::read_csv(file, dt).with_context(|| format!("reading {}", p.display()))?;
                Ok((s, vec![digest_file(&p)?]))
            }
            None => {
                log::info!("no --data given; using the bundled fixture");
                let mut s = euribor_fixture();
                s.dt = dt;
                Ok((s, vec![]))
            }
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut env = Env {
        settings: Settings::load(cli.config.as_deref())?,
    };
    let threads: Option<usize> = env.settings.get_opt("threads", cli.threads)?;
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Stat { input, test, common } => stat(&mut env, &input, test, &common),
        Command::Critvals {
            test,
            n,
            trials,
            draws,
            common,
        } => critvals(&mut env, test, n, trials, draws, &common),
        Command::Cov {
            n,
            max_n,
            threshold,
            common,
        } => cov(&mut env, n, max_n, threshold, &common),
        Command::Simulate {
            data,
            alpha,
            k,
            sigma,
            y0,
            horizon,
            paths,
            gamma,
            common,
        } => simulate(
            &mut env,
            data.as_deref(),
            [alpha, k, sigma, y0],
            horizon,
            paths,
            gamma,
            &common,
        ),
        Command::Backtest {
            data,
            gamma,
            horizon,
            window,
            n_scenarios,
            test,
            dates,
            common,
        } => backtest(
            &mut env,
            data.as_deref(),
            gamma,
            horizon,
            window,
            n_scenarios,
            test,
            dates,
            &common,
        ),
        Command::Experiment {
            figure,
            trials,
            data,
            gamma,
            horizon,
            window,
            common,
        } => experiment(
            &mut env,
            &figure,
            trials,
            data.as_deref(),
            gamma,
            horizon,
            window,
            &common,
        ),
    }
}

/// Parses one probability per line; blank lines and `#` comments are
/// skipped and a leading `pit`/`u` header is allowed.
pub fn parse_pits(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let field = line.split(',').next().unwrap_or("").trim();
        if field.is_empty() || field.starts_with('#') {
            continue;
        }
        if out.is_empty() && (field.eq_ignore_ascii_case("pit") || field.eq_ignore_ascii_case("u")) {
            continue;
        }
        let v: f64 = field
            .parse()
            .map_err(|_| anyhow!("line {}: `{field}` is not a number", i + 1))?;
        if !(v > 0.0 && v < 1.0) {
            bail!("line {}: probability {v} must lie strictly inside (0, 1)", i + 1);
        }
        out.push(v);
    }
    if out.is_empty() {
        bail!("no probabilities found in input");
    }
    Ok(out)
}

fn stat(env: &mut Env, input: &Path, test: Option<String>, c: &Common) -> Result<()> {
    let text = std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let pits = parse_pits(&text).with_context(|| format!("parsing {}", input.display()))?;
    let tests = parse_tests(&env.settings.get("test", test, "ad".to_string())?)?;
    let confidence = env.confidence(c)?;
    let seed = env.seed(c, DEFAULT_SEED)?;
    let th = env.thresholds(c)?;
    let cov_threshold = env.settings.get("cov_threshold", None, DEFAULT_COV_THRESHOLD)?;
    let out_dir = env.out_dir(c, false)?;
    let sample = ProbSample::new(pits)?;
    let n = sample.n();
    let mut rows = Vec::new();
    for t in tests {
        let s = t.statistic(&sample);
        let limit = th.threshold(t, n, confidence)?;
        let verdict = decide(&s, limit);
        out!(
            "{t}: n={n} statistic={} threshold={} confidence={confidence} verdict={verdict}",
            s.value, limit
        );
        rows.push(serde_json::json!({
            "test": t, "n": n, "statistic": s.value, "threshold": limit, "verdict": verdict,
        }));
    }
    out!("threshold source: {}", th.source_label(n));
    let report = cov_warning(n, cov_threshold)?;
    out!(
        "CoV={:.6} threshold={} warn={}",
        report.cov, report.threshold, report.warn
    );
    if let Some(c) = &report.caveat {
        out!("caveat: {c}");
    }
    if let Some(dir) = out_dir {
        let json = serde_json::json!({
            "seed": seed,
            "threshold_source": th.source_label(n),
            "results": rows,
            "cov": report,
        });
        let arts = [Artifact {
            name: "stat.json".into(),
            bytes: serde_json::to_vec_pretty(&json)?,
        }];
        emit(
            &dir,
            "stat",
            env.settings.resolved(),
            seed,
            vec![digest_file(input)?],
            &arts,
        )?;
    }
    Ok(())
}

fn critvals(
    env: &mut Env,
    test: Option<String>,
    n: Option<usize>,
    trials: Option<usize>,
    draws: bool,
    c: &Common,
) -> Result<()> {
    let tests = parse_tests(&env.settings.get("test", test, "ad".to_string())?)?;
    let n = env.settings.get("n", n, 1000usize)?;
    let trials = env.settings.get("trials", trials, DEFAULT_THRESHOLD_TRIALS)?;
    let seed = env.seed(c, DEFAULT_THRESHOLD_SEED)?;
    let dir = env.out_dir(c, true)?.expect("required");
    let mut arts = Vec::new();
    for t in tests {
        let null = simulate_null(t, n, trials, seed)?;
        let table = CriticalTable::from_null(&null, &TAILS)?;
        out!("{t} n={n} trials={trials} seed={seed}");
        for (tail, v) in &table.entries {
            out!("  {tail:>6}  {v:.6}");
        }
        let mut buf = Vec::new();
        table.write_csv(&mut buf)?;
        arts.push(Artifact {
            name: format!("critvals_{t}_n{n}.csv"),
            bytes: buf,
        });
        if draws {
            let mut buf = Vec::new();
            null.write_csv(&mut buf)?;
            arts.push(Artifact {
                name: format!("null_{t}_n{n}.csv"),
                bytes: buf,
            });
        }
    }
    emit(&dir, "critvals", env.settings.resolved(), seed, vec![], &arts)?;
    Ok(())
}

fn cov(env: &mut Env, n: Option<usize>, max_n: Option<usize>, threshold: Option<f64>, c: &Common) -> Result<()> {
    let n = env.settings.get("n", n, 5usize)?;
    let max_n = env.settings.get("max_n", max_n, 200usize)?;
    let threshold = env.settings.get("cov_threshold", threshold, DEFAULT_COV_THRESHOLD)?;
    let out_dir = env.out_dir(c, false)?;
    let r = cov_warning(n, threshold)?;
    out!("n={} CoV={:.6} threshold={} warn={}", r.n, r.cov, r.threshold, r.warn);
    if let Some(cv) = &r.caveat {
        out!("caveat: {cv}");
    }
    out!(
        "smallest n with CoV <= {threshold}: {}",
        gofbt::diagnostics::crossing_size(threshold)?
    );
    if let Some(dir) = out_dir {
        let curve = cov_curve(1, max_n.max(1))?;
        let mut buf = Vec::new();
        write_cov_csv(&curve, &mut buf)?;
        let arts = [
            Artifact {
                name: "cov.csv".into(),
                bytes: buf,
            },
            Artifact {
                name: "cov.json".into(),
                bytes: serde_json::to_vec_pretty(&r)?,
            },
        ];
        emit(&dir, "cov", env.settings.resolved(), 0, vec![], &arts)?;
    }
    Ok(())
}

fn paths_chart(title: &str, y_label: &str, t: &[f64], paths: &[Vec<f64>]) -> String {
    LineChart {
        title: title.into(),
        x_label: "years".into(),
        y_label: y_label.into(),
        series: paths
            .iter()
            .enumerate()
            .map(|(i, p)| Series {
                name: format!("path {i}"),
                points: t.iter().copied().zip(p.iter().copied()).collect(),
            })
            .collect(),
        y_range: None,
    }
    .render()
}

fn simulate(
    env: &mut Env,
    data: Option<&Path>,
    [alpha, k, sigma, y0]: [Option<f64>; 4],
    horizon: Option<f64>,
    paths: Option<usize>,
    gamma: Option<f64>,
    c: &Common,
) -> Result<()> {
    let units = env.units()?;
    let dt = units.dt();
    let seed = env.seed(c, DEFAULT_SEED)?;
    let horizon = env.settings.get("horizon", horizon, 2.0)?;
    let n_paths = env.settings.get("paths", paths, 10usize)?;
    let gamma = env.settings.get("gamma", gamma, 1.0)?;
    let dir = env.out_dir(c, true)?.expect("required");
    let steps = ((horizon / dt).round() as usize).max(1);
    let t: Vec<f64> = (0..=steps).map(|s| s as f64 * dt).collect();
    let mut meta = Metadata::new()
        .with("seed", seed)
        .with("gamma", gamma)
        .with("horizon_years", horizon)
        .with("steps", steps)
        .with("units", units.describe());
    let mut arts = Vec::new();
    let mut inputs = Vec::new();
    let has_data = data.is_some() || env.settings.get_opt::<String>("data", None)?.is_some();
    if has_data {
        let (series, digests) = env.series(data)?;
        inputs = digests;
        let lambda = env.settings.get("hp_lambda", None, units.default_hp_lambda())?;
        let logs: Vec<f64> = series
            .values
            .iter()
            .map(|v| {
                if *v > 0.0 {
                    Ok(v.ln())
                } else {
                    Err(anyhow!("rates must be positive"))
                }
            })
            .collect::<Result<_>>()?;
        let hp = hp_filter(&logs, lambda)?;
        let fitted = calibrate_moment_matching(&hp.cycle, dt)?;
        let params = volatility_adjust(&fitted, gamma)?;
        meta.push("hp_lambda", lambda);
        meta.push("decomposition", "trend and cycle of ln(rate)");
        let mut buf = Vec::new();
        meta.write(&mut buf)?;
        hp.write_csv(&series, &mut buf)?;
        arts.push(Artifact {
            name: "hp_decomposition.csv".into(),
            bytes: buf,
        });
        let calib = serde_json::json!({
            "seed": seed,
            "calibrated": fitted,
            "per_step": { "alpha": fitted.alpha, "k": fitted.k * dt, "sigma": fitted.sigma * dt.sqrt() },
            "units": units.describe(),
            "hp_lambda": lambda,
        });
        arts.push(Artifact {
            name: "calibration.json".into(),
            bytes: serde_json::to_vec_pretty(&calib)?,
        });
        let y_start = *hp.cycle.last().expect("non-empty");
        let trend = *hp.trend.last().expect("non-empty");
        let m = simulate_ou(&params, y_start, dt, steps, n_paths, seed)?;
        let rates: Vec<Vec<f64>> = (0..n_paths).map(|i| compose_rate(m.path(i), trend)).collect();
        let mut buf = Vec::new();
        meta.push("trend", "frozen at last filtered value");
        meta.write(&mut buf)?;
        use std::io::Write;
        write!(buf, "t")?;
        for i in 0..n_paths {
            write!(buf, ",path{i}")?;
        }
        writeln!(buf)?;
        for (s, ts) in t.iter().enumerate() {
            write!(buf, "{ts}")?;
            for r in &rates {
                write!(buf, ",{}", r[s])?;
            }
            writeln!(buf)?;
        }
        arts.push(Artifact {
            name: "rate_paths.csv".into(),
            bytes: buf,
        });
        arts.push(Artifact {
            name: "rate_paths.svg".into(),
            bytes: paths_chart("Simulated rates from the calibrated model", "rate", &t, &rates).into_bytes(),
        });
    } else {
        let theta = THETA_PER_STEP.per_step_to_annual(dt);
        let p = OuParams::new(
            env.settings.get("alpha", alpha, theta.alpha)?,
            env.settings.get("k", k, theta.k)?,
            env.settings.get("sigma", sigma, theta.sigma)?,
        )?;
        let p = volatility_adjust(&p, gamma)?;
        let y_start = env.settings.get("y0", y0, p.alpha)?;
        let m = simulate_ou(&p, y_start, dt, steps, n_paths, seed)?;
        meta.push("alpha", p.alpha);
        meta.push("k", p.k);
        meta.push("sigma", p.sigma);
        meta.push("y0", y_start);
        let mut buf = Vec::new();
        meta.write(&mut buf)?;
        m.write_csv(dt, &mut buf)?;
        arts.push(Artifact {
            name: "ou_paths.csv".into(),
            bytes: buf,
        });
        let ys: Vec<Vec<f64>> = (0..n_paths).map(|i| m.path(i).to_vec()).collect();
        arts.push(Artifact {
            name: "ou_paths.svg".into(),
            bytes: paths_chart("OU log-cycle paths", "y", &t, &ys).into_bytes(),
        });
    }
    emit(&dir, "simulate", env.settings.resolved(), seed, inputs, &arts)?;
    out!("wrote {} files to {}", arts.len() + 1, dir.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn backtest(
    env: &mut Env,
    data: Option<&Path>,
    gamma: Option<f64>,
    horizon: Option<f64>,
    window: Option<f64>,
    n_scenarios: Option<usize>,
    test: Option<String>,
    dates: Option<String>,
    c: &Common,
) -> Result<()> {
    let d = BacktestConfig::default();
    let (series, inputs) = env.series(data)?;
    let tests_s = d.tests.iter().map(|t| t.name()).collect::<Vec<_>>().join(",");
    let dates: Option<String> = env.settings.get_opt("dates", dates)?;
    let config = BacktestConfig {
        calibration_window: env.settings.get("window", window, d.calibration_window)?,
        horizon: env.settings.get("horizon", horizon, d.horizon)?,
        n_scenarios: env.settings.get("n_scenarios", n_scenarios, d.n_scenarios)?,
        dates: match dates {
            Some(s) => DateRule::Explicit(parse_list::<NaiveDate>(&s, "date")?),
            None => DateRule::default(),
        },
        confidence: env.confidence(c)?,
        gamma: env.settings.get("gamma", gamma, d.gamma)?,
        tests: parse_tests(&env.settings.get("test", test, tests_s)?)?,
        seed: env.seed(c, DEFAULT_SEED)?,
        units: env.units()?,
        hp_lambda: env.settings.get_opt("hp_lambda", None)?,
        cov_threshold: env.settings.get("cov_threshold", None, d.cov_threshold)?,
    };
    let th = env.thresholds(c)?;
    let dir = env.out_dir(c, true)?.expect("required");
    let out = run_backtest(&series, &config, &th)?;
    for r in &out.records {
        out!(
            "{} -> {}: realized={} forecast[min={:.6} mean={:.6} max={:.6}] pit={:.6}",
            r.date, r.target_date, r.realized, r.forecast_min, r.forecast_mean, r.forecast_max, r.pit
        );
    }
    for r in &out.results {
        out!(
            "{}: statistic={} threshold={} verdict={}",
            r.statistic.test, r.statistic.value, r.threshold, r.verdict
        );
    }
    out!("threshold source: {}", out.threshold_source);
    out!("CoV={:.6} warn={}", out.cov_report.cov, out.cov_report.warn);
    out!("delta={:.6} (ratio {:.6})", out.delta.log_ratio, out.delta.plain_ratio);
    let mut records = Vec::new();
    out.write_records_csv(&config, &mut records)?;
    let arts = [
        Artifact {
            name: "backtest.csv".into(),
            bytes: records,
        },
        Artifact {
            name: "backtest.json".into(),
            bytes: serde_json::to_vec_pretty(&out.summary_json(&config))?,
        },
    ];
    emit(&dir, "backtest", env.settings.resolved(), config.seed, inputs, &arts)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn experiment(
    env: &mut Env,
    figure: &str,
    trials: Option<usize>,
    data: Option<&Path>,
    gamma: Option<String>,
    horizon: Option<f64>,
    window: Option<f64>,
    c: &Common,
) -> Result<()> {
    let id: FigureId = figure.parse().map_err(|e: String| anyhow!(Usage(e)))?;
    let d = FigureOptions::default();
    let mut opts = FigureOptions {
        trials: env.settings.get("trials", trials, d.trials)?,
        seed: env.seed(c, d.seed)?,
        confidence: env.confidence(c)?,
        ..d
    };
    let mut inputs = Vec::new();
    if id == FigureId::Table3 {
        let has_data = data.is_some() || env.settings.get_opt::<String>("data", None)?.is_some();
        if has_data {
            let (s, digests) = env.series(data)?;
            opts.data = Some(s);
            inputs = digests;
        }
        let default_gammas = SWEEP_GAMMAS.iter().map(|g| g.to_string()).collect::<Vec<_>>().join(",");
        opts.gammas = parse_list(&env.settings.get("gamma", gamma, default_gammas)?, "gamma")?;
        opts.backtest.horizon = env.settings.get("horizon", horizon, opts.backtest.horizon)?;
        opts.backtest.calibration_window = env.settings.get("window", window, opts.backtest.calibration_window)?;
        if has_data {
            opts.backtest.dates = DateRule::default();
        }
    }
    let th = env.thresholds(c)?;
    let dir = env.out_dir(c, true)?.expect("required");
    let arts = run_figure(id, &opts, &th)?;
    emit(
        &dir,
        &format!("experiment {id}"),
        env.settings.resolved(),
        opts.seed,
        inputs,
        &arts,
    )?;
    for a in &arts {
        out!("{}", dir.join(&a.name).display());
    }
    Ok(())
}
