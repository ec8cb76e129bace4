//! Figure and table reproductions as in-memory artifacts (CSV, SVG, JSON).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backtest::BacktestConfig;
use crate::critical::Thresholds;
use crate::diagnostics::{cov_curve, write_cov_csv};
use crate::error::{invalid, Result};
use crate::experiments::{
    bin_by_delta, fictitious_bk_experiment, histogram, rejection_rates, Alternative, ExperimentResult,
    FictitiousConfig, FictitiousResult, ScenarioGrid,
};
use crate::fixture::{euribor_fixture, sweep_dates, SWEEP_GAMMAS};
use crate::gof::TestKind;
use crate::output::Metadata;
use crate::ratesim::{RateSeries, Units, THETA_PER_STEP};
use crate::svg::{Histogram, LineChart, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FigureId {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig7,
    Fig8,
    Table3,
}

impl FigureId {
    pub const ALL: [FigureId; 8] = [
        FigureId::Fig1,
        FigureId::Fig2,
        FigureId::Fig3,
        FigureId::Fig4,
        FigureId::Fig5,
        FigureId::Fig7,
        FigureId::Fig8,
        FigureId::Table3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FigureId::Fig1 => "fig1",
            FigureId::Fig2 => "fig2",
            FigureId::Fig3 => "fig3",
            FigureId::Fig4 => "fig4",
            FigureId::Fig5 => "fig5",
            FigureId::Fig7 => "fig7",
            FigureId::Fig8 => "fig8",
            FigureId::Table3 => "table3",
        }
    }

    pub fn valid_ids() -> String {
        Self::ALL.iter().map(|f| f.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FigureId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown figure id `{s}`; valid ids: {}", Self::valid_ids()))
    }
}

pub const FIG2_SAMPLE_SIZES: [usize; 4] = [5, 10, 20, 100];
pub const FIG3_SAMPLE_SIZES: [usize; 2] = [5, 20];
pub const SWEEP_SAMPLE_SIZES: [usize; 11] = [5, 10, 15, 20, 30, 40, 50, 75, 100, 125, 150];
pub const FIG4_PANELS: [(f64, f64); 4] = [(0.0, 0.5), (0.0, 1.5), (0.5, 1.0), (0.5, 1.5)];
pub const FIG5_NU: [f64; 3] = [2.8, 3.0, 3.5];
/// One week, one month, one year and two years.
pub const FIG7_HORIZONS: [f64; 4] = [0.02, 1.0 / 12.0, 1.0, 2.0];
pub const DELTA_BINS: usize = 8;
pub const DELTA_COVERAGE: f64 = 0.95;
pub const HISTOGRAM_BINS: usize = 30;

/// `0.5, 0.6, ..., 2.0`.
pub fn sigma_grid() -> Vec<f64> {
    (5..=20).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureOptions {
    pub trials: usize,
    pub seed: u64,
    pub confidence: f64,
    /// Rate history for `table3`; the bundled fixture when `None`.
    pub data: Option<RateSeries>,
    pub backtest: BacktestConfig,
    pub gammas: Vec<f64>,
    pub sample_size: usize,
    pub fictitious_scenarios: usize,
}

impl Default for FigureOptions {
    fn default() -> Self {
        Self {
            trials: 10_000,
            seed: 1,
            confidence: 0.05,
            data: None,
            backtest: BacktestConfig {
                dates: sweep_dates(),
                ..Default::default()
            },
            gammas: SWEEP_GAMMAS.to_vec(),
            sample_size: 5,
            fictitious_scenarios: 3000,
        }
    }
}

/// A named output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    fn new(name: impl Into<String>, bytes: Vec<u8>) -> Self {
        Self {
            name: name.into(),
            bytes,
        }
    }

    fn text(name: impl Into<String>, s: String) -> Self {
        Self::new(name, s.into_bytes())
    }
}

fn base_meta(id: FigureId, opts: &FigureOptions, th: &Thresholds) -> Metadata {
    Metadata::new()
        .with("figure", id)
        .with("seed", opts.seed)
        .with("trials", opts.trials)
        .with("confidence", opts.confidence)
        .with("thresholds", th.source_label(0).replace("n=0", "each n"))
}

fn with_svg_meta(svg: String, meta: &Metadata) -> String {
    let comment: Vec<String> = meta.0.iter().map(|(k, v)| format!("{k}={v}")).collect();
    let body = svg.replacen(
        '\n',
        &format!("\n<!-- {} -->\n", comment.join("; ").replace("--", "-")),
        1,
    );
    body
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn grid(opts: &FigureOptions, alternatives: Vec<Alternative>, sizes: &[usize], tests: &[TestKind]) -> ScenarioGrid {
    ScenarioGrid {
        alternatives,
        sample_sizes: sizes.to_vec(),
        trials: opts.trials,
        confidence: opts.confidence,
        tests: tests.to_vec(),
        seed: opts.seed,
    }
}

fn rate_vs_sigma_chart(r: &ExperimentResult, test: TestKind, sizes: &[usize], title: &str) -> LineChart {
    LineChart {
        title: title.to_string(),
        x_label: "standard deviation of the observed sample".into(),
        y_label: "rejection rate".into(),
        series: sizes
            .iter()
            .map(|&n| Series {
                name: format!("{test} n={n}"),
                points: r
                    .rows
                    .iter()
                    .filter(|x| x.test == test && x.n == n)
                    .map(|x| (x.sigma_or_nu, x.rejection_rate))
                    .collect(),
            })
            .collect(),
        y_range: Some((0.0, 1.0)),
    }
}

fn rate_vs_n_chart(r: &ExperimentResult, tests: &[TestKind], title: &str) -> LineChart {
    LineChart {
        title: title.to_string(),
        x_label: "sample size n".into(),
        y_label: "rejection rate".into(),
        series: tests
            .iter()
            .map(|&t| Series {
                name: t.to_string(),
                points: r
                    .rows
                    .iter()
                    .filter(|x| x.test == t)
                    .map(|x| (x.n as f64, x.rejection_rate))
                    .collect(),
            })
            .collect(),
        y_range: Some((0.0, 1.0)),
    }
}

pub fn fictitious_config(opts: &FigureOptions, horizons: &[f64]) -> FictitiousConfig {
    let units = Units::default();
    FictitiousConfig {
        params: THETA_PER_STEP.per_step_to_annual(units.dt()),
        dt: units.dt(),
        window_steps: (3.0 / units.dt()).round() as usize,
        horizons: horizons.to_vec(),
        sample_size: opts.sample_size,
        trials: opts.trials,
        n_scenarios: opts.fictitious_scenarios,
        confidence: opts.confidence,
        tests: vec![TestKind::Ad, TestKind::AdAsym, TestKind::Ks],
        seed: opts.seed,
    }
}

fn fictitious_meta(meta: &Metadata, r: &FictitiousResult, cfg: &FictitiousConfig) -> Metadata {
    let mut m = meta.clone();
    let d = r.deltas();
    m.push("horizon_years", r.horizon);
    m.push("horizon_steps", r.horizon_steps);
    m.push("sample_size", cfg.sample_size);
    m.push("window_steps", cfg.window_steps);
    m.push("n_scenarios", cfg.n_scenarios);
    m.push("dropped_trials", r.dropped);
    m.push("delta_mean", d.iter().sum::<f64>() / d.len().max(1) as f64);
    m.push("delta", "ln(sd_sim / mean sd_bkt), horizon sd at shared k");
    m.push("units", Units::default().describe());
    m
}

fn fig1() -> Result<Vec<Artifact>> {
    let curve = cov_curve(1, 200)?;
    let csv = csv_bytes(|b| write_cov_csv(&curve, b))?;
    let svg = LineChart {
        title: "Coefficient of variation of the empirical CDF estimate".into(),
        x_label: "number of observations n".into(),
        y_label: "CoV".into(),
        series: vec![
            Series {
                name: "CoV".into(),
                points: curve.iter().map(|&(n, c)| (n as f64, c)).collect(),
            },
            Series {
                name: "10% level".into(),
                points: vec![(1.0, 0.1), (200.0, 0.1)],
            },
        ],
        y_range: None,
    }
    .render();
    Ok(vec![Artifact::new("fig1.csv", csv), Artifact::text("fig1.svg", svg)])
}

fn sigma_sweep(
    id: FigureId,
    opts: &FigureOptions,
    th: &Thresholds,
    sizes: &[usize],
    panels: &[(&str, TestKind, &[usize], &str)],
) -> Result<Vec<Artifact>> {
    let alts = sigma_grid()
        .into_iter()
        .map(|sigma| Alternative::Gaussian { mu: 0.0, sigma })
        .collect();
    let tests = [TestKind::Ad, TestKind::AdAsym];
    let r = rejection_rates(&grid(opts, alts, sizes, &tests), th)?;
    let meta = base_meta(id, opts, th)
        .with("forecast", "N(0,1)")
        .with("observed", "N(0,sigma^2)");
    let mut out = vec![Artifact::new(
        format!("{id}.csv"),
        csv_bytes(|b| r.write_csv(&meta, b))?,
    )];
    for (suffix, test, ns, title) in panels {
        let svg = rate_vs_sigma_chart(&r, *test, ns, title).render();
        out.push(Artifact::text(format!("{id}{suffix}.svg"), with_svg_meta(svg, &meta)));
    }
    Ok(out)
}

fn fig3(opts: &FigureOptions, th: &Thresholds) -> Result<Vec<Artifact>> {
    let alts = sigma_grid()
        .into_iter()
        .map(|sigma| Alternative::Gaussian { mu: 0.0, sigma })
        .collect();
    let tests = [TestKind::Ad, TestKind::AdAsym];
    let r = rejection_rates(&grid(opts, alts, &FIG3_SAMPLE_SIZES, &tests), th)?;
    let meta = base_meta(FigureId::Fig3, opts, th)
        .with("forecast", "N(0,1)")
        .with("observed", "N(0,sigma^2)");
    let mut out = vec![Artifact::new("fig3.csv", csv_bytes(|b| r.write_csv(&meta, b))?)];
    for (suffix, n) in [("a", 5usize), ("b", 20)] {
        let chart = LineChart {
            title: format!("AD vs AD-Asym, n={n}"),
            x_label: "standard deviation of the observed sample".into(),
            y_label: "rejection rate".into(),
            series: tests
                .iter()
                .map(|&t| Series {
                    name: t.to_string(),
                    points: r
                        .rows
                        .iter()
                        .filter(|x| x.test == t && x.n == n)
                        .map(|x| (x.sigma_or_nu, x.rejection_rate))
                        .collect(),
                })
                .collect(),
            y_range: Some((0.0, 1.0)),
        };
        out.push(Artifact::text(
            format!("fig3{suffix}.svg"),
            with_svg_meta(chart.render(), &meta),
        ));
    }
    Ok(out)
}

fn fig4(opts: &FigureOptions, th: &Thresholds) -> Result<Vec<Artifact>> {
    let mut out = Vec::new();
    for (i, &(mu, sigma)) in FIG4_PANELS.iter().enumerate() {
        let suffix = (b'a' + i as u8) as char;
        let r = rejection_rates(
            &grid(
                opts,
                vec![Alternative::Gaussian { mu, sigma }],
                &SWEEP_SAMPLE_SIZES,
                &TestKind::ALL,
            ),
            th,
        )?;
        let meta = base_meta(FigureId::Fig4, opts, th)
            .with("panel", suffix)
            .with("forecast", "N(0,1)")
            .with("observed", format!("N({mu},{sigma}^2)"));
        out.push(Artifact::new(
            format!("fig4{suffix}.csv"),
            csv_bytes(|b| r.write_csv(&meta, b))?,
        ));
        let title = format!("Observed N({mu}, {sigma}^2) against N(0, 1)");
        let svg = rate_vs_n_chart(&r, &TestKind::ALL, &title).render();
        out.push(Artifact::text(format!("fig4{suffix}.svg"), with_svg_meta(svg, &meta)));
    }
    Ok(out)
}

fn fig5(opts: &FigureOptions, th: &Thresholds) -> Result<Vec<Artifact>> {
    let tests = [TestKind::Ad, TestKind::AdAsym];
    let mut out = Vec::new();
    for (i, &nu) in FIG5_NU.iter().enumerate() {
        let suffix = (b'a' + i as u8) as char;
        let alt = Alternative::TStudent {
            nu,
            unit_variance: true,
        };
        let r = rejection_rates(&grid(opts, vec![alt], &SWEEP_SAMPLE_SIZES, &tests), th)?;
        let meta = base_meta(FigureId::Fig5, opts, th)
            .with("panel", suffix)
            .with("forecast", "N(0,1)")
            .with("observed", format!("unit-variance t-Student nu={nu}"));
        out.push(Artifact::new(
            format!("fig5{suffix}.csv"),
            csv_bytes(|b| r.write_csv(&meta, b))?,
        ));
        let svg = rate_vs_n_chart(&r, &tests, &format!("Unit-variance t-Student, nu={nu}")).render();
        out.push(Artifact::text(format!("fig5{suffix}.svg"), with_svg_meta(svg, &meta)));
    }
    Ok(out)
}

fn fig7(opts: &FigureOptions, th: &Thresholds) -> Result<Vec<Artifact>> {
    let cfg = fictitious_config(opts, &FIG7_HORIZONS);
    let results = fictitious_bk_experiment(&cfg, th)?;
    let mut out = Vec::new();
    for (i, r) in results.iter().enumerate() {
        let suffix = (b'a' + i as u8) as char;
        let binning = bin_by_delta(r, DELTA_BINS, DELTA_COVERAGE)?;
        let mut meta = fictitious_meta(&base_meta(FigureId::Fig7, opts, th), r, &cfg);
        meta.push("panel", suffix);
        meta.push(
            "bins",
            format!("{DELTA_BINS} equal-width bins over the central {DELTA_COVERAGE} of delta"),
        );
        meta.push("excluded_below", binning.below);
        meta.push("excluded_above", binning.above);
        let csv = csv_bytes(|b| {
            meta.write(&mut *b)?;
            use std::io::Write;
            writeln!(b, "test,bin_lo,bin_hi,delta_mid,count,rejection_rate,trials,seed")?;
            for (j, t) in r.tests.iter().enumerate() {
                for bin in &binning.bins {
                    writeln!(
                        b,
                        "{},{},{},{},{},{},{},{}",
                        t,
                        bin.lo,
                        bin.hi,
                        bin.mid(),
                        bin.count,
                        bin.rates[j],
                        cfg.trials,
                        cfg.seed
                    )?;
                }
            }
            Ok(())
        })?;
        out.push(Artifact::new(format!("fig7{suffix}.csv"), csv));
        let chart = LineChart {
            title: format!(
                "Rejection rate vs delta, sample {}, horizon {:.3} years",
                cfg.sample_size, r.horizon
            ),
            x_label: "delta".into(),
            y_label: "rejection rate".into(),
            series: r
                .tests
                .iter()
                .enumerate()
                .map(|(j, t)| Series {
                    name: t.to_string(),
                    points: binning.bins.iter().map(|b| (b.mid(), b.rates[j])).collect(),
                })
                .collect(),
            y_range: Some((0.0, 1.0)),
        };
        out.push(Artifact::text(
            format!("fig7{suffix}.svg"),
            with_svg_meta(chart.render(), &meta),
        ));
    }
    Ok(out)
}

fn fig8(opts: &FigureOptions, th: &Thresholds) -> Result<Vec<Artifact>> {
    let cfg = fictitious_config(opts, &[2.0]);
    let results = fictitious_bk_experiment(&cfg, th)?;
    let r = &results[0];
    let bins = histogram(&r.deltas(), HISTOGRAM_BINS)?;
    let meta = fictitious_meta(&base_meta(FigureId::Fig8, opts, th), r, &cfg);
    let csv = csv_bytes(|b| {
        meta.write(&mut *b)?;
        use std::io::Write;
        writeln!(b, "bin_lo,bin_hi,count")?;
        for (lo, hi, c) in &bins {
            writeln!(b, "{lo},{hi},{c}")?;
        }
        Ok(())
    })?;
    let svg = Histogram {
        title: "Distribution of delta, two-year horizon".into(),
        x_label: "delta = ln(sd_sim / sd_bkt)".into(),
        bins,
    }
    .render();
    Ok(vec![
        Artifact::new("fig8.csv", csv),
        Artifact::text("fig8.svg", with_svg_meta(svg, &meta)),
    ])
}

fn table3(opts: &FigureOptions, th: &Thresholds) -> Result<Vec<Artifact>> {
    let series = match &opts.data {
        Some(s) => s.clone(),
        None => euribor_fixture(),
    };
    let mut cfg = opts.backtest.clone();
    cfg.confidence = opts.confidence;
    cfg.seed = opts.seed;
    let sweep = crate::experiments::empirical_gamma_sweep(&series, &opts.gammas, &cfg, th)?;
    let mut meta = cfg.metadata();
    meta.push("figure", "table3");
    meta.push("gammas", format!("{:?}", opts.gammas));
    meta.push("thresholds", sweep.outcomes[0].threshold_source.clone());
    let matrix = csv_bytes(|b| sweep.write_csv(&meta, b))?;
    let first = &sweep.outcomes[0];
    let unit_gamma = BacktestConfig {
        gamma: opts.gammas[0],
        ..cfg.clone()
    };
    let records = csv_bytes(|b| first.write_records_csv(&unit_gamma, b))?;
    let summary: Vec<serde_json::Value> = sweep
        .gammas
        .iter()
        .zip(&sweep.outcomes)
        .map(|(g, o)| {
            let mut v = o.summary_json(&BacktestConfig {
                gamma: *g,
                ..cfg.clone()
            });
            v["gamma"] = serde_json::json!(g);
            v
        })
        .collect();
    let json = serde_json::to_vec_pretty(&serde_json::json!({ "seed": cfg.seed, "sweep": summary }))?;
    Ok(vec![
        Artifact::new("table3.csv", matrix),
        Artifact::new("table2.csv", records),
        Artifact::new("table3.json", json),
    ])
}

/// Computes every artifact of one figure without touching the filesystem.
pub fn run_figure(id: FigureId, opts: &FigureOptions, th: &Thresholds) -> Result<Vec<Artifact>> {
    if opts.trials == 0 {
        return Err(invalid("trials", "must be >= 1"));
    }
    match id {
        FigureId::Fig1 => fig1(),
        FigureId::Fig2 => sigma_sweep(
            id,
            opts,
            th,
            &FIG2_SAMPLE_SIZES,
            &[
                (
                    "a",
                    TestKind::Ad,
                    &FIG2_SAMPLE_SIZES,
                    "AD rejection rate vs standard deviation",
                ),
                (
                    "b",
                    TestKind::AdAsym,
                    &FIG2_SAMPLE_SIZES,
                    "AD-Asym rejection rate vs standard deviation",
                ),
            ],
        ),
        FigureId::Fig3 => fig3(opts, th),
        FigureId::Fig4 => fig4(opts, th),
        FigureId::Fig5 => fig5(opts, th),
        FigureId::Fig7 => fig7(opts, th),
        FigureId::Fig8 => fig8(opts, th),
        FigureId::Table3 => table3(opts, th),
    }
}
