//! Synthetic weekly Euribor-6M-shaped history bundled for tests and the
//! gamma sweep.
//!
//! The series is `exp(log-trend + cycle)`: a piecewise-linear log-trend
//! through anchor levels plus a seeded OU cycle whose volatility is scaled
//! per calendar segment. The five reference realized values are pinned on
//! their dates by a short tent-shaped correction of the cycle.

use chrono::{Duration, NaiveDate};
use rand_distr::{Distribution, StandardNormal};

use crate::backtest::DateRule;
use crate::error::Result;
use crate::ratesim::{RateSeries, Units};
use crate::rng;

const BUNDLED: &str = include_str!("../data/euribor_fixture.csv");

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid calendar date")
}

/// Reference realized rate (percent) and forecast min/mean/max at each
/// two-year backtesting date.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceRow {
    pub date: NaiveDate,
    pub realized: f64,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

pub fn reference_rows() -> [ReferenceRow; 5] {
    [
        ReferenceRow {
            date: ymd(2004, 12, 24),
            realized: 2.211,
            min: 2.0609,
            mean: 3.3743,
            max: 5.5148,
        },
        ReferenceRow {
            date: ymd(2006, 12, 22),
            realized: 3.8291,
            min: 1.2958,
            mean: 2.3433,
            max: 3.7534,
        },
        ReferenceRow {
            date: ymd(2008, 12, 19),
            realized: 2.7634,
            min: 2.2502,
            mean: 3.4989,
            max: 4.9848,
        },
        ReferenceRow {
            date: ymd(2010, 12, 17),
            realized: 1.0449,
            min: 1.8545,
            mean: 3.3177,
            max: 5.357,
        },
        ReferenceRow {
            date: ymd(2012, 12, 14),
            realized: 0.1685,
            min: 0.16382,
            mean: 1.2567,
            max: 4.8442,
        },
    ]
}

pub const SWEEP_GAMMAS: [f64; 5] = [1.0, 2.0, 2.5, 2.75, 3.0];

/// Forecast origins two years (104 weeks) before each reference date.
pub fn sweep_dates() -> DateRule {
    DateRule::Explicit(reference_rows().iter().map(|r| r.date - Duration::weeks(104)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureKnobs {
    /// `(date, rate in decimal)` anchors of the log-trend.
    pub anchors: Vec<(NaiveDate, f64)>,
    /// Per-step reversion and volatility of the log-cycle.
    pub cycle_k: f64,
    pub cycle_sigma: f64,
    /// `(from date, multiplier)`; each applies until the next entry.
    pub vol_segments: Vec<(NaiveDate, f64)>,
    /// Half-width in weeks of the pinning correction.
    pub pin_width: usize,
    pub seed: u64,
}

impl Default for FixtureKnobs {
    fn default() -> Self {
        let yearly = [
            0.1,
            0.1,
            0.7238433422755494,
            0.5129735634614092,
            1.8588271921644222,
            0.46835573771231115,
            1.5025849017532653,
            0.6241970434928799,
            0.2564358593418201,
            0.1,
            1.4368922082735471,
            1.885304276097536,
            0.4058062894491581,
            1.0,
        ];
        Self {
            anchors: vec![
                (ymd(1999, 1, 1), 0.031),
                (ymd(1999, 6, 4), 0.005943296793795422),
                (ymd(2000, 10, 6), 0.02245364203466197),
                (ymd(2001, 12, 7), 0.01815026644405382),
                (ymd(2002, 6, 7), 0.03279243746987731),
                (ymd(2003, 6, 6), 0.027046240251070146),
                (ymd(2004, 12, 24), 0.02200988811919226),
                (ymd(2005, 9, 2), 0.021107370547601575),
                (ymd(2006, 12, 22), 0.03676632217053357),
                (ymd(2007, 10, 5), 0.03853924718030737),
                (ymd(2008, 10, 10), 0.029264120652417423),
                (ymd(2008, 12, 19), 0.020323656719163842),
                (ymd(2009, 6, 5), 0.00873221724976435),
                (ymd(2010, 3, 5), 0.008227632218684848),
                (ymd(2010, 12, 17), 0.02221899627737979),
                (ymd(2011, 7, 8), 0.018),
                (ymd(2011, 12, 9), 0.016),
                (ymd(2012, 6, 8), 0.0095),
                (ymd(2012, 12, 14), 0.002),
            ],
            cycle_k: 0.02900588988200187,
            cycle_sigma: 0.04228131257911911,
            vol_segments: yearly
                .iter()
                .enumerate()
                .map(|(i, m)| (ymd(1999, 1, 1) + Duration::weeks(52 * i as i64), *m))
                .collect(),
            pin_width: 6,
            seed: 800,
        }
    }
}

/// Weekly Fridays spanning the fixture.
pub fn fixture_dates() -> Vec<NaiveDate> {
    let (start, end) = (ymd(1999, 1, 1), ymd(2012, 12, 14));
    let weeks = (end - start).num_weeks();
    (0..=weeks).map(|w| start + Duration::weeks(w)).collect()
}

fn log_trend(anchors: &[(NaiveDate, f64)], d: NaiveDate) -> f64 {
    let first = anchors[0];
    if d <= first.0 {
        return first.1.ln();
    }
    for w in anchors.windows(2) {
        let ((d0, r0), (d1, r1)) = (w[0], w[1]);
        if d <= d1 {
            let f = (d - d0).num_days() as f64 / (d1 - d0).num_days() as f64;
            return r0.ln() + f * (r1.ln() - r0.ln());
        }
    }
    anchors[anchors.len() - 1].1.ln()
}

fn vol_at(segments: &[(NaiveDate, f64)], d: NaiveDate) -> f64 {
    segments.iter().rev().find(|(from, _)| *from <= d).map_or(1.0, |s| s.1)
}

pub fn generate(knobs: &FixtureKnobs) -> Result<RateSeries> {
    let dates = fixture_dates();
    let mut r = rng::stream_rng(rng::derive_seed(knobs.seed, &[0x4658]), 0);
    let decay = (-knobs.cycle_k).exp();
    let step_sd = knobs.cycle_sigma * ((1.0 - decay * decay) / (2.0 * knobs.cycle_k)).sqrt();
    let mut cycle = 0.0;
    let mut logs: Vec<f64> = dates
        .iter()
        .map(|&d| {
            let z: f64 = StandardNormal.sample(&mut r);
            cycle = cycle * decay + vol_at(&knobs.vol_segments, d) * step_sd * z;
            log_trend(&knobs.anchors, d) + cycle
        })
        .collect();
    let w = knobs.pin_width.max(1) as f64;
    for row in reference_rows() {
        let p = dates.partition_point(|d| *d < row.date);
        let shift = (row.realized / 100.0).ln() - logs[p];
        for (i, v) in logs.iter_mut().enumerate() {
            let tent = 1.0 - (i as f64 - p as f64).abs() / w;
            if tent > 0.0 {
                *v += shift * tent;
            }
        }
    }
    let mut values: Vec<f64> = logs.iter().map(|l| l.exp()).collect();
    for row in reference_rows() {
        let p = dates.partition_point(|d| *d < row.date);
        values[p] = row.realized / 100.0;
    }
    RateSeries::new(dates, values, Units::default().dt())
}

/// The bundled series shipped in `data/euribor_fixture.csv`.
pub fn euribor_fixture() -> RateSeries {
    RateSeries::read_csv(BUNDLED.as_bytes(), Units::default().dt()).expect("bundled fixture parses")
}

pub fn bundled_csv() -> &'static str {
    BUNDLED
}
