//! Goodness-of-fit statistics on probability-integral-transform samples.
//!
//! All statistics take a [`ProbSample`]: probabilities strictly inside
//! `(0, 1)`, sorted ascending. The mapping from a realized value to its
//! forecast quantile lives in [`pit_map`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature;

/// The four uniformity tests supported throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    /// Anderson-Darling.
    Ad,
    /// Asymmetric Anderson-Darling with exponent 2.
    AdAsym,
    /// Kolmogorov-Smirnov.
    Ks,
    /// Cramer-von Mises.
    Cm,
}

impl TestKind {
    pub const ALL: [TestKind; 4] = [TestKind::Ad, TestKind::AdAsym, TestKind::Ks, TestKind::Cm];

    pub fn name(self) -> &'static str {
        match self {
            TestKind::Ad => "ad",
            TestKind::AdAsym => "ad-asym",
            TestKind::Ks => "ks",
            TestKind::Cm => "cm",
        }
    }

    pub fn tag(self) -> u64 {
        match self {
            TestKind::Ad => 1,
            TestKind::AdAsym => 2,
            TestKind::Ks => 3,
            TestKind::Cm => 4,
        }
    }

    /// Evaluates this test's statistic on `u`.
    pub fn statistic(self, u: &ProbSample) -> GofStatistic {
        match self {
            TestKind::Ad => ad_statistic(u),
            TestKind::AdAsym => ad_asym_statistic(u),
            TestKind::Ks => ks_statistic(u),
            TestKind::Cm => cm_statistic(u),
        }
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "ad" | "ad-ss" | "ss" => Ok(TestKind::Ad),
            "ad-asym" | "adasym" | "asym" => Ok(TestKind::AdAsym),
            "ks" => Ok(TestKind::Ks),
            "cm" | "cvm" => Ok(TestKind::Cm),
            other => Err(invalid(
                "test",
                format!("unknown test `{other}` (expected ad, ad-asym, ks, cm)"),
            )),
        }
    }
}

/// Sorted probabilities in the open unit interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbSample {
    values: Vec<f64>,
}

impl ProbSample {
    /// Validates and sorts `values`. Exact zeros and ones are rejected:
    /// they cannot come out of [`pit_map`] and make the logarithmic
    /// statistics singular.
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySample);
        }
        for (index, &value) in values.iter().enumerate() {
            if value.is_nan() {
                return Err(Error::NonFinite { index });
            }
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::ProbabilityOutOfRange { index, value });
            }
            if value == 0.0 || value == 1.0 {
                return Err(Error::DegenerateProbability { index, value });
            }
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }
}

/// A computed test statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GofStatistic {
    pub test: TestKind,
    pub value: f64,
    pub n: usize,
}

/// Forecast scenarios for one backtesting date, kept sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSet {
    sorted: Vec<f64>,
}

impl ForecastSet {
    pub fn new(mut scenarios: Vec<f64>) -> Result<Self> {
        if scenarios.is_empty() {
            return Err(Error::EmptyForecastSet);
        }
        if let Some(index) = scenarios.iter().position(|x| x.is_nan()) {
            return Err(Error::NonFinite { index });
        }
        scenarios.sort_by(f64::total_cmp);
        Ok(Self { sorted: scenarios })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }

    pub fn mean(&self) -> f64 {
        self.sorted.iter().sum::<f64>() / self.sorted.len() as f64
    }
}

/// Maps a realization to its p-value within the forecast scenarios.
///
/// With `i` the number of scenarios strictly below `realized`, the result is
/// `(i + 1) / (N + 2)`. This covers both tails (`1/(N+2)` below the minimum,
/// `(N+1)/(N+2)` above the maximum) and breaks ties downward.
pub fn pit_map(realized: f64, forecasts: &ForecastSet) -> f64 {
    let below = forecasts.sorted.partition_point(|&x| x < realized);
    (below + 1) as f64 / (forecasts.len() + 2) as f64
}

/// Convenience wrapper building the [`ForecastSet`] on the fly.
pub fn pit_map_slice(realized: f64, scenarios: &[f64]) -> Result<f64> {
    Ok(pit_map(realized, &ForecastSet::new(scenarios.to_vec())?))
}

/// Anderson-Darling `W^2` in sum form.
pub fn ad_statistic(u: &ProbSample) -> GofStatistic {
    let v = &u.values;
    let n = v.len();
    let nf = n as f64;
    let s: f64 = (1..=n)
        .map(|k| {
            let w = (2 * k - 1) as f64 / nf;
            w * (v[k - 1].ln() + (1.0 - v[n - k]).ln())
        })
        .sum();
    GofStatistic {
        test: TestKind::Ad,
        value: -nf - s,
        n,
    }
}

/// Asymmetric Anderson-Darling statistic (exponent 2), closed form.
///
/// Integrates `(F_n(u) - u)^4 / (u (1 - u) / n)^2` over `[0, 1]`. The
/// segments `[u_{k-1}, u_k]` for `k = 1..n` use the antiderivative
/// coefficients `gamma`, `alpha_1..alpha_4`; the final segment `[u_n, 1]`,
/// where the empirical CDF equals one, contributes
/// `1/u_n + 2 ln u_n - u_n`. The whole sum carries the `n^2` weight.
pub fn ad_asym_statistic(u: &ProbSample) -> GofStatistic {
    let v = &u.values;
    let n = v.len();
    let nf = n as f64;
    let n4 = nf.powi(4);
    let un = v[n - 1];
    let c = (nf - 1.0) / nf;

    let gamma = un - (c - 1.0).powi(4) / (un - 1.0) - (c - 1.0).powi(3) * (2.0 + 2.0 * c) * (1.0 - un).ln()
        + (2.0 * c - 4.0) * (nf - 1.0).powi(3) * un.ln() / nf.powi(3)
        - (nf - 1.0).powi(4) / (n4 * un)
        - 1.0;

    let interior: f64 = (1..n)
        .map(|k| {
            let kf = k as f64;
            let uk = v[k - 1];
            let a1 = (4.0 * kf.powi(3) - 6.0 * kf * kf + 4.0 * kf - 1.0) / n4;
            let a2 = 2.0
                * (6.0 * nf * kf * kf - 6.0 * nf * kf + 2.0 * nf - 4.0 * kf.powi(3) + 6.0 * kf * kf - 4.0 * kf + 1.0)
                / n4;
            let a3 = ((nf - kf).powi(4) - (nf - kf + 1.0).powi(4)) / n4;
            let a4 = 2.0
                * (2.0 * nf.powi(3) - 6.0 * nf * kf * kf + 6.0 * nf * kf - 2.0 * nf + 4.0 * kf.powi(3) - 6.0 * kf * kf
                    + 4.0 * kf
                    - 1.0)
                / n4;
            a1 / uk + a2 * uk.ln() + a3 / (uk - 1.0) + a4 * (1.0 - uk).ln()
        })
        .sum();

    let upper_tail = 1.0 / un + 2.0 * un.ln() - un;

    GofStatistic {
        test: TestKind::AdAsym,
        value: nf * nf * (gamma + interior + upper_tail),
        n,
    }
}

/// Numerical integral of the generalized statistic for exponent `beta`.
///
/// Serves as an independent check of [`ad_statistic`] (`beta = 1`) and
/// [`ad_asym_statistic`] (`beta = 2`).
pub fn ad_asym_quadrature(u: &ProbSample, beta: f64, abs_tol: f64) -> Result<f64> {
    if !(beta >= 1.0) {
        return Err(invalid("beta", format!("must be >= 1, got {beta}")));
    }
    if !(abs_tol > 0.0) {
        return Err(invalid("abs_tol", format!("must be > 0, got {abs_tol}")));
    }
    let v = &u.values;
    let n = v.len();
    let nf = n as f64;
    let seg_tol = abs_tol / (n + 1) as f64;
    let mut total = 0.0;
    let mut lower = 0.0;
    for k in 0..=n {
        let level = k as f64 / nf;
        let upper = if k < n { v[k] } else { 1.0 };
        total += quadrature::integrate(
            |x| {
                let d = (x - level).abs();
                (d * d).powf(beta) / ((1.0 - x) * x / nf).powf(beta)
            },
            lower,
            upper,
            seg_tol,
        )?;
        lower = upper;
    }
    Ok(total)
}

/// Two-sided Kolmogorov-Smirnov `D_n`.
pub fn ks_statistic(u: &ProbSample) -> GofStatistic {
    let v = &u.values;
    let n = v.len();
    let nf = n as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let k = (i + 1) as f64;
            (k / nf - x).max(x - (k - 1.0) / nf)
        })
        .fold(0.0_f64, f64::max);
    GofStatistic {
        test: TestKind::Ks,
        value: d,
        n,
    }
}

/// Cramer-von Mises `W^2 = 1/(12n) + sum (u_k - (2k-1)/(2n))^2`.
pub fn cm_statistic(u: &ProbSample) -> GofStatistic {
    let v = &u.values;
    let n = v.len();
    let nf = n as f64;
    let s: f64 = v
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let d = x - (2 * i + 1) as f64 / (2.0 * nf);
            d * d
        })
        .sum();
    GofStatistic {
        test: TestKind::Cm,
        value: 1.0 / (12.0 * nf) + s,
        n,
    }
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(1e-6..(1.0 - 1e-6), 2..12)
    }

    proptest! {
        #[test]
        fn statistics_ignore_input_order(mut v in sample(), rot in 0usize..12) {
            let a = ProbSample::new(v.clone()).unwrap();
            let r = rot % v.len();
            v.rotate_left(r);
            v.reverse();
            let b = ProbSample::new(v).unwrap();
            for t in TestKind::ALL {
                prop_assert_eq!(t.statistic(&a).value, t.statistic(&b).value);
            }
        }

        #[test]
        fn closed_forms_match_quadrature(v in sample()) {
            let u = ProbSample::new(v).unwrap();
            let asym = ad_asym_statistic(&u).value;
            let q = ad_asym_quadrature(&u, 2.0, 1e-9 * asym.max(1.0)).unwrap();
            prop_assert!(((asym - q) / q).abs() < 1e-6);
            let q1 = ad_asym_quadrature(&u, 1.0, 1e-9).unwrap();
            prop_assert!((ad_statistic(&u).value - q1).abs() < 1e-6);
        }

        #[test]
        fn statistics_are_nonnegative(v in sample()) {
            let u = ProbSample::new(v).unwrap();
            for t in TestKind::ALL {
                prop_assert!(t.statistic(&u).value >= 0.0);
            }
        }

        #[test]
        fn pit_is_monotone_in_realized(
            s in prop::collection::vec(-5.0..5.0f64, 1..50),
            a in -6.0..6.0f64,
            b in -6.0..6.0f64,
        ) {
            let f = ForecastSet::new(s).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (pl, ph) = (pit_map(lo, &f), pit_map(hi, &f));
            prop_assert!(pl <= ph);
            prop_assert!(pl > 0.0 && ph < 1.0);
        }
    }
}
