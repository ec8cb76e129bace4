//! Small-sample reliability of the Anderson-Darling measurement.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const DEFAULT_COV_THRESHOLD: f64 = 0.10;

/// Below this size the normal approximation behind the coefficient of
/// variation is itself unreliable.
pub const CLT_CAVEAT_BELOW: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovReport {
    pub n: usize,
    pub cov: f64,
    pub threshold: f64,
    pub warn: bool,
    pub caveat: Option<String>,
}

/// Coefficient of variation `sqrt(n + 8/3) / (n + 1)` of the empirical CDF
/// estimate.
pub fn coefficient_of_variation(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(invalid("n", "sample size must be >= 1"));
    }
    let nf = n as f64;
    Ok((nf + 8.0 / 3.0).sqrt() / (nf + 1.0))
}

pub fn cov_warning(n: usize, threshold: f64) -> Result<CovReport> {
    if !(threshold > 0.0) {
        return Err(invalid("threshold", format!("must be > 0, got {threshold}")));
    }
    let cov = coefficient_of_variation(n)?;
    let caveat = (n < CLT_CAVEAT_BELOW)
        .then(|| format!("n={n} is below {CLT_CAVEAT_BELOW}; the normal approximation behind the CoV is not reliable"));
    Ok(CovReport {
        n,
        cov,
        threshold,
        warn: cov > threshold,
        caveat,
    })
}

pub fn cov_curve(n_min: usize, n_max: usize) -> Result<Vec<(usize, f64)>> {
    if n_min == 0 || n_min > n_max {
        return Err(invalid(
            "range",
            format!("need 1 <= n_min <= n_max, got ({n_min}, {n_max})"),
        ));
    }
    (n_min..=n_max)
        .map(|n| coefficient_of_variation(n).map(|c| (n, c)))
        .collect()
}

/// Smallest `n` whose coefficient of variation is at or below `threshold`.
pub fn crossing_size(threshold: f64) -> Result<usize> {
    if !(threshold > 0.0) {
        return Err(invalid("threshold", format!("must be > 0, got {threshold}")));
    }
    let mut n = 1;
    while coefficient_of_variation(n)? > threshold {
        n += 1;
    }
    Ok(n)
}

pub fn write_cov_csv<W: Write>(curve: &[(usize, f64)], mut w: W) -> Result<()> {
    writeln!(w, "n,cov")?;
    for (n, c) in curve {
        writeln!(w, "{n},{c}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn closed_form_values() {
        assert_relative_eq!(coefficient_of_variation(1).unwrap(), (11.0f64 / 3.0).sqrt() / 2.0);
        assert_relative_eq!(coefficient_of_variation(1).unwrap(), 0.957_427, epsilon = 1e-6);
        assert_relative_eq!(coefficient_of_variation(50).unwrap(), 0.142_298, epsilon = 1e-6);
        assert_relative_eq!(coefficient_of_variation(100).unwrap(), 0.100_321, epsilon = 1e-6);
        assert_relative_eq!(coefficient_of_variation(101).unwrap(), 0.099_820, epsilon = 1e-6);
        assert!(coefficient_of_variation(0).is_err());
        assert!(coefficient_of_variation(1_000_000_000).unwrap() < 1e-4);
    }

    #[test]
    fn warnings() {
        let r = cov_warning(5, 0.10).unwrap();
        assert!(r.warn);
        assert_relative_eq!(r.cov, 0.461_479, epsilon = 1e-6);
        assert!(r.caveat.is_some());
        let r = cov_warning(101, 0.10).unwrap();
        assert!(!r.warn && r.caveat.is_none());
        assert!(!cov_warning(5, 1.0).unwrap().warn);
        assert!(cov_warning(5, 0.0).is_err());
    }

    #[test]
    fn curve_is_strictly_decreasing() {
        let c = cov_curve(1, 200).unwrap();
        assert_eq!(c.len(), 200);
        assert!(c.windows(2).all(|w| w[1].1 < w[0].1));
        assert_eq!(cov_curve(1, 1).unwrap().len(), 1);
        assert!(cov_curve(3, 2).is_err());
        assert_eq!(crossing_size(0.10).unwrap(), 101);
    }
}
