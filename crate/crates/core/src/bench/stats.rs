//! Interval estimates and paired tests for campaign results.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::error::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.96;

/// Wilson score interval at 95%: `(estimate, lo, hi)`.
pub fn success_rate_ci(k: u64, n: u64) -> Result<(f64, f64, f64)> {
    if n == 0 || k > n {
        return Err(Error::InvalidParam(format!(
            "success_rate_ci needs 0 <= k <= n and n >= 1, got k={k}, n={n}"
        )));
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = Z95 / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    // the closed form meets the boundary exactly; rounding should not move it
    let lo = if k == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (centre + half).min(1.0) };
    Ok((p, lo, hi))
}

/// One-sided exact sign test: probability of at least `wins` successes
/// among `wins + losses` fair coin flips. Ties are dropped by the caller.
pub fn sign_test_p(wins: u64, losses: u64) -> f64 {
    let n = wins + losses;
    if wins == 0 {
        return 1.0;
    }
    let b = Binomial::new(0.5, n).expect("valid binomial");
    1.0 - b.cdf(wins - 1)
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeStats {
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
}

impl TimeStats {
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        Some(Self {
            mean: s.iter().sum::<f64>() / s.len() as f64,
            median: quantile(&s, 0.5),
            p95: quantile(&s, 0.95),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // independent hand evaluation of the score interval
    fn wilson_oracle(k: f64, n: f64) -> (f64, f64) {
        let z = 1.96f64;
        let p = k / n;
        let a = p + z * z / (2.0 * n);
        let b = z * ((p * (1.0 - p) + z * z / (4.0 * n)) / n).sqrt();
        let c = 1.0 + z * z / n;
        ((a - b) / c, (a + b) / c)
    }

    #[test]
    fn wilson_nine_of_ten() {
        let (p, lo, hi) = success_rate_ci(9, 10).unwrap();
        assert_eq!(p, 0.9);
        assert!(
            (lo - 0.596).abs() < 1e-3 && (hi - 0.982).abs() < 1e-3,
            "{lo} {hi}"
        );
        let (olo, ohi) = wilson_oracle(9.0, 10.0);
        assert!((lo - olo).abs() < 1e-12 && (hi - ohi).abs() < 1e-12);
    }

    #[test]
    fn wilson_extremes() {
        let (_, lo, hi) = success_rate_ci(0, 10).unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi - 0.278).abs() < 1e-3);
        let (_, lo, hi) = success_rate_ci(10, 10).unwrap();
        assert_eq!(hi, 1.0);
        assert!((lo - 0.722).abs() < 1e-3);
    }

    #[test]
    fn wilson_rejects_bad_counts() {
        assert!(success_rate_ci(3, 2).is_err());
        assert!(success_rate_ci(0, 0).is_err());
    }

    #[test]
    fn sign_test_values() {
        assert!((sign_test_p(5, 0) - 1.0 / 32.0).abs() < 1e-12);
        assert!((sign_test_p(6, 1) - 8.0 / 128.0).abs() < 1e-12);
        assert_eq!(sign_test_p(0, 4), 1.0);
    }

    #[test]
    fn quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&s, 0.5), 3.0);
        assert!((quantile(&s, 0.95) - 4.8).abs() < 1e-12);
        let t = TimeStats::from_samples(&[4.0, 1.0, 2.0]).unwrap();
        assert_eq!(t.median, 2.0);
        assert!((t.mean - 7.0 / 3.0).abs() < 1e-15);
        assert!(TimeStats::from_samples(&[]).is_none());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn interval_contains_estimate(n in 1u64..500, frac in 0.0f64..=1.0) {
                let k = (frac * n as f64).round() as u64;
                let (p, lo, hi) = success_rate_ci(k, n).unwrap();
                prop_assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0);
            }
        }
    }
}
