//! Normal-theory tests: two-sided difference test and two one-sided tests (TOST)
//! for equivalence of two jumps.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{RdError, Result};

fn standard_normal() -> Normal {
    Normal::standard()
}

/// `Phi^{-1}(p)`.
pub fn normal_quantile(p: f64) -> f64 {
    standard_normal().inverse_cdf(p)
}

/// `Phi(x)`.
pub fn normal_cdf(x: f64) -> f64 {
    standard_normal().cdf(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DifferenceTest {
    pub difference: f64,
    pub t_stat: f64,
    pub p_value: f64,
}

/// Two-sided z test of `H0: d2 - d1 = 0`.
pub fn difference_test(d1: f64, d2: f64, se_diff: f64) -> Result<DifferenceTest> {
    check_se(se_diff)?;
    let difference = d2 - d1;
    let t_stat = difference / se_diff;
    let p_value = 2.0 * normal_cdf(-t_stat.abs());
    Ok(DifferenceTest {
        difference,
        t_stat,
        p_value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TostResult {
    pub difference: f64,
    pub delta: f64,
    pub alpha: f64,
    /// `(diff + delta) / se`
    pub t_lower: f64,
    /// `(diff - delta) / se`
    pub t_upper: f64,
    pub critical: f64,
    /// True when both one-sided tests reject `|diff| > delta`, i.e. equivalence is concluded.
    pub reject_equivalence_null: bool,
    /// Smallest margin at which equivalence would be concluded.
    pub minimal_delta: f64,
}

/// Equivalence test of `H0: |d2 - d1| > delta` by two one-sided tests at level `alpha` each.
pub fn tost_equivalence(d1: f64, d2: f64, se_diff: f64, delta: f64, alpha: f64) -> Result<TostResult> {
    check_se(se_diff)?;
    if !(delta >= 0.0) {
        return Err(RdError::Config(format!(
            "equivalence margin must be nonnegative, got {delta}"
        )));
    }
    check_alpha(alpha)?;
    let difference = d2 - d1;
    let critical = normal_quantile(1.0 - alpha);
    let t_upper = (difference - delta) / se_diff;
    let t_lower = (difference + delta) / se_diff;
    let minimal_delta = difference.abs() + critical * se_diff;
    // Compared on the margin scale so the boundary case delta == minimal_delta
    // rejects regardless of rounding in the t statistics.
    let reject_equivalence_null = delta >= minimal_delta;
    Ok(TostResult {
        difference,
        delta,
        alpha,
        t_lower,
        t_upper,
        critical,
        reject_equivalence_null,
        minimal_delta,
    })
}

fn check_se(se: f64) -> Result<()> {
    if se > 0.0 && se.is_finite() {
        Ok(())
    } else {
        Err(RdError::NonPositiveSe(se))
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(RdError::Config(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quantiles() {
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-9);
        assert!((normal_quantile(0.9) - 1.2815515655446004).abs() < 1e-9);
    }

    #[test]
    fn difference_tests() {
        let t = difference_test(2.0, 2.0, 1.0).unwrap();
        assert_eq!(t.t_stat, 0.0);
        assert!((t.p_value - 1.0).abs() < 1e-12);
        let t = difference_test(0.0, 1.96, 1.0).unwrap();
        assert!((t.p_value - 0.05).abs() < 1e-3);
        assert_eq!(difference_test(0.0, 1.0, 0.0), Err(RdError::NonPositiveSe(0.0)));
    }

    #[test]
    fn tost_examples() {
        let r = tost_equivalence(0.0, 1.0, 1.0, 3.0, 0.1).unwrap();
        assert_eq!(r.t_upper, -2.0);
        assert_eq!(r.t_lower, 4.0);
        assert!(r.t_upper < -r.critical && r.t_lower > r.critical);
        assert!(r.reject_equivalence_null);

        let r = tost_equivalence(0.0, 1.0, 1.0, 2.0, 0.1).unwrap();
        assert_eq!(r.t_upper, -1.0);
        assert!(!r.reject_equivalence_null);

        assert!(tost_equivalence(0.0, 1.0, -1.0, 2.0, 0.1).is_err());
    }

    #[test]
    fn minimal_delta_boundary() {
        let r = tost_equivalence(1.3, -0.4, 0.7, 0.0, 0.05).unwrap();
        let at = tost_equivalence(1.3, -0.4, 0.7, r.minimal_delta, 0.05).unwrap();
        assert!(at.reject_equivalence_null);
        let scale = r.minimal_delta;
        let below = tost_equivalence(1.3, -0.4, 0.7, r.minimal_delta - 1e-9 * scale, 0.05).unwrap();
        assert!(!below.reject_equivalence_null);
    }

    proptest! {
        #[test]
        fn decision_matches_one_sided_tests(d in -10.0f64..10.0, se in 0.1f64..5.0, delta in 0.0f64..30.0) {
            let r = tost_equivalence(0.0, d, se, delta, 0.1).unwrap();
            // away from the boundary, the margin-scale rule agrees with the t statistics
            prop_assume!((delta - r.minimal_delta).abs() > 1e-9 * (1.0 + delta));
            let by_t = r.t_upper < -r.critical && r.t_lower > r.critical;
            prop_assert_eq!(by_t, r.reject_equivalence_null);
        }
    }
}
