//! Paired two-sided t-test.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    /// Two-sided p-value. Zero when the differences are constant and nonzero.
    pub p: f64,
    pub df: usize,
    pub mean_diff: f64,
}

/// Paired t-test on `a[i] − b[i]`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(BenchError::Invalid(format!("paired samples differ in length: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(BenchError::Degenerate("need at least two pairs".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().any(|x| !x.is_finite()) {
        return Err(BenchError::Invalid("non-finite difference".into()));
    }
    if d.iter().all(|&x| x == 0.0) {
        return Err(BenchError::Degenerate("all differences are zero".into()));
    }
    let n = d.len() as f64;
    let df = d.len() - 1;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        let t = if mean > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
        return Ok(TTest { t, p: 0.0, df, mean_diff: mean });
    }
    let t = mean / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| BenchError::Invalid(e.to_string()))?;
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(TTest { t, p, df, mean_diff: mean })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples_are_degenerate() {
        assert!(matches!(paired_t_test(&[1.0, 2.0], &[1.0, 2.0]), Err(BenchError::Degenerate(_))));
        assert!(paired_t_test(&[1.0], &[0.0]).is_err());
        assert!(paired_t_test(&[1.0, 2.0], &[0.0]).is_err());
    }

    #[test]
    fn constant_shift_reports_zero_p() {
        let r = paired_t_test(&[2.0, 3.0, 4.0, 5.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(r.p, 0.0);
        assert_eq!(r.t, f64::INFINITY);
        assert_eq!(r.mean_diff, 1.0);
    }

    #[test]
    fn alternating_differences_give_unit_p() {
        let r = paired_t_test(&[1.0, -1.0, 1.0, -1.0], &[0.0; 4]).unwrap();
        assert_eq!(r.t, 0.0);
        assert!((r.p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_reference_values() {
        // d = [1, 2, 3, 4, 6]: mean 3.2, sd sqrt(3.7), t = 3.2·sqrt(5)/sqrt(3.7), df 4.
        let r = paired_t_test(&[1.0, 2.0, 3.0, 4.0, 6.0], &[0.0; 5]).unwrap();
        assert!((r.t - 3.2 * 5f64.sqrt() / 3.7f64.sqrt()).abs() < 1e-12);
        // Two-sided tail of t(4) at that point, from an independent implementation.
        assert!((r.p - 0.020475874420910686).abs() < 1e-8);
        // With 1 degree of freedom the distribution is Cauchy: p = 1 − 2·atan(|t|)/π.
        let r = paired_t_test(&[3.0, 1.0], &[0.0, 0.0]).unwrap();
        assert_eq!(r.t, 2.0);
        let want = 1.0 - 2.0 * 2.0f64.atan() / std::f64::consts::PI;
        assert!((r.p - want).abs() < 1e-10, "{} vs {want}", r.p);
    }
}
