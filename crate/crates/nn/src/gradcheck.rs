//! Finite-difference verification of reverse-mode gradients.

use crate::error::{NnError, Result};

/// Largest per-coordinate discrepancy between the analytic gradient returned
/// by `f` and central differences of its value:
/// `|g_ad − g_fd| / max(1, |g_ad|, |g_fd|)`.
///
/// `f` maps a parameter vector to `(value, gradient)`.
pub fn grad_check<F>(f: F, params: &[f64], eps: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if !(1e-6..=1e-3).contains(&eps) {
        return Err(NnError::Invalid(format!("eps {eps} outside [1e-6, 1e-3]")));
    }
    let (value, analytic) = f(params)?;
    if !value.is_finite() {
        return Err(NnError::NonFinite(format!("function value {value} at the base point")));
    }
    if analytic.len() != params.len() {
        return Err(NnError::Shape { op: "grad_check", left: (params.len(), 1), right: (analytic.len(), 1) });
    }
    let mut x = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + eps;
        let up = f(&x)?.0;
        x[i] = orig - eps;
        let down = f(&x)?.0;
        x[i] = orig;
        let fd = (up - down) / (2.0 * eps);
        let ad = analytic[i];
        if !fd.is_finite() || !ad.is_finite() {
            return Err(NnError::NonFinite(format!("coordinate {i}: analytic {ad}, finite difference {fd}")));
        }
        let err = (ad - fd).abs() / 1f64.max(ad.abs()).max(fd.abs());
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_is_nearly_exact() {
        let f = |x: &[f64]| Ok((x.iter().map(|v| v * v).sum(), x.iter().map(|v| 2.0 * v).collect()));
        let err = grad_check(f, &[0.3, -1.7, 2.5, 10.0], 1e-4).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn constant_function_has_zero_gradients() {
        let f = |x: &[f64]| Ok((4.0, vec![0.0; x.len()]));
        assert_eq!(grad_check(f, &[1.0, 2.0], 1e-5).unwrap(), 0.0);
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let f = |x: &[f64]| Ok((x[0] * x[0], vec![x[0]]));
        assert!(grad_check(f, &[3.0], 1e-5).unwrap() > 0.4);
    }

    #[test]
    fn bad_eps_and_non_finite_values_error() {
        let f = |x: &[f64]| Ok((x[0], vec![1.0]));
        assert!(grad_check(f, &[1.0], 1e-2).is_err());
        let g = |x: &[f64]| Ok((x[0].ln(), vec![1.0 / x[0]]));
        assert!(matches!(grad_check(g, &[0.0], 1e-5), Err(NnError::NonFinite(_))));
    }
}
