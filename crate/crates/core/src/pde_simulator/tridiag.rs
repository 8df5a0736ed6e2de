//! Thomas algorithm for tridiagonal systems.

use crate::ode_core::Scalar;

/// Solve `sub[i] x[i-1] + diag[i] x[i] + sup[i] x[i+1] = rhs[i]` in place.
///
/// `sub[0]` and `sup[n-1]` are ignored. Returns `None` on a vanishing pivot.
pub fn solve_tridiagonal<T: Scalar>(sub: &[T], diag: &[T], sup: &[T], rhs: &mut [T]) -> Option<()> {
    let n = diag.len();
    if n == 0 {
        return Some(());
    }
    let mut c = vec![T::zero(); n];
    let mut beta = diag[0];
    if beta.abs() <= T::min_positive_value() {
        return None;
    }
    rhs[0] = rhs[0] / beta;
    for i in 1..n {
        c[i - 1] = sup[i - 1] / beta;
        beta = diag[i] - sub[i] * c[i - 1];
        if beta.abs() <= T::min_positive_value() || !beta.is_finite() {
            return None;
        }
        rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] = rhs[i] - c[i] * rhs[i + 1];
    }
    Some(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_poisson_stencil() {
        let n = 50;
        let sub = vec![-1.0; n];
        let sup = vec![-1.0; n];
        let diag = vec![2.0; n];
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut rhs: Vec<f64> = (0..n)
            .map(|i| {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                2.0 * x[i] - l - r
            })
            .collect();
        solve_tridiagonal(&sub, &diag, &sup, &mut rhs).unwrap();
        for i in 0..n {
            assert!((rhs[i] - x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn reports_singular_pivot() {
        let mut rhs = vec![1.0f32, 1.0];
        assert!(solve_tridiagonal(&[0.0, 1.0], &[0.0, 1.0], &[1.0, 0.0], &mut rhs).is_none());
    }
}
