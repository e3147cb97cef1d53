//! Central finite differences, used to cross-check analytic gradients.

use super::Scalar;

/// Central-difference gradient of `f` at `x` with step `h` (1e-3 is a good
/// default for well-scaled inputs).
///
/// Purely a verification utility: every analytic input-gradient in the
/// engine is tested against this independent estimate.
pub fn finite_diff_gradient<T: Scalar, F>(f: F, x: &[T], h: T) -> Vec<T>
where
    F: Fn(&[T]) -> T,
{
    let mut probe = x.to_vec();
    let two_h = h + h;
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / two_h
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::norm_sq;

    #[test]
    fn gradient_of_squared_norm() {
        // d/dx ||x||^2 = 2x.
        let x = [1.0f64, 0.0, -2.0];
        let g = finite_diff_gradient(|v| norm_sq(v), &x, 1e-5);
        for (gi, xi) in g.iter().zip(&x) {
            assert!((gi - 2.0 * xi).abs() < 1e-8, "{gi} vs {}", 2.0 * xi);
        }
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let x = [0.3f64, 0.7];
        let g = finite_diff_gradient(|_| 5.0, &x, 1e-3);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_of_linear_function() {
        let a = [2.0f64, -1.0, 0.5];
        let x = [0.1f64, 0.2, 0.3];
        let g = finite_diff_gradient(
            |v| v.iter().zip(&a).map(|(vi, ai)| vi * ai).sum::<f64>(),
            &x,
            1e-4,
        );
        for (gi, ai) in g.iter().zip(&a) {
            assert!((gi - ai).abs() < 1e-9);
        }
    }
}
