//! Symmetric eigendecomposition (cyclic Jacobi) and a PCA error oracle.
//!
//! Self-contained: the verification suite compares learned weights against
//! principal subspaces, and depending on an external solver for that would
//! drag in exactly the kind of dependency the engine is trying to avoid.
//! Iteration happens in `f64` regardless of the input scalar.

use super::{Mat, Scalar};
use crate::error::{Error, Result};

/// One eigenvalue with its unit-norm eigenvector.
#[derive(Debug, Clone)]
pub struct EigenPair<T> {
    pub value: T,
    pub vector: Vec<T>,
}

const MAX_SWEEPS: usize = 64;

/// Top `m` eigenpairs of a symmetric matrix, eigenvalues descending.
///
/// Rejects non-square input, `m` larger than the dimension, and matrices
/// whose asymmetry exceeds `1e-6` relative to the largest entry. Ties in
/// eigenvalue order are broken by original diagonal position, so results
/// are deterministic.
pub fn top_eigenpairs<T: Scalar>(c: &Mat<T>, m: usize) -> Result<Vec<EigenPair<T>>> {
    let n = c.rows();
    if n == 0 {
        return Err(Error::EmptyInput("top_eigenpairs"));
    }
    if c.cols() != n {
        return Err(Error::DimensionMismatch {
            op: "top_eigenpairs",
            lhs_rows: n,
            lhs_cols: c.cols(),
            rhs_rows: n,
            rhs_cols: n,
        });
    }
    if m > n {
        return Err(Error::NotEnough {
            context: "top_eigenpairs",
            requested: m,
            available: n,
        });
    }

    let mut a = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = c[(i, j)].as64();
        }
    }

    let scale = a.iter().fold(0.0f64, |s, &v| s.max(v.abs()));
    let mut max_asym = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            max_asym = max_asym.max((a[i * n + j] - a[j * n + i]).abs());
        }
    }
    if max_asym > 1e-6 * scale.max(1.0) {
        return Err(Error::NotSymmetric {
            max_asymmetry: max_asym,
        });
    }
    // Work on the symmetrized matrix so tiny asymmetries cannot bias rotations.
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = s;
            a[j * n + i] = s;
        }
    }

    let mut v = vec![0.0f64; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let frob: f64 = a.iter().map(|&x| x * x).sum::<f64>().sqrt();
    let target = 1e-13 * frob.max(f64::MIN_POSITIVE);
    let mut converged = false;
    for _sweep in 0..MAX_SWEEPS {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if (2.0 * off).sqrt() <= target {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                // Stable rotation angle (Numerical Recipes formulation).
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let cos = 1.0 / (t * t + 1.0).sqrt();
                let sin = t * cos;

                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = cos * akp - sin * akq;
                    a[k * n + q] = sin * akp + cos * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = cos * apk - sin * aqk;
                    a[q * n + k] = sin * apk + cos * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = cos * vkp - sin * vkq;
                    v[k * n + q] = sin * vkp + cos * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence { sweeps: MAX_SWEEPS });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[j * n + j]
            .partial_cmp(&a[i * n + i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });

    Ok(order
        .into_iter()
        .take(m)
        .map(|i| EigenPair {
            value: T::from64(a[i * n + i]),
            vector: (0..n).map(|k| T::from64(v[k * n + i])).collect(),
        })
        .collect())
}

/// Mean squared reconstruction error of the best rank-`m` linear projection.
///
/// Computes the top-`m` eigenvectors of the uncentered second moment of
/// `samples` (rows) and returns the average of `||x - P x||^2` where `P`
/// projects onto their span. This is the floor any `m`-dimensional linear
/// code can reach, used as the reference the learning rule is compared to.
pub fn pca_reconstruction_error<T: Scalar>(samples: &Mat<T>, m: usize) -> Result<T> {
    if samples.rows() == 0 {
        return Err(Error::EmptyInput("pca_reconstruction_error"));
    }
    let c = super::covariance(samples)?;
    let pairs = top_eigenpairs(&c, m)?;
    let basis: Vec<Vec<f64>> = pairs
        .iter()
        .map(|p| p.vector.iter().map(|x| x.as64()).collect())
        .collect();

    let n = samples.cols();
    let mut total = 0.0f64;
    let mut x = vec![0.0f64; n];
    for s in 0..samples.rows() {
        for (xi, v) in x.iter_mut().zip(samples.row(s)) {
            *xi = v.as64();
        }
        let mut resid_sq = x.iter().map(|v| v * v).sum::<f64>();
        for b in &basis {
            let proj: f64 = b.iter().zip(&x).map(|(bi, xi)| bi * xi).sum();
            resid_sq -= proj * proj;
        }
        total += resid_sq.max(0.0);
    }
    Ok(T::from64(total / samples.rows() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{dot, norm_sq, SeededRng};

    #[test]
    fn diagonal_matrix_eigenpairs() {
        let c = Mat::from_rows(&[
            vec![3.0f64, 0.0, 0.0],
            vec![0.0, 2.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let pairs = top_eigenpairs(&c, 2).unwrap();
        assert!((pairs[0].value - 3.0).abs() < 1e-12);
        assert!((pairs[1].value - 2.0).abs() < 1e-12);
        assert!(pairs[0].vector[0].abs() > 1.0 - 1e-12);
        assert!(pairs[1].vector[1].abs() > 1.0 - 1e-12);
    }

    #[test]
    fn rank_one_matrix() {
        // v v^T has eigenvalue ||v||^2 with eigenvector v / ||v||.
        let v = [1.0f64, 2.0, 2.0]; // norm 3
        let mut c = Mat::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                c[(i, j)] = v[i] * v[j];
            }
        }
        let pairs = top_eigenpairs(&c, 1).unwrap();
        assert!((pairs[0].value - 9.0).abs() < 1e-10);
        let cos = dot(&pairs[0].vector, &[1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0]).abs();
        assert!(cos > 1.0 - 1e-10, "cos {cos}");
    }

    #[test]
    fn two_by_two_matches_quadratic_formula() {
        // Closed-form eigenvalues of [[a,b],[b,c]].
        let (a, b, c) = (2.0f64, 0.7, 1.1);
        let mat = Mat::from_rows(&[vec![a, b], vec![b, c]]).unwrap();
        let tr = a + c;
        let det = a * c - b * b;
        let disc = (tr * tr / 4.0 - det).sqrt();
        let expect = [tr / 2.0 + disc, tr / 2.0 - disc];
        let pairs = top_eigenpairs(&mat, 2).unwrap();
        assert!((pairs[0].value - expect[0]).abs() < 1e-12);
        assert!((pairs[1].value - expect[1]).abs() < 1e-12);
    }

    #[test]
    fn reconstruction_and_orthonormality_on_random_spd() {
        let mut rng = SeededRng::new(21);
        let g = rng.gaussian_mat::<f64>(6, 6, 1.0);
        let c = g.matmul_at(&g).unwrap(); // G^T G: symmetric PSD
        let pairs = top_eigenpairs(&c, 6).unwrap();

        // Sum of lambda v v^T rebuilds the matrix.
        let mut rebuilt = Mat::<f64>::zeros(6, 6);
        for p in &pairs {
            for i in 0..6 {
                for j in 0..6 {
                    rebuilt[(i, j)] = rebuilt[(i, j)] + p.value * p.vector[i] * p.vector[j];
                }
            }
        }
        let err = rebuilt.sub(&c).unwrap().frobenius_norm() / c.frobenius_norm();
        assert!(err < 1e-10, "relative reconstruction error {err}");

        // Pairwise orthonormal vectors.
        for (i, pi) in pairs.iter().enumerate() {
            assert!((norm_sq(&pi.vector) - 1.0).abs() < 1e-10);
            for pj in pairs.iter().skip(i + 1) {
                assert!(dot(&pi.vector, &pj.vector).abs() < 1e-10);
            }
        }

        // Residual ||C v - lambda v|| small for each pair.
        for p in &pairs {
            let mut resid = 0.0f64;
            for i in 0..6 {
                let mut cv = 0.0;
                for j in 0..6 {
                    cv += c[(i, j)] * p.vector[j];
                }
                let r = cv - p.value * p.vector[i];
                resid += r * r;
            }
            assert!(resid.sqrt() <= 1e-4 * p.value.abs() + 1e-8);
        }
    }

    #[test]
    fn rejects_asymmetric_input() {
        let c = Mat::from_rows(&[vec![1.0f64, 0.5], vec![0.1, 1.0]]).unwrap();
        assert!(matches!(
            top_eigenpairs(&c, 1),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn rejects_m_larger_than_dim() {
        let c = Mat::<f64>::identity(3);
        assert!(top_eigenpairs(&c, 4).is_err());
    }

    #[test]
    fn works_on_f32_input() {
        let mut rng = SeededRng::new(33);
        let g = rng.gaussian_mat::<f32>(5, 5, 1.0);
        let c = g.matmul_at(&g).unwrap();
        let pairs = top_eigenpairs(&c, 5).unwrap();
        for w in pairs.windows(2) {
            assert!(w[0].value >= w[1].value);
        }
    }

    #[test]
    fn pca_error_zero_when_m_equals_dim() {
        let mut rng = SeededRng::new(40);
        let x = rng.gaussian_mat::<f64>(200, 4, 1.0);
        let err = pca_reconstruction_error(&x, 4).unwrap();
        assert!(err < 1e-10, "err {err}");
    }

    #[test]
    fn pca_error_zero_for_one_dimensional_data() {
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![(i as f64 - 25.0) * 0.1, 0.0, 0.0])
            .collect();
        let x = Mat::from_rows(&rows).unwrap();
        assert!(pca_reconstruction_error(&x, 1).unwrap() < 1e-12);
    }

    #[test]
    fn pca_error_matches_axis_variance_oracle() {
        // Axis-aligned anisotropic Gaussian: the m=1 error is the energy on
        // the non-dominant axes, measurable directly as mean square sums.
        let mut rng = SeededRng::new(55);
        let mut rows = Vec::new();
        for _ in 0..4000 {
            rows.push(vec![
                rng.gaussian::<f64>(2.0),
                rng.gaussian::<f64>(1.0),
                rng.gaussian::<f64>(0.5),
            ]);
        }
        let x = Mat::from_rows(&rows).unwrap();
        let err = pca_reconstruction_error(&x, 1).unwrap();
        let tail: f64 = rows
            .iter()
            .map(|r| r[1] * r[1] + r[2] * r[2])
            .sum::<f64>()
            / rows.len() as f64;
        // The learned axis differs slightly from e1, so allow a small band.
        assert!(
            (err - tail).abs() < 0.05 * tail,
            "err {err} vs axis-tail oracle {tail}"
        );
    }

    #[test]
    fn pca_error_non_increasing_in_m() {
        let mut rng = SeededRng::new(60);
        let x = rng.gaussian_mat::<f64>(300, 6, 1.0);
        let mut prev = f64::INFINITY;
        for m in 0..=6 {
            let e = pca_reconstruction_error(&x, m).unwrap();
            assert!(e <= prev + 1e-10, "m={m}: {e} > {prev}");
            prev = e;
        }
    }
}
