//! The local competitive learning rule and its diagnostics.
//!
//! For a linear layer `y = x w` (weights `w`: fan_in x fan_out), the rule
//! updates every weight from quantities local to its own layer:
//!
//! ```text
//! dw_ij = eta * y_j * (x_i - sum_k y_k w_ik)
//! ```
//!
//! The bracket is the reconstruction residual of the input from the layer's
//! own response, so each unit competes with the others to explain the input.
//! Averaged over data, stable weights satisfy `C w = w (w^T C w)` with
//! `C = E[x x^T]`: the columns converge onto an orthonormal basis of the
//! top principal subspace — without any error signal from above.
//!
//! The batch form used everywhere is `dw = (eta / B) * R^T Y` with
//! `R = X - Y w^T`, which keeps the cost at three GEMMs per batch.

use crate::error::{Error, Result};
use crate::numerics::{top_eigenpairs, Mat, Scalar};

/// One minibatch presented to the rule.
///
/// `y` must be the layer's *linear* response `x * w` to the same `x` under
/// the current weights; updates are computed from the pair, not recomputed,
/// so training can reuse the forward pass it already ran. Debug builds
/// spot-check the consistency.
pub struct UpdateBatch<'a, T> {
    /// Inputs, one sample per row (`B x fan_in`).
    pub x: &'a Mat<T>,
    /// Linear responses to `x` under the current weights (`B x fan_out`).
    pub y: &'a Mat<T>,
    /// Learning rate.
    pub eta: T,
}

/// Convergence diagnostics for one layer against its input statistics.
#[derive(Debug, Clone)]
pub struct StabilityReport<T> {
    /// `||C w - w (w^T C w)||_F`: how far the weights are from a stable
    /// solution of the rule under second moment `C`.
    pub residual: T,
    /// `||w||_F^2`; at a stable solution with full column rank this equals
    /// the number of output units.
    pub weight_norm_sq: T,
    /// Fraction of weight energy outside the top-`m` eigenspace of `C`
    /// (`||w - P w||_F / ||w||_F`, `P` the eigenspace projector).
    pub span_defect: T,
}

fn validate_batch<T: Scalar>(batch: &UpdateBatch<T>, w: &Mat<T>, op: &'static str) -> Result<()> {
    let (x, y) = (batch.x, batch.y);
    if x.rows() == 0 {
        return Err(Error::EmptyInput(op));
    }
    if x.rows() != y.rows() || x.cols() != w.rows() || y.cols() != w.cols() {
        return Err(Error::DimensionMismatch {
            op,
            lhs_rows: x.rows(),
            lhs_cols: x.cols(),
            rhs_rows: y.rows(),
            rhs_cols: y.cols(),
        });
    }
    if !batch.eta.is_finite() || !x.all_finite() || !y.all_finite() || !w.all_finite() {
        return Err(Error::NonFinite { context: op });
    }
    debug_assert!(responses_consistent(batch, w), "{op}: y != x * w");
    Ok(())
}

/// Debug-build spot check that `y` really is `x * w`: verifies a few
/// sampled rows rather than redoing the whole forward pass.
#[allow(dead_code)]
fn responses_consistent<T: Scalar>(batch: &UpdateBatch<T>, w: &Mat<T>) -> bool {
    let b = batch.x.rows();
    let picks = [0, b / 3, (2 * b) / 3, b - 1];
    for &s in picks.iter() {
        let x_row = batch.x.row(s);
        let y_row = batch.y.row(s);
        for j in 0..w.cols() {
            let mut acc = 0.0f64;
            for (i, &xi) in x_row.iter().enumerate() {
                acc += xi.as64() * w[(i, j)].as64();
            }
            let got = y_row[j].as64();
            if (acc - got).abs() > 1e-3 * (acc.abs() + 1.0) {
                return false;
            }
        }
    }
    true
}

/// Batch-averaged competitive update `dw = (eta / B) * R^T Y`,
/// `R = X - Y w^T`.
pub fn competitive_delta<T: Scalar>(batch: &UpdateBatch<T>, w: &Mat<T>) -> Result<Mat<T>> {
    validate_batch(batch, w, "competitive_delta")?;
    let recon = batch.y.matmul_bt(w)?;
    let resid = batch.x.sub(&recon)?;
    let delta = resid.matmul_at(batch.y)?;
    Ok(delta.scale(batch.eta / T::from64(batch.x.rows() as f64)))
}

/// Competitive update with a per-sample weight on each sample's
/// contribution: `dw = (eta / B) * sum_s weight_s * r_s y_s^T`.
///
/// Feedback training uses this to gate how strongly each (input, label)
/// pair trains, without splitting the batch.
pub fn competitive_delta_weighted<T: Scalar>(
    batch: &UpdateBatch<T>,
    w: &Mat<T>,
    weights: &[T],
) -> Result<Mat<T>> {
    validate_batch(batch, w, "competitive_delta_weighted")?;
    if weights.len() != batch.x.rows() {
        return Err(Error::DimensionMismatch {
            op: "competitive_delta_weighted",
            lhs_rows: batch.x.rows(),
            lhs_cols: batch.x.cols(),
            rhs_rows: weights.len(),
            rhs_cols: 1,
        });
    }
    if !crate::numerics::all_finite(weights) {
        return Err(Error::NonFinite {
            context: "competitive_delta_weighted",
        });
    }
    let recon = batch.y.matmul_bt(w)?;
    let resid = batch.x.sub(&recon)?;
    let mut scaled_y = batch.y.clone();
    for (s, &g) in weights.iter().enumerate() {
        for v in scaled_y.row_mut(s) {
            *v = *v * g;
        }
    }
    let delta = resid.matmul_at(&scaled_y)?;
    Ok(delta.scale(batch.eta / T::from64(batch.x.rows() as f64)))
}

/// Reference Oja update `dw_ij = eta * y_j * (x_i - y_j * w_ij)`,
/// batch-averaged.
///
/// Each unit reconstructs the input alone instead of jointly; kept as the
/// classical baseline the competitive rule is contrasted with. For a single
/// output unit the two rules coincide.
pub fn oja_delta<T: Scalar>(batch: &UpdateBatch<T>, w: &Mat<T>) -> Result<Mat<T>> {
    validate_batch(batch, w, "oja_delta")?;
    let xty = batch.x.matmul_at(batch.y)?;
    let mut col_sq = vec![0.0f64; batch.y.cols()];
    for s in 0..batch.y.rows() {
        for (j, &v) in batch.y.row(s).iter().enumerate() {
            col_sq[j] += v.as64() * v.as64();
        }
    }
    let scale = batch.eta.as64() / batch.x.rows() as f64;
    let mut delta = Mat::zeros(w.rows(), w.cols());
    for i in 0..w.rows() {
        for j in 0..w.cols() {
            let v = xty[(i, j)].as64() - w[(i, j)].as64() * col_sq[j];
            delta[(i, j)] = T::from64(v * scale);
        }
    }
    Ok(delta)
}

/// Measure how close `w` is to a stable solution of the rule under input
/// second moment `c`, comparing the column span to the top-`m` eigenspace.
pub fn stability_report<T: Scalar>(w: &Mat<T>, c: &Mat<T>, m: usize) -> Result<StabilityReport<T>> {
    if c.rows() != c.cols() || c.rows() != w.rows() {
        return Err(Error::DimensionMismatch {
            op: "stability_report",
            lhs_rows: w.rows(),
            lhs_cols: w.cols(),
            rhs_rows: c.rows(),
            rhs_cols: c.cols(),
        });
    }
    let cw = c.matmul(w)?;
    let gram = w.matmul_at(&cw)?; // w^T C w
    let resid = cw.sub(&w.matmul(&gram)?)?;

    let pairs = top_eigenpairs(c, m)?;
    let mut basis = Mat::<T>::zeros(w.rows(), m);
    for (k, p) in pairs.iter().enumerate() {
        for (i, &v) in p.vector.iter().enumerate() {
            basis[(i, k)] = v;
        }
    }
    let coords = basis.matmul_at(w)?; // V^T w
    let inside = basis.matmul(&coords)?; // P w
    let outside = w.sub(&inside)?.frobenius_norm();
    let w_norm = w.frobenius_norm();
    let span_defect = if w_norm.as64() > 0.0 {
        outside / w_norm
    } else {
        T::zero()
    };

    Ok(StabilityReport {
        residual: resid.frobenius_norm(),
        weight_norm_sq: T::from64(w_norm.as64() * w_norm.as64()),
        span_defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    /// Independent per-sample double-loop implementation of the rule,
    /// straight from the elementwise definition.
    fn competitive_oracle(
        x: &Mat<f64>,
        y: &Mat<f64>,
        w: &Mat<f64>,
        eta: f64,
        weights: Option<&[f64]>,
    ) -> Mat<f64> {
        let mut dw = Mat::zeros(w.rows(), w.cols());
        for s in 0..x.rows() {
            let g = weights.map_or(1.0, |ws| ws[s]);
            for i in 0..w.rows() {
                let mut recon = 0.0;
                for k in 0..w.cols() {
                    recon += y[(s, k)] * w[(i, k)];
                }
                for j in 0..w.cols() {
                    dw[(i, j)] += g * eta * y[(s, j)] * (x[(s, i)] - recon);
                }
            }
        }
        dw.scale(1.0 / x.rows() as f64)
    }

    fn oja_oracle(x: &Mat<f64>, y: &Mat<f64>, w: &Mat<f64>, eta: f64) -> Mat<f64> {
        let mut dw = Mat::zeros(w.rows(), w.cols());
        for s in 0..x.rows() {
            for i in 0..w.rows() {
                for j in 0..w.cols() {
                    dw[(i, j)] += eta * y[(s, j)] * (x[(s, i)] - y[(s, j)] * w[(i, j)]);
                }
            }
        }
        dw.scale(1.0 / x.rows() as f64)
    }

    fn random_case(seed: u64, b: usize, n: usize, m: usize) -> (Mat<f64>, Mat<f64>, Mat<f64>) {
        let mut rng = SeededRng::new(seed);
        let x = rng.gaussian_mat::<f64>(b, n, 1.0);
        let w = rng.gaussian_mat::<f64>(n, m, 0.3);
        let y = x.matmul(&w).unwrap();
        (x, y, w)
    }

    #[test]
    fn zero_input_gives_zero_delta() {
        let x = Mat::<f32>::zeros(5, 4);
        let y = Mat::<f32>::zeros(5, 2);
        let w = Mat::<f32>::zeros(4, 2);
        let d = competitive_delta(&UpdateBatch { x: &x, y: &y, eta: 0.1 }, &w).unwrap();
        assert_eq!(d.frobenius_norm(), 0.0);
    }

    #[test]
    fn matches_double_loop_oracle() {
        let (x, y, w) = random_case(17, 12, 5, 3);
        let d = competitive_delta(&UpdateBatch { x: &x, y: &y, eta: 0.05 }, &w).unwrap();
        let o = competitive_oracle(&x, &y, &w, 0.05, None);
        assert!(d.sub(&o).unwrap().frobenius_norm() < 1e-12);
    }

    #[test]
    fn weighted_matches_oracle_and_ones_reduce_to_plain() {
        let (x, y, w) = random_case(18, 9, 4, 3);
        let mut rng = SeededRng::new(99);
        let gamma: Vec<f64> = (0..9).map(|_| rng.uniform()).collect();
        let batch = UpdateBatch { x: &x, y: &y, eta: 0.02 };
        let d = competitive_delta_weighted(&batch, &w, &gamma).unwrap();
        let o = competitive_oracle(&x, &y, &w, 0.02, Some(&gamma));
        assert!(d.sub(&o).unwrap().frobenius_norm() < 1e-12);

        let ones = vec![1.0; 9];
        let dw = competitive_delta_weighted(&batch, &w, &ones).unwrap();
        let dp = competitive_delta(&batch, &w).unwrap();
        assert!(dw.sub(&dp).unwrap().frobenius_norm() < 1e-12);
    }

    #[test]
    fn oja_matches_double_loop_oracle() {
        let (x, y, w) = random_case(19, 10, 6, 2);
        let d = oja_delta(&UpdateBatch { x: &x, y: &y, eta: 0.03 }, &w).unwrap();
        let o = oja_oracle(&x, &y, &w, 0.03);
        assert!(d.sub(&o).unwrap().frobenius_norm() < 1e-12);
    }

    #[test]
    fn single_unit_competitive_equals_oja() {
        // With one output there is nobody to compete with: the joint
        // reconstruction is the unit's own, so the rules coincide.
        let (x, y, w) = random_case(20, 8, 5, 1);
        let batch = UpdateBatch { x: &x, y: &y, eta: 0.1 };
        let c = competitive_delta(&batch, &w).unwrap();
        let o = oja_delta(&batch, &w).unwrap();
        assert!(c.sub(&o).unwrap().frobenius_norm() < 1e-12);
    }

    #[test]
    fn batch_eigenvector_is_a_fixed_point() {
        // w = top eigenvector of the batch second moment: dw must vanish.
        let mut rng = SeededRng::new(23);
        let x = rng.gaussian_mat::<f64>(200, 4, 1.0);
        let c = crate::numerics::covariance(&x).unwrap();
        let top = &top_eigenpairs(&c, 1).unwrap()[0];
        let mut w = Mat::zeros(4, 1);
        for i in 0..4 {
            w[(i, 0)] = top.vector[i];
        }
        let y = x.matmul(&w).unwrap();
        let d = competitive_delta(&UpdateBatch { x: &x, y: &y, eta: 1.0 }, &w).unwrap();
        assert!(
            d.frobenius_norm() < 1e-9 * top.value,
            "delta {} for eigenvalue {}",
            d.frobenius_norm(),
            top.value
        );
    }

    #[test]
    fn delta_is_invariant_to_input_sign() {
        // x -> -x flips y too; the update is quadratic in the data.
        let (x, y, w) = random_case(29, 7, 4, 2);
        let neg_x = x.scale(-1.0);
        let neg_y = y.scale(-1.0);
        let d1 = competitive_delta(&UpdateBatch { x: &x, y: &y, eta: 0.1 }, &w).unwrap();
        let d2 = competitive_delta(&UpdateBatch { x: &neg_x, y: &neg_y, eta: 0.1 }, &w).unwrap();
        assert!(d1.sub(&d2).unwrap().frobenius_norm() < 1e-12);
    }

    #[test]
    fn rejects_shape_and_nonfinite_input() {
        let (x, _, w) = random_case(31, 6, 4, 2);
        let bad_y = Mat::<f64>::zeros(5, 2); // wrong batch size
        assert!(competitive_delta(&UpdateBatch { x: &x, y: &bad_y, eta: 0.1 }, &w).is_err());

        let mut nan_x = x.clone();
        nan_x[(0, 0)] = f64::NAN;
        let nan_y = nan_x.matmul(&w).unwrap();
        assert!(matches!(
            competitive_delta(&UpdateBatch { x: &nan_x, y: &nan_y, eta: 0.1 }, &w),
            Err(Error::NonFinite { .. })
        ));

        let empty_x = Mat::<f64>::zeros(0, 4);
        let empty_y = Mat::<f64>::zeros(0, 2);
        assert!(matches!(
            competitive_delta(&UpdateBatch { x: &empty_x, y: &empty_y, eta: 0.1 }, &w),
            Err(Error::EmptyInput(_))
        ));
    }

    /// Second moment with a known eigenbasis for stability tests.
    fn synthetic_c(n: usize, spectrum: &[f64], seed: u64) -> (Mat<f64>, Mat<f64>) {
        // Random orthonormal basis via Gram-Schmidt on a Gaussian matrix.
        let mut rng = SeededRng::new(seed);
        let g = rng.gaussian_mat::<f64>(n, n, 1.0);
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for j in 0..n {
            let mut v = g.col(j);
            for b in &basis {
                let proj: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= proj * bi;
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for vi in v.iter_mut() {
                *vi /= norm;
            }
            basis.push(v);
        }
        let mut vmat = Mat::zeros(n, n);
        for (j, b) in basis.iter().enumerate() {
            for (i, &v) in b.iter().enumerate() {
                vmat[(i, j)] = v;
            }
        }
        let mut c = Mat::zeros(n, n);
        for (k, &lam) in spectrum.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    c[(i, j)] += lam * vmat[(i, k)] * vmat[(j, k)];
                }
            }
        }
        (c, vmat)
    }

    #[test]
    fn stability_report_at_eigenvector_columns() {
        let (c, vmat) = synthetic_c(5, &[4.0, 3.0, 1.0, 0.5, 0.1], 77);
        let mut w = Mat::zeros(5, 2);
        for i in 0..5 {
            w[(i, 0)] = vmat[(i, 0)];
            w[(i, 1)] = vmat[(i, 1)];
        }
        let rep = stability_report(&w, &c, 2).unwrap();
        assert!(rep.residual < 1e-10, "residual {}", rep.residual);
        assert!((rep.weight_norm_sq - 2.0).abs() < 1e-10);
        assert!(rep.span_defect < 1e-10);
    }

    #[test]
    fn stability_report_is_sign_and_rotation_invariant() {
        let (c, vmat) = synthetic_c(5, &[4.0, 3.0, 1.0, 0.5, 0.1], 78);
        let theta: f64 = 0.77;
        let (cos, sin) = (theta.cos(), theta.sin());
        let mut w = Mat::zeros(5, 2);
        for i in 0..5 {
            // Columns: a rotation of (v1, v2), one of them sign-flipped.
            w[(i, 0)] = cos * vmat[(i, 0)] + sin * vmat[(i, 1)];
            w[(i, 1)] = -(-sin * vmat[(i, 0)] + cos * vmat[(i, 1)]);
        }
        let rep = stability_report(&w, &c, 2).unwrap();
        assert!(rep.residual < 1e-10, "residual {}", rep.residual);
        assert!((rep.weight_norm_sq - 2.0).abs() < 1e-10);
        assert!(rep.span_defect < 1e-10);
    }

    #[test]
    fn stability_report_flags_wrong_subspace() {
        let (c, vmat) = synthetic_c(5, &[4.0, 3.0, 1.0, 0.5, 0.1], 79);
        let mut w = Mat::zeros(5, 2);
        for i in 0..5 {
            // Bottom eigenvectors: stable for the *rule* residual only if
            // they are eigenvectors, but far from the top-2 span.
            w[(i, 0)] = vmat[(i, 3)];
            w[(i, 1)] = vmat[(i, 4)];
        }
        let rep = stability_report(&w, &c, 2).unwrap();
        assert!(rep.span_defect > 0.99, "defect {}", rep.span_defect);
    }
}
