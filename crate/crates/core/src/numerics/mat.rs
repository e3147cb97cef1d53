//! Row-major dense matrix with deterministic, `f64`-accumulated kernels.

use super::Scalar;
use crate::error::{Error, Result};
use std::ops::{Index, IndexMut};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    /// Identity matrix.
    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Build from a flat row-major buffer. `data.len()` must be `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "Mat::from_vec",
                lhs_rows: rows,
                lhs_cols: cols,
                rhs_rows: 1,
                rhs_cols: data.len(),
            });
        }
        Ok(Mat { rows, cols, data })
    }

    /// Build from nested rows; every row must have the same length.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput("Mat::from_rows"));
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    op: "Mat::from_rows",
                    lhs_rows: 1,
                    lhs_cols: cols,
                    rhs_rows: i,
                    rhs_cols: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Mat {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Borrow row `r` as a slice.
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Mutably borrow row `r`.
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Copy column `c` into a new vector.
    pub fn col(&self, c: usize) -> Vec<T> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    /// Flat row-major view of the whole matrix.
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Flat mutable row-major view.
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Matrix product `self * rhs`.
    ///
    /// Loop order keeps the reduction independent per output column so the
    /// inner loop vectorizes without reassociating the `f64` accumulation.
    pub fn matmul(&self, rhs: &Mat<T>) -> Result<Mat<T>> {
        if self.cols != rhs.rows {
            return Err(self.dim_err("matmul", rhs));
        }
        let mut out = Mat::zeros(self.rows, rhs.cols);
        let mut acc = vec![0.0f64; rhs.cols];
        for i in 0..self.rows {
            acc.iter_mut().for_each(|a| *a = 0.0);
            let a_row = self.row(i);
            for (k, &a_ik) in a_row.iter().enumerate() {
                let a_ik = a_ik.as64();
                let b_row = rhs.row(k);
                for (j, &b_kj) in b_row.iter().enumerate() {
                    acc[j] += a_ik * b_kj.as64();
                }
            }
            let o_row = out.row_mut(i);
            for (o, &a) in o_row.iter_mut().zip(&acc) {
                *o = T::from64(a);
            }
        }
        Ok(out)
    }

    /// `self * rhs^T` (materializes the transpose, then multiplies).
    pub fn matmul_bt(&self, rhs: &Mat<T>) -> Result<Mat<T>> {
        if self.cols != rhs.cols {
            return Err(self.dim_err("matmul_bt", rhs));
        }
        self.matmul(&rhs.transpose())
    }

    /// `self^T * rhs` without materializing the transpose.
    ///
    /// Shapes: `(s x n)^T * (s x m) = n x m`. Inner loop runs over the
    /// columns of `rhs`, so it vectorizes like `matmul`.
    pub fn matmul_at(&self, rhs: &Mat<T>) -> Result<Mat<T>> {
        if self.rows != rhs.rows {
            return Err(self.dim_err("matmul_at", rhs));
        }
        let mut out = Mat::zeros(self.cols, rhs.cols);
        let mut acc = vec![0.0f64; rhs.cols];
        for i in 0..self.cols {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for s in 0..self.rows {
                let a_si = self[(s, i)].as64();
                let b_row = rhs.row(s);
                for (j, &b_sj) in b_row.iter().enumerate() {
                    acc[j] += a_si * b_sj.as64();
                }
            }
            let o_row = out.row_mut(i);
            for (o, &a) in o_row.iter_mut().zip(&acc) {
                *o = T::from64(a);
            }
        }
        Ok(out)
    }

    /// Transposed copy.
    pub fn transpose(&self) -> Mat<T> {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            let row = self.row(i);
            for (j, &v) in row.iter().enumerate() {
                out[(j, i)] = v;
            }
        }
        out
    }

    /// Elementwise sum `self + rhs`.
    pub fn add(&self, rhs: &Mat<T>) -> Result<Mat<T>> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(self.dim_err("add", rhs));
        }
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Mat {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Elementwise difference `self - rhs`.
    pub fn sub(&self, rhs: &Mat<T>) -> Result<Mat<T>> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(self.dim_err("sub", rhs));
        }
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(&a, &b)| a - b)
            .collect();
        Ok(Mat {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Scaled copy `self * s`.
    pub fn scale(&self, s: T) -> Mat<T> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&a| a * s).collect(),
        }
    }

    /// Frobenius norm, accumulated in `f64`.
    pub fn frobenius_norm(&self) -> T {
        super::norm(&self.data)
    }

    /// Largest absolute entry, 0 for an empty matrix.
    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |m, &v| if v.abs() > m { v.abs() } else { m })
    }

    /// True when every entry is finite.
    pub fn all_finite(&self) -> bool {
        super::all_finite(&self.data)
    }

    /// Convert entrywise to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Mat<U> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| U::from64(v.as64())).collect(),
        }
    }

    fn dim_err(&self, op: &'static str, rhs: &Mat<T>) -> Error {
        Error::DimensionMismatch {
            op,
            lhs_rows: self.rows,
            lhs_cols: self.cols,
            rhs_rows: rhs.rows,
            rhs_cols: rhs.cols,
        }
    }
}

impl<T: Scalar> Index<(usize, usize)> for Mat<T> {
    type Output = T;
    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.cols + c]
    }
}

impl<T: Scalar> IndexMut<(usize, usize)> for Mat<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.cols + c]
    }
}

/// Uncentered second-moment matrix `E[x x^T]` of a set of row vectors.
///
/// This is the "covariance" the learning rule sees: no mean subtraction,
/// matching the statistics the stable-solution analysis is stated in.
pub fn covariance<T: Scalar>(samples: &Mat<T>) -> Result<Mat<T>> {
    if samples.rows() == 0 {
        return Err(Error::EmptyInput("covariance"));
    }
    let n = samples.rows();
    let c = samples.matmul_at(samples)?;
    Ok(c.scale(T::from64(1.0 / n as f64)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    /// Straight triple-loop reference product, `f64` throughout.
    fn matmul_oracle(a: &Mat<f64>, b: &Mat<f64>) -> Mat<f64> {
        let mut out = Mat::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut acc = 0.0;
                for k in 0..a.cols() {
                    acc += a[(i, k)] * b[(k, j)];
                }
                out[(i, j)] = acc;
            }
        }
        out
    }

    fn assert_close(a: &Mat<f64>, b: &Mat<f64>, tol: f64) {
        assert_eq!(a.rows(), b.rows());
        assert_eq!(a.cols(), b.cols());
        for i in 0..a.rows() {
            for j in 0..a.cols() {
                assert!(
                    (a[(i, j)] - b[(i, j)]).abs() <= tol,
                    "entry ({i},{j}): {} vs {}",
                    a[(i, j)],
                    b[(i, j)]
                );
            }
        }
    }

    #[test]
    fn matmul_identity_is_noop() {
        let mut rng = SeededRng::new(1);
        let a = rng.gaussian_mat::<f64>(5, 5, 1.0);
        let id = Mat::identity(5);
        assert_close(&a.matmul(&id).unwrap(), &a, 0.0);
        assert_close(&id.matmul(&a).unwrap(), &a, 0.0);
    }

    #[test]
    fn matmul_hand_example() {
        // [[1,2],[3,4]] * [[1],[1]] = [[3],[7]]
        let a = Mat::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Mat::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c[(0, 0)], 3.0);
        assert_eq!(c[(1, 0)], 7.0);
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let mut rng = SeededRng::new(7);
        let a = rng.gaussian_mat::<f64>(9, 4, 1.0);
        let b = rng.gaussian_mat::<f64>(4, 6, 1.0);
        assert_close(&a.matmul(&b).unwrap(), &matmul_oracle(&a, &b), 1e-12);
    }

    #[test]
    fn matmul_rejects_bad_shapes() {
        let a = Mat::<f32>::zeros(2, 3);
        let b = Mat::<f32>::zeros(2, 3);
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3"), "message should carry shapes: {msg}");
    }

    #[test]
    fn matmul_at_matches_explicit_transpose() {
        let mut rng = SeededRng::new(3);
        let a = rng.gaussian_mat::<f64>(7, 5, 1.0);
        let b = rng.gaussian_mat::<f64>(7, 4, 1.0);
        let direct = a.matmul_at(&b).unwrap();
        let via_t = a.transpose().matmul(&b).unwrap();
        assert_close(&direct, &via_t, 1e-12);
    }

    #[test]
    fn matmul_bt_matches_explicit_transpose() {
        let mut rng = SeededRng::new(4);
        let a = rng.gaussian_mat::<f64>(6, 5, 1.0);
        let b = rng.gaussian_mat::<f64>(3, 5, 1.0);
        let direct = a.matmul_bt(&b).unwrap();
        let via_t = a.matmul(&b.transpose()).unwrap();
        assert_close(&direct, &via_t, 1e-12);
    }

    #[test]
    fn transpose_round_trips() {
        let mut rng = SeededRng::new(5);
        let a = rng.gaussian_mat::<f32>(4, 7, 1.0);
        assert_eq!(a.transpose().transpose(), a);
    }

    #[test]
    fn covariance_of_single_basis_vector() {
        // One sample e1: C = e1 e1^T.
        let x = Mat::from_rows(&[vec![1.0f64, 0.0, 0.0]]).unwrap();
        let c = covariance(&x).unwrap();
        assert_eq!(c[(0, 0)], 1.0);
        for (i, j) in [(0, 1), (0, 2), (1, 1), (1, 2), (2, 2)] {
            assert_eq!(c[(i, j)], 0.0);
        }
    }

    #[test]
    fn covariance_of_two_basis_vectors() {
        // {e1, e2}: C = diag(1/2, 1/2).
        let x = Mat::from_rows(&[vec![1.0f64, 0.0], vec![0.0, 1.0]]).unwrap();
        let c = covariance(&x).unwrap();
        assert_eq!(c[(0, 0)], 0.5);
        assert_eq!(c[(1, 1)], 0.5);
        assert_eq!(c[(0, 1)], 0.0);
    }

    #[test]
    fn covariance_matches_two_pass_oracle() {
        // Independent route: per-entry mean of x_i * x_j.
        let mut rng = SeededRng::new(11);
        let x = rng.gaussian_mat::<f64>(100, 6, 1.0);
        let c = covariance(&x).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let mut acc = 0.0;
                for s in 0..x.rows() {
                    acc += x[(s, i)] * x[(s, j)];
                }
                let expect = acc / x.rows() as f64;
                assert!((c[(i, j)] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn covariance_is_symmetric() {
        let mut rng = SeededRng::new(13);
        let x = rng.gaussian_mat::<f32>(50, 8, 1.0);
        let c = covariance(&x).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                assert!((c[(i, j)] - c[(j, i)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn covariance_rejects_empty() {
        let x = Mat::<f32>::zeros(0, 4);
        assert!(covariance(&x).is_err());
    }
}
