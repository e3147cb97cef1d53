//! Dense numerics: matrices, eigendecomposition, RNG, finite differences.
//!
//! Everything here is deterministic: reductions run in a fixed order, so the
//! same inputs produce bit-identical outputs on every run. Reductions
//! accumulate in `f64` regardless of the storage scalar.

mod eigen;
mod finitediff;
mod mat;
mod rng;

pub use eigen::{pca_reconstruction_error, top_eigenpairs, EigenPair};
pub use finitediff::finite_diff_gradient;
pub use mat::{covariance, Mat};
pub use rng::SeededRng;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};

/// Floating-point scalars the engine can run on.
///
/// Implemented for `f32` and `f64`. Model state is normally `f32`; oracles
/// and verification code often use `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Send + Sync + Display + Debug + 'static
{
    /// Round an `f64` to the nearest representable value.
    fn from64(x: f64) -> Self {
        Self::from_f64(x).expect("f64 conversion")
    }

    /// Widen to `f64`.
    fn as64(self) -> f64 {
        self.to_f64().expect("f64 conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Dot product with `f64` accumulation.
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len(), "dot: length mismatch");
    let mut acc = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        acc += x.as64() * y.as64();
    }
    T::from64(acc)
}

/// Dot product accumulated in `f64` across four interleaved accumulators.
///
/// The four partial sums give the CPU independent add chains (serial `f64`
/// adds are latency-bound); the interleaved order is fixed, so results are
/// still deterministic. Used by the sparse-kernel hot paths.
pub fn dot64<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot64: length mismatch");
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i].as64() * b[i].as64();
        acc[1] += a[i + 1].as64() * b[i + 1].as64();
        acc[2] += a[i + 2].as64() * b[i + 2].as64();
        acc[3] += a[i + 3].as64() * b[i + 3].as64();
    }
    for i in 4 * chunks..a.len() {
        acc[0] += a[i].as64() * b[i].as64();
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

/// Squared Euclidean norm with `f64` accumulation.
pub fn norm_sq<T: Scalar>(v: &[T]) -> T {
    let mut acc = 0.0f64;
    for &x in v {
        acc += x.as64() * x.as64();
    }
    T::from64(acc)
}

/// Euclidean norm with `f64` accumulation.
pub fn norm<T: Scalar>(v: &[T]) -> T {
    T::from64(norm_sq(v).as64().sqrt())
}

/// Scale a vector so its Euclidean norm is 1; returns the original norm.
///
/// Vectors with norm below `1e-12` are left untouched and report their norm,
/// so callers can decide how to handle degenerate input.
pub fn normalize<T: Scalar>(v: &mut [T]) -> T {
    let n = norm(v);
    if n.as64() > 1e-12 {
        let inv = T::one() / n;
        for x in v.iter_mut() {
            *x = *x * inv;
        }
    }
    n
}

/// Mean of a slice with `f64` accumulation. Empty input returns 0.
pub fn mean<T: Scalar>(v: &[T]) -> T {
    if v.is_empty() {
        return T::zero();
    }
    let mut acc = 0.0f64;
    for &x in v {
        acc += x.as64();
    }
    T::from64(acc / v.len() as f64)
}

/// True when every entry is finite.
pub fn all_finite<T: Scalar>(v: &[T]) -> bool {
    v.iter().all(|x| x.is_finite())
}
