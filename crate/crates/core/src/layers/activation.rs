//! Per-layer activation functions and their input gradients.
//!
//! The interesting ones preserve the magnitude of the layer response
//! (`||f(y)|| = ||y||`) while reshaping its direction; that keeps the
//! network's output activation an honest measure of input typicality
//! instead of something a layer could inflate.

use crate::error::{Error, Result};
use crate::numerics::Scalar;

/// Below this standard deviation of `|y|` the standardized form is
/// numerically meaningless and `StdAbs` falls back to plain `Abs`.
const STD_ABS_DEGENERATE: f64 = 1e-12;

/// Activation applied to a layer's linear response, one sample at a time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// Pass-through; the layer stays linear.
    Identity,
    /// `|y|` elementwise. Magnitude-preserving.
    Abs,
    /// Standardize `|y|` to zero mean and unit variance, then rescale the
    /// result back to `||y||`. Magnitude-preserving; the default for
    /// multi-layer classification models.
    StdAbs,
    /// `y^2 / ||y^2||` elementwise square, normalized to a unit vector.
    /// Not magnitude-preserving — used for layerwise-trained feature
    /// extractors, where each layer should see unit-scale input.
    SquareNorm,
}

impl Activation {
    /// Apply to one sample's linear response.
    pub fn apply<T: Scalar>(&self, y: &[T]) -> Result<Vec<T>> {
        match self {
            Activation::Identity => Ok(y.to_vec()),
            Activation::Abs => Ok(y.iter().map(|v| v.abs()).collect()),
            Activation::StdAbs => Ok(std_abs(y)),
            Activation::SquareNorm => square_norm(y),
        }
    }

    /// Chain an upstream gradient through the activation.
    ///
    /// `y` is the linear response the activation was applied to and
    /// `upstream` is `dL/d f(y)`; returns `dL/dy`. At the kinks of `|.|`
    /// the subgradient 0 is used.
    pub fn input_gradient<T: Scalar>(&self, y: &[T], upstream: &[T]) -> Result<Vec<T>> {
        assert_eq!(y.len(), upstream.len(), "input_gradient: length mismatch");
        match self {
            Activation::Identity => Ok(upstream.to_vec()),
            Activation::Abs => Ok(y
                .iter()
                .zip(upstream)
                .map(|(&yi, &ui)| ui * sign(yi))
                .collect()),
            Activation::StdAbs => Ok(std_abs_gradient(y, upstream)),
            Activation::SquareNorm => square_norm_gradient(y, upstream),
        }
    }

    /// True when `||f(y)|| = ||y||` for all `y`.
    pub fn magnitude_preserving(&self) -> bool {
        !matches!(self, Activation::SquareNorm)
    }

    /// Stable one-byte tag used by the checkpoint format.
    pub fn tag(&self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Abs => 1,
            Activation::StdAbs => 2,
            Activation::SquareNorm => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Activation> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Abs),
            2 => Some(Activation::StdAbs),
            3 => Some(Activation::SquareNorm),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Abs => "abs",
            Activation::StdAbs => "std_abs",
            Activation::SquareNorm => "square_norm",
        }
    }

    pub fn parse(s: &str) -> Option<Activation> {
        match s {
            "identity" => Some(Activation::Identity),
            "abs" => Some(Activation::Abs),
            "std_abs" => Some(Activation::StdAbs),
            "square_norm" => Some(Activation::SquareNorm),
            _ => None,
        }
    }
}

fn sign<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// `z = |y|` standardized across the sample, rescaled to `||y||`.
///
/// Because standardization divides by the std and the rescale multiplies it
/// back, the whole map reduces to `(z - mean(z)) * ||y|| / ||z - mean(z)||`,
/// which is the numerically stable form computed here.
fn std_abs<T: Scalar>(y: &[T]) -> Vec<T> {
    let n = y.len() as f64;
    let mut mean = 0.0f64;
    for &v in y {
        mean += v.abs().as64();
    }
    mean /= n;
    let mut centered_sq = 0.0f64;
    let mut y_sq = 0.0f64;
    for &v in y {
        let z = v.abs().as64();
        centered_sq += (z - mean) * (z - mean);
        y_sq += z * z;
    }
    let sigma = (centered_sq / n).sqrt();
    if sigma < STD_ABS_DEGENERATE {
        return y.iter().map(|v| v.abs()).collect();
    }
    let scale = y_sq.sqrt() / centered_sq.sqrt();
    y.iter()
        .map(|v| T::from64((v.abs().as64() - mean) * scale))
        .collect()
}

fn std_abs_gradient<T: Scalar>(y: &[T], upstream: &[T]) -> Vec<T> {
    let n = y.len() as f64;
    let z: Vec<f64> = y.iter().map(|v| v.abs().as64()).collect();
    let mean = z.iter().sum::<f64>() / n;
    let centered_sq: f64 = z.iter().map(|zi| (zi - mean) * (zi - mean)).sum();
    let sigma = (centered_sq / n).sqrt();
    if sigma < STD_ABS_DEGENERATE {
        // Fallback branch is plain Abs.
        return y
            .iter()
            .zip(upstream)
            .map(|(&yi, &ui)| ui * sign(yi))
            .collect();
    }
    let g = z.iter().map(|zi| zi * zi).sum::<f64>().sqrt(); // ||y||
    let r = centered_sq.sqrt(); // ||z - mean||
    let u_sum: f64 = upstream.iter().map(|u| u.as64()).sum();
    let u_dot_c: f64 = upstream
        .iter()
        .zip(&z)
        .map(|(u, zi)| u.as64() * (zi - mean))
        .sum();
    // out_i = g * (z_i - mean) / r; differentiate through g, the centering
    // and r, then through z = |y|.
    y.iter()
        .zip(&z)
        .zip(upstream)
        .map(|((&yi, &zi), &ui)| {
            let dz = (zi / (g * r)) * u_dot_c + (g / r) * (ui.as64() - u_sum / n)
                - (g / (r * r * r)) * (zi - mean) * u_dot_c;
            T::from64(dz) * sign(yi)
        })
        .collect()
}

/// `y^2` normalized to a unit vector. Zero input has no direction: error.
fn square_norm<T: Scalar>(y: &[T]) -> Result<Vec<T>> {
    let q: Vec<f64> = y.iter().map(|v| v.as64() * v.as64()).collect();
    let nq = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nq <= 0.0 {
        return Err(Error::ZeroNorm {
            context: "square_norm activation",
            index: None,
        });
    }
    Ok(q.iter().map(|&v| T::from64(v / nq)).collect())
}

fn square_norm_gradient<T: Scalar>(y: &[T], upstream: &[T]) -> Result<Vec<T>> {
    let q: Vec<f64> = y.iter().map(|v| v.as64() * v.as64()).collect();
    let nq = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nq <= 0.0 {
        return Err(Error::ZeroNorm {
            context: "square_norm gradient",
            index: None,
        });
    }
    let u_dot_q: f64 = upstream
        .iter()
        .zip(&q)
        .map(|(u, qi)| u.as64() * qi)
        .sum();
    Ok(y
        .iter()
        .zip(&q)
        .zip(upstream)
        .map(|((&yi, &qi), &ui)| {
            T::from64((2.0 * yi.as64() / nq) * (ui.as64() - qi * u_dot_q / (nq * nq)))
        })
        .collect())
}
