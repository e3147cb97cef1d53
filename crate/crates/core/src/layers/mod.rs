//! Network layers: connectivity patterns, state, forward pass, updates and
//! input gradients.
//!
//! A layer is a weight matrix (`fan_in x fan_out`), a connectivity pattern
//! and an activation. Fully connected layers are plain GEMMs; locally
//! connected layers restrict each output unit to a small receptive field on
//! an input grid (no weight sharing) and run on sparse index lists, with the
//! dense weight matrix kept exactly zero off-pattern.

mod activation;
mod local;

pub use activation::Activation;
pub use local::LocalPattern;

use crate::error::{Error, Result};
use crate::numerics::{Mat, Scalar, SeededRng};
use crate::rule::{self, UpdateBatch};

/// Which input units each output unit sees.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Connectivity {
    /// Every output sees every input.
    Full { fan_in: usize, fan_out: usize },
    /// Receptive fields on a grid; see [`LocalPattern`].
    Local(LocalPattern),
}

impl Connectivity {
    pub fn fan_in(&self) -> usize {
        match self {
            Connectivity::Full { fan_in, .. } => *fan_in,
            Connectivity::Local(p) => p.fan_in(),
        }
    }

    pub fn fan_out(&self) -> usize {
        match self {
            Connectivity::Full { fan_out, .. } => *fan_out,
            Connectivity::Local(p) => p.fan_out(),
        }
    }

    /// True when input `i` feeds output `j`.
    pub fn connects(&self, i: usize, j: usize) -> bool {
        match self {
            Connectivity::Full { .. } => true,
            Connectivity::Local(p) => p.connects(i, j),
        }
    }
}

/// One layer: weights plus its connectivity and activation.
#[derive(Debug, Clone)]
pub struct LayerState<T> {
    w: Mat<T>,
    conn: Connectivity,
    act: Activation,
}

impl<T: Scalar> LayerState<T> {
    /// Fresh layer with `N(0, sigma^2)` weights on the connected entries
    /// and exact zeros everywhere else.
    pub fn init(conn: Connectivity, act: Activation, rng: &mut SeededRng, sigma: f64) -> Self {
        let mut w = Mat::zeros(conn.fan_in(), conn.fan_out());
        match &conn {
            Connectivity::Full { .. } => {
                for v in w.as_mut_slice() {
                    *v = rng.gaussian(sigma);
                }
            }
            Connectivity::Local(p) => {
                // Draw in output-major edge order so the stream is stable.
                for j in 0..p.fan_out() {
                    for &i in p.inputs_of(j) {
                        w[(i as usize, j)] = rng.gaussian(sigma);
                    }
                }
            }
        }
        LayerState { w, conn, act }
    }

    /// Adopt an existing weight matrix (checkpoint load, tests). Off-pattern
    /// entries must be exactly zero.
    pub fn from_weights(w: Mat<T>, conn: Connectivity, act: Activation) -> Result<Self> {
        if w.rows() != conn.fan_in() || w.cols() != conn.fan_out() {
            return Err(Error::DimensionMismatch {
                op: "LayerState::from_weights",
                lhs_rows: w.rows(),
                lhs_cols: w.cols(),
                rhs_rows: conn.fan_in(),
                rhs_cols: conn.fan_out(),
            });
        }
        if !w.all_finite() {
            return Err(Error::NonFinite {
                context: "LayerState::from_weights",
            });
        }
        if let Connectivity::Local(p) = &conn {
            p.check_masked(&w)?;
        }
        Ok(LayerState { w, conn, act })
    }

    pub fn weights(&self) -> &Mat<T> {
        &self.w
    }

    pub fn connectivity(&self) -> &Connectivity {
        &self.conn
    }

    pub fn activation(&self) -> Activation {
        self.act
    }

    pub fn fan_in(&self) -> usize {
        self.conn.fan_in()
    }

    pub fn fan_out(&self) -> usize {
        self.conn.fan_out()
    }

    /// Linear response `x * w` for a batch of row-vector inputs.
    pub fn forward_linear(&self, x: &Mat<T>) -> Result<Mat<T>> {
        if x.cols() != self.fan_in() {
            return Err(Error::LayoutMismatch {
                expected: self.fan_in(),
                got: x.cols(),
            });
        }
        match &self.conn {
            Connectivity::Full { .. } => x.matmul(&self.w),
            Connectivity::Local(p) => p.forward(x, &self.w),
        }
    }

    /// Apply the layer's activation row-by-row.
    pub fn activate(&self, net: &Mat<T>) -> Result<Mat<T>> {
        let mut out = Mat::zeros(net.rows(), net.cols());
        for s in 0..net.rows() {
            let row = self.act.apply(net.row(s))?;
            out.row_mut(s).copy_from_slice(&row);
        }
        Ok(out)
    }

    /// Competitive update for this layer, respecting its connectivity.
    ///
    /// `net` must be this layer's linear response to `x`. Optional
    /// per-sample weights gate each sample's contribution.
    pub fn delta(&self, x: &Mat<T>, net: &Mat<T>, eta: T, weights: Option<&[T]>) -> Result<Mat<T>> {
        let batch = UpdateBatch { x, y: net, eta };
        match (&self.conn, weights) {
            (Connectivity::Full { .. }, None) => rule::competitive_delta(&batch, &self.w),
            (Connectivity::Full { .. }, Some(g)) => {
                rule::competitive_delta_weighted(&batch, &self.w, g)
            }
            (Connectivity::Local(p), _) => p.competitive_delta(&batch, &self.w, weights),
        }
    }

    /// Add an update, returning the new layer. Rejects non-finite deltas
    /// and (for local layers) any off-pattern leakage, so masked entries
    /// stay exactly zero for the life of the model.
    pub fn apply_update(&self, delta: &Mat<T>) -> Result<LayerState<T>> {
        if !delta.all_finite() {
            return Err(Error::NonFinite {
                context: "apply_update: delta",
            });
        }
        if let Connectivity::Local(p) = &self.conn {
            p.check_masked(delta)?;
        }
        Ok(LayerState {
            w: self.w.add(delta)?,
            conn: self.conn.clone(),
            act: self.act,
        })
    }

    /// Pull a gradient on this layer's linear response back to its input:
    /// `dL/dx_i = sum_j w_ij * u_j`.
    pub fn backward_linear(&self, upstream: &[T]) -> Vec<T> {
        match &self.conn {
            Connectivity::Full { .. } => {
                let n = self.fan_in();
                let mut g = vec![T::zero(); n];
                for (i, gi) in g.iter_mut().enumerate() {
                    *gi = T::from64(crate::numerics::dot64(self.w.row(i), upstream));
                }
                g
            }
            Connectivity::Local(p) => p.backward(&self.w, upstream),
        }
    }
}

/// Linear responses and activated outputs of every layer for one batch.
pub struct ForwardTrace<T> {
    /// Per layer: the linear response (`B x fan_out`).
    pub nets: Vec<Mat<T>>,
    /// Per layer: the activated output fed to the next layer.
    pub posts: Vec<Mat<T>>,
}

impl<T: Scalar> ForwardTrace<T> {
    /// The network output: the top layer's linear response.
    pub fn output(&self) -> &Mat<T> {
        self.nets.last().expect("trace of at least one layer")
    }
}

/// Run a batch through a stack of layers, keeping every intermediate.
pub fn forward_stack<T: Scalar>(layers: &[LayerState<T>], x: &Mat<T>) -> Result<ForwardTrace<T>> {
    if layers.is_empty() {
        return Err(Error::EmptyInput("forward_stack"));
    }
    let mut nets = Vec::with_capacity(layers.len());
    let mut posts = Vec::with_capacity(layers.len());
    let mut cur = x.clone();
    for layer in layers {
        let net = layer.forward_linear(&cur)?;
        let post = layer.activate(&net)?;
        cur = post.clone();
        nets.push(net);
        posts.push(post);
    }
    Ok(ForwardTrace { nets, posts })
}

/// Gradient of the output activation with respect to the input, for one
/// sample.
///
/// The objective is `sum_i omega_i * y_i^2` over the top layer's linear
/// response `y` (all `omega_i = 1` when `output_weights` is `None`; the
/// generator passes noise-perturbed weights). The chain runs through each
/// activation's analytic gradient — this is inference-time machinery, not
/// part of training.
pub fn activation_input_gradient<T: Scalar>(
    layers: &[LayerState<T>],
    x: &[T],
    output_weights: Option<&[T]>,
) -> Result<Vec<T>> {
    if layers.is_empty() {
        return Err(Error::EmptyInput("activation_input_gradient"));
    }
    let x_mat = Mat::from_rows(&[x.to_vec()])?;
    let trace = forward_stack(layers, &x_mat)?;

    let top = trace.nets.last().unwrap().row(0);
    let two = T::from64(2.0);
    let mut upstream: Vec<T> = match output_weights {
        Some(w) => {
            if w.len() != top.len() {
                return Err(Error::LayoutMismatch {
                    expected: top.len(),
                    got: w.len(),
                });
            }
            top.iter().zip(w).map(|(&y, &om)| two * om * y).collect()
        }
        None => top.iter().map(|&y| two * y).collect(),
    };

    for (l, layer) in layers.iter().enumerate().rev() {
        let grad_input = layer.backward_linear(&upstream);
        if l == 0 {
            return Ok(grad_input);
        }
        let below_net = trace.nets[l - 1].row(0);
        upstream = layers[l - 1].act.input_gradient(below_net, &grad_input)?;
    }
    unreachable!("loop returns at layer 0");
}
