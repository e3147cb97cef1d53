//! Inference by activation maximization.
//!
//! A trained model assigns every input an output activation `||y_top||^2`
//! that is largest for inputs resembling the training distribution. All
//! inference tasks reduce to maximizing that one quantity over different
//! search spaces:
//!
//! * **classification** — enumerate the label renderings and keep the class
//!   whose pairing with the image activates most;
//! * **generation** — gradient-ascend the image pixels for a fixed label;
//! * **completion** — classify from the visible pixels, then ascend only
//!   the hidden ones;
//! * **anomaly detection** — threshold the activation itself.

use crate::data::{EncodedSample, LabelCodec};
use crate::error::{Error, Result};
use crate::layers::activation_input_gradient;
use crate::network::NetworkModel;
use crate::numerics::{dot, norm, norm_sq, Mat, Scalar, SeededRng};

/// Activations at or below this are treated as "the model says nothing".
const DEGENERATE_ACTIVATION: f64 = 1e-9;

/// Output activation of one image paired with every label rendering, in
/// class order. The raw material for [`classify`]; exposed so callers can
/// report per-class scores alongside the argmax.
pub fn class_scores<T: Scalar>(
    model: &NetworkModel<T>,
    codec: &LabelCodec,
    data: &[T],
) -> Result<Vec<f64>> {
    if data.len() != model.layout().data_len() {
        return Err(Error::LayoutMismatch {
            expected: model.layout().data_len(),
            got: data.len(),
        });
    }
    let mut scores = Vec::with_capacity(codec.classes());
    for c in 0..codec.classes() {
        let mut joint = data.to_vec();
        joint.extend(codec.encode::<T>(c)?);
        scores.push(model.output_activation_raw(&joint)?.as64());
    }
    Ok(scores)
}

/// Classify one image by label enumeration: the winning class is the one
/// whose rendered label, joined with the image, maximizes the output
/// activation. Ties break toward the smaller class index.
pub fn classify<T: Scalar>(
    model: &NetworkModel<T>,
    codec: &LabelCodec,
    data: &[T],
) -> Result<usize> {
    let scores = class_scores(model, codec, data)?;
    let mut best = 0usize;
    for c in 1..scores.len() {
        if scores[c] > scores[best] {
            best = c;
        }
    }
    if scores[best] <= DEGENERATE_ACTIVATION {
        return Err(Error::DegenerateModel {
            threshold: DEGENERATE_ACTIVATION,
        });
    }
    Ok(best)
}

/// Classify a batch of images at once.
///
/// Uses the shared-base class enumeration, so it is much faster than
/// calling [`classify`] per row while agreeing with it on every argmax.
pub fn classify_batch<T: Scalar>(
    model: &NetworkModel<T>,
    codec: &LabelCodec,
    data_rows: &Mat<T>,
) -> Result<Vec<usize>> {
    let acts = model.class_activations(data_rows, codec)?;
    let mut out = Vec::with_capacity(acts.rows());
    for s in 0..acts.rows() {
        let row = acts.row(s);
        let mut best = 0usize;
        for c in 1..row.len() {
            if row[c].as64() > row[best].as64() {
                best = c;
            }
        }
        if row[best].as64() <= DEGENERATE_ACTIVATION {
            return Err(Error::DegenerateModel {
                threshold: DEGENERATE_ACTIVATION,
            });
        }
        out.push(best);
    }
    Ok(out)
}

/// Anomaly score of a sample: its raw output activation. High for inputs
/// like the training data, low for anomalies.
pub fn anomaly_score<T: Scalar>(
    model: &NetworkModel<T>,
    sample: &EncodedSample<T>,
) -> Result<f64> {
    Ok(model.output_activation(sample)?.as64())
}

/// Fraction of input energy that survives to the top layer, in `[0, 1]`
/// for magnitude-preserving stacks. The scale-free sibling of
/// [`anomaly_score`]: identical ranking when all inputs share a norm.
pub fn typicality_score<T: Scalar>(
    model: &NetworkModel<T>,
    sample: &EncodedSample<T>,
) -> Result<f64> {
    Ok(model.normalized_output_activation(sample)?.as64())
}

/// A score below the threshold flags the sample as anomalous. With
/// threshold 0 nothing is flagged (activations are nonnegative); with
/// threshold `+inf` everything is.
pub fn is_anomalous(score: f64, threshold: f64) -> bool {
    score < threshold
}

/// Switches for gradient-ascent synthesis ([`generate`] and [`complete`]).
#[derive(Debug, Clone)]
pub struct GenerateConfig {
    /// Ascent iterations.
    pub steps: usize,
    /// Initial step size each iteration (backtracking may shrink it).
    pub step_size: f64,
    /// L1 sparsity pressure on the normalized image.
    pub l1_beta: f64,
    /// Per-unit objective jitter: unit `i` is weighted `1 + d_i` with
    /// `d_i ~ N(0, noise_std^2)` drawn once per call. Breaks the symmetry
    /// between equally good optima; 0 keeps the objective exact.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            steps: 500,
            step_size: 0.05,
            l1_beta: 0.003,
            noise_std: 0.03,
            seed: 0,
        }
    }
}

impl GenerateConfig {
    fn validate(&self) -> Result<()> {
        if self.step_size <= 0.0 || !self.step_size.is_finite() {
            return Err(Error::NonFinite {
                context: "GenerateConfig: step_size must be positive and finite".into(),
            });
        }
        if self.l1_beta < 0.0 || self.noise_std < 0.0 {
            return Err(Error::NonFinite {
                context: "GenerateConfig: l1_beta and noise_std must be nonnegative".into(),
            });
        }
        Ok(())
    }
}

/// What [`complete`] produced.
#[derive(Debug, Clone)]
pub struct CompletionResult<T> {
    /// The completed image (visible and hidden pixels, jointly unit-norm).
    pub data: Vec<T>,
    /// The class inferred from the visible pixels.
    pub class: usize,
    /// True when the visible pixels carried no energy. The class could not
    /// be inferred, so `data` is a plain generation for class 0.
    pub degenerate: bool,
}

/// The maximization state shared by [`generate`] and [`complete`]: an
/// unnormalized image `z` ascending the objective
///
/// ```text
/// F(z) = sum_i w_i * y_i(v, label)^2  -  beta * |v|_1  [- (|z|^2 - 1)^2]
/// ```
///
/// where `v = z / |z|` is the normalized image the network actually sees
/// and `w_i = 1 + d_i` are the jittered unit weights.
///
/// When every pixel is free (generation) the objective is scale-invariant
/// in `z`, so the last term pins `z` to the unit sphere and keeps the
/// normalization well-conditioned. When some pixels are frozen
/// (completion) the scale redundancy is already gone — there the penalty
/// would *bias* the hidden-to-visible ratio, so it is turned off.
struct Ascent<'m, T: Scalar> {
    model: &'m NetworkModel<T>,
    label: Vec<T>,
    unit_weights: Vec<T>,
    beta: f64,
    /// Pixels the caller fixed; `None` means all pixels are free.
    frozen: Option<Vec<bool>>,
}

impl<'m, T: Scalar> Ascent<'m, T> {
    fn objective(&self, z: &[T]) -> Result<f64> {
        let r2 = norm_sq(z).as64();
        let r = r2.sqrt();
        if r <= 1e-12 {
            return Ok(f64::NEG_INFINITY);
        }
        let mut joint: Vec<T> = z.iter().map(|&v| v / T::from64(r)).collect();
        let mut l1 = 0.0f64;
        for &v in &joint {
            l1 += v.as64().abs();
        }
        joint.extend_from_slice(&self.label);
        let x = Mat::from_rows(&[joint])?;
        let trace = self.model.forward_batch(&x)?;
        let top = trace.output().row(0);
        let mut act = 0.0f64;
        for (y, w) in top.iter().zip(&self.unit_weights) {
            act += w.as64() * y.as64() * y.as64();
        }
        let penalty = if self.frozen.is_none() {
            (r2 - 1.0) * (r2 - 1.0)
        } else {
            0.0
        };
        Ok(act - self.beta * l1 - penalty)
    }

    /// Gradient of the objective with respect to the unnormalized `z`.
    fn gradient(&self, z: &[T]) -> Result<Vec<T>> {
        let r2 = norm_sq(z).as64();
        let r = r2.sqrt();
        if r <= 1e-12 {
            return Err(Error::ZeroNorm {
                context: "generation collapsed to the zero image",
                index: None,
            });
        }
        let v: Vec<T> = z.iter().map(|&x| x / T::from64(r)).collect();
        let mut joint = v.clone();
        joint.extend_from_slice(&self.label);
        let g_joint =
            activation_input_gradient(self.model.layers(), &joint, Some(&self.unit_weights))?;

        // d/dv of (activation - beta * |v|_1), then through v = z / |z|
        // with Jacobian (I - v v^T) / |z|.
        let n = z.len();
        let beta = T::from64(self.beta);
        let mut u: Vec<T> = (0..n)
            .map(|i| g_joint[i] - beta * T::from64(v[i].as64().signum()))
            .collect();
        let uv = dot(&u, &v);
        for i in 0..n {
            u[i] = (u[i] - uv * v[i]) / T::from64(r);
        }
        if let Some(frozen) = &self.frozen {
            for (g, &f) in u.iter_mut().zip(frozen) {
                if f {
                    *g = T::zero();
                }
            }
        } else {
            // Norm penalty: -(r^2 - 1)^2 has gradient -4 (r^2 - 1) z.
            let pen = T::from64(-4.0 * (r2 - 1.0));
            for i in 0..n {
                u[i] = u[i] + pen * z[i];
            }
        }
        Ok(u)
    }

    /// Run `steps` ascent iterations from `z`, halving the step on failure
    /// (up to 30 times per iteration). Stops early once no step improves.
    fn run(&self, mut z: Vec<T>, steps: usize, step_size: f64) -> Result<Vec<T>> {
        let mut f = self.objective(&z)?;
        for _ in 0..steps {
            let g = self.gradient(&z)?;
            let mut alpha = step_size;
            let mut moved = false;
            for _ in 0..30 {
                let cand: Vec<T> = z
                    .iter()
                    .zip(&g)
                    .map(|(&zi, &gi)| zi + T::from64(alpha) * gi)
                    .collect();
                let fc = self.objective(&cand)?;
                if fc > f {
                    z = cand;
                    f = fc;
                    moved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !moved {
                break; // local maximum to within the smallest step
            }
        }
        Ok(z)
    }
}

fn unit_jitter<T: Scalar>(fan_out: usize, noise_std: f64, rng: &mut SeededRng) -> Vec<T> {
    (0..fan_out)
        .map(|_| T::from64(1.0 + rng.gaussian::<f64>(noise_std)))
        .collect()
}

fn renormalized<T: Scalar>(z: &[T]) -> Result<Vec<T>> {
    let r = norm(z).as64();
    if r <= 1e-12 {
        return Err(Error::ZeroNorm {
            context: "generated image has no energy",
            index: None,
        });
    }
    Ok(z.iter().map(|&v| v / T::from64(r)).collect())
}

/// Synthesize a unit-norm image of the given class by ascending the output
/// activation from seeded uniform noise. Deterministic for a fixed seed.
pub fn generate<T: Scalar>(
    model: &NetworkModel<T>,
    codec: &LabelCodec,
    class: usize,
    cfg: &GenerateConfig,
) -> Result<Vec<T>> {
    cfg.validate()?;
    let label: Vec<T> = codec.encode(class)?;
    let label_len = model.layout().label_len();
    if label.len() != label_len {
        return Err(Error::LayoutMismatch {
            expected: label_len,
            got: label.len(),
        });
    }
    let data_len = model.layout().data_len();
    let fan_out = model.layers().last().unwrap().fan_out();
    let mut rng = SeededRng::new(cfg.seed);
    let mut z: Vec<T> = rng.uniform_vec(data_len);
    let r = norm(&z);
    for v in &mut z {
        *v = *v / r;
    }
    let ascent = Ascent {
        model,
        label,
        unit_weights: unit_jitter(fan_out, cfg.noise_std, &mut rng),
        beta: cfg.l1_beta,
        frozen: None,
    };
    let z = ascent.run(z, cfg.steps, cfg.step_size)?;
    renormalized(&z)
}

/// Complete a partially observed image: infer the class from the visible
/// pixels, then ascend only the hidden pixels (the whole image is
/// renormalized jointly, so visible pixels keep their relative values).
///
/// `known[i]` marks pixel `i` as observed with value `data[i]`.
pub fn complete<T: Scalar>(
    model: &NetworkModel<T>,
    codec: &LabelCodec,
    data: &[T],
    known: &[bool],
    cfg: &GenerateConfig,
) -> Result<CompletionResult<T>> {
    cfg.validate()?;
    let data_len = model.layout().data_len();
    if data.len() != data_len || known.len() != data_len {
        return Err(Error::LayoutMismatch {
            expected: data_len,
            got: data.len().max(known.len()),
        });
    }
    let mut visible = vec![T::zero(); data_len];
    for i in 0..data_len {
        if known[i] {
            visible[i] = data[i];
        }
    }
    let vis_norm = norm(&visible).as64();
    if vis_norm <= 1e-12 {
        // Nothing to condition on: fall back to plain generation for an
        // arbitrary class and say so.
        return Ok(CompletionResult {
            data: generate(model, codec, 0, cfg)?,
            class: 0,
            degenerate: true,
        });
    }

    // Step 1: classify from the visible pixels alone (normalized, hidden
    // pixels zero).
    let scaled: Vec<T> = visible.iter().map(|&v| v / T::from64(vis_norm)).collect();
    let class = classify(model, codec, &scaled)?;

    // Step 2: fix the visible pixels (at their normalized values), free the
    // hidden ones, and ascend. The hidden pixels start as small uniform
    // noise so the gradient has something to push on.
    let mut rng = SeededRng::new(cfg.seed);
    let noise: Vec<T> = rng.uniform_vec(data_len);
    let fan_out = model.layers().last().unwrap().fan_out();
    let init_scale = T::from64(0.1 / (data_len as f64).sqrt());
    let mut z = scaled.clone();
    for i in 0..data_len {
        if !known[i] {
            z[i] = noise[i] * init_scale;
        }
    }
    let ascent = Ascent {
        model,
        label: codec.encode(class)?,
        unit_weights: unit_jitter(fan_out, cfg.noise_std, &mut rng),
        beta: cfg.l1_beta,
        frozen: Some(known.to_vec()),
    };
    let z = ascent.run(z, cfg.steps, cfg.step_size)?;
    Ok(CompletionResult {
        data: renormalized(&z)?,
        class,
        degenerate: false,
    })
}
