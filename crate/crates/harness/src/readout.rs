//! Linear probe: how linearly separable are a model's features?
//!
//! A single linear layer with softmax cross-entropy, trained by plain
//! mini-batch gradient descent, scores either raw (normalized) pixels or
//! any layer's activations. The probe itself is deliberately unclever so
//! differences in its error reflect the features, not the probe.

use actlearn::data::EncodedSample;
use actlearn::layers::forward_stack;
use actlearn::numerics::{Mat, SeededRng};
use actlearn::Model32;
use anyhow::{bail, Result};
use serde::Serialize;

#[derive(Debug, Clone)]
pub struct ReadoutConfig {
    pub step: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for ReadoutConfig {
    fn default() -> Self {
        ReadoutConfig {
            step: 0.1,
            epochs: 100,
            batch: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ReadoutResult {
    pub test_error: f64,
    pub best_val_error: f64,
    pub best_epoch: usize,
    pub classes: usize,
    pub feature_dim: usize,
}

/// One labeled feature set: row-major features plus class per row.
pub struct FeatureSet {
    pub x: Vec<Vec<f32>>,
    pub y: Vec<u8>,
}

impl FeatureSet {
    fn check(&self, name: &str, dim: usize, classes: usize) -> Result<()> {
        if self.x.len() != self.y.len() {
            bail!("{name}: {} feature rows vs {} labels", self.x.len(), self.y.len());
        }
        if self.x.is_empty() {
            bail!("{name}: empty feature set");
        }
        for (i, row) in self.x.iter().enumerate() {
            if row.len() != dim {
                bail!("{name}: row {i} has {} values, expected {dim}", row.len());
            }
        }
        if let Some(&c) = self.y.iter().find(|&&c| c as usize >= classes) {
            bail!("{name}: label {c} out of range for {classes} classes");
        }
        Ok(())
    }
}

/// The encoded image part, as-is (unit-normalized by the encoder).
pub fn raw_features(samples: &[EncodedSample<f32>]) -> Result<FeatureSet> {
    let mut x = Vec::with_capacity(samples.len());
    let mut y = Vec::with_capacity(samples.len());
    for s in samples {
        let Some(c) = s.class else {
            bail!("raw_features: sample without a class label");
        };
        x.push(s.data.clone());
        y.push(c);
    }
    Ok(FeatureSet { x, y })
}

/// Activations of `model`'s layer `layer` (0-based, post-activation),
/// computed on the samples' data blocks. The model must be unlabeled
/// (input = image only) so features do not leak the class.
pub fn layer_features(
    model: &Model32,
    layer: usize,
    samples: &[EncodedSample<f32>],
) -> Result<FeatureSet> {
    if model.layout().label_len() != 0 {
        bail!("layer_features: the feature extractor must not have a label block");
    }
    if layer >= model.layers().len() {
        bail!(
            "layer {layer} out of range: extractor has {} layers",
            model.layers().len()
        );
    }
    let stack = &model.layers()[..=layer];
    let mut x = Vec::with_capacity(samples.len());
    let mut y = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(1000) {
        let rows: Vec<Vec<f32>> = chunk.iter().map(|s| s.data.clone()).collect();
        let mat = Mat::from_rows(&rows)?;
        let trace = forward_stack(stack, &mat)?;
        let posts = trace.posts.last().unwrap();
        for (r, s) in chunk.iter().enumerate() {
            let Some(c) = s.class else {
                bail!("layer_features: sample without a class label");
            };
            x.push(posts.row(r).to_vec());
            y.push(c);
        }
    }
    Ok(FeatureSet { x, y })
}

/// Weights are `(dim + 1) x classes`, the extra row being the bias.
struct Linear {
    w: Vec<f64>,
    dim: usize,
    classes: usize,
}

impl Linear {
    fn zeros(dim: usize, classes: usize) -> Self {
        Linear {
            w: vec![0.0; (dim + 1) * classes],
            dim,
            classes,
        }
    }

    fn logits(&self, x: &[f32], out: &mut [f64]) {
        for c in 0..self.classes {
            out[c] = self.w[self.dim * self.classes + c];
        }
        for (k, &v) in x.iter().enumerate() {
            if v != 0.0 {
                let row = &self.w[k * self.classes..(k + 1) * self.classes];
                let v = v as f64;
                for c in 0..self.classes {
                    out[c] += v * row[c];
                }
            }
        }
    }

    fn predict(&self, x: &[f32], scratch: &mut [f64]) -> usize {
        self.logits(x, scratch);
        let mut best = 0;
        for c in 1..self.classes {
            if scratch[c] > scratch[best] {
                best = c;
            }
        }
        best
    }

    fn error_rate(&self, set: &FeatureSet) -> f64 {
        let mut scratch = vec![0.0; self.classes];
        let wrong = set
            .x
            .iter()
            .zip(&set.y)
            .filter(|(x, &y)| self.predict(x, &mut scratch) != y as usize)
            .count();
        wrong as f64 / set.x.len() as f64
    }
}

/// Train the probe on `train`, select the best epoch by `val` error, and
/// report the selected model's `test` error.
pub fn train_readout(
    train: &FeatureSet,
    val: &FeatureSet,
    test: &FeatureSet,
    classes: usize,
    cfg: &ReadoutConfig,
) -> Result<ReadoutResult> {
    if classes < 2 {
        bail!("need at least two classes");
    }
    let dim = train.x.first().map(|r| r.len()).unwrap_or(0);
    train.check("train", dim, classes)?;
    val.check("validation", dim, classes)?;
    test.check("test", dim, classes)?;
    if cfg.batch == 0 || cfg.epochs == 0 || cfg.step <= 0.0 {
        bail!("readout config needs positive step, epochs, and batch");
    }

    let mut lin = Linear::zeros(dim, classes);
    let mut best = lin.w.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut rng = SeededRng::new(cfg.seed);
    let mut order: Vec<usize> = (0..train.x.len()).collect();
    let mut probs = vec![0.0f64; classes];

    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch) {
            // Accumulate the mean cross-entropy gradient over the batch.
            let mut grad = vec![0.0f64; (dim + 1) * classes];
            for &idx in chunk {
                let x = &train.x[idx];
                lin.logits(x, &mut probs);
                let max = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for p in probs.iter_mut() {
                    *p = (*p - max).exp();
                    z += *p;
                }
                for p in probs.iter_mut() {
                    *p /= z;
                }
                probs[train.y[idx] as usize] -= 1.0;
                for (k, &v) in x.iter().enumerate() {
                    if v != 0.0 {
                        let v = v as f64;
                        let row = &mut grad[k * classes..(k + 1) * classes];
                        for c in 0..classes {
                            row[c] += v * probs[c];
                        }
                    }
                }
                let bias = &mut grad[dim * classes..];
                for c in 0..classes {
                    bias[c] += probs[c];
                }
            }
            let scale = cfg.step / chunk.len() as f64;
            for (w, g) in lin.w.iter_mut().zip(&grad) {
                *w -= scale * g;
            }
        }
        let val_err = lin.error_rate(val);
        if val_err < best_val {
            best_val = val_err;
            best_epoch = epoch;
            best.copy_from_slice(&lin.w);
        }
    }

    lin.w.copy_from_slice(&best);
    Ok(ReadoutResult {
        test_error: lin.error_rate(test),
        best_val_error: best_val,
        best_epoch,
        classes,
        feature_dim: dim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two well-separated Gaussian blobs in 4-d must be almost perfectly
    /// linearly separable; a third overlapping pair must not be.
    fn blob_set(n_per: usize, centers: &[[f64; 4]], sd: f64, seed: u64) -> FeatureSet {
        let mut rng = SeededRng::new(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..n_per {
                x.push(
                    center
                        .iter()
                        .map(|&m| (m + rng.standard_normal() * sd) as f32)
                        .collect(),
                );
                y.push(c as u8);
            }
        }
        FeatureSet { x, y }
    }

    const CENTERS: [[f64; 4]; 2] = [[1.0, 0.0, -1.0, 0.5], [-1.0, 0.5, 1.0, -0.5]];

    #[test]
    fn separable_blobs_reach_near_zero_error() {
        let train = blob_set(200, &CENTERS, 0.3, 1);
        let val = blob_set(50, &CENTERS, 0.3, 2);
        let test = blob_set(100, &CENTERS, 0.3, 3);
        let cfg = ReadoutConfig {
            epochs: 50,
            ..ReadoutConfig::default()
        };
        let res = train_readout(&train, &val, &test, 2, &cfg).unwrap();
        assert!(res.test_error < 0.02, "test error {}", res.test_error);
        assert!(res.best_epoch >= 1);
        assert_eq!(res.feature_dim, 4);
    }

    #[test]
    fn overlapping_blobs_stay_hard() {
        let train = blob_set(200, &CENTERS, 4.0, 1);
        let val = blob_set(50, &CENTERS, 4.0, 2);
        let test = blob_set(100, &CENTERS, 4.0, 3);
        let res = train_readout(&train, &val, &test, 2, &ReadoutConfig::default()).unwrap();
        assert!(
            res.test_error > 0.15,
            "overlapping blobs should not separate: {}",
            res.test_error
        );
    }

    #[test]
    fn same_seed_reproduces_identically() {
        let train = blob_set(100, &CENTERS, 0.5, 1);
        let val = blob_set(30, &CENTERS, 0.5, 2);
        let test = blob_set(50, &CENTERS, 0.5, 3);
        let cfg = ReadoutConfig {
            epochs: 20,
            ..ReadoutConfig::default()
        };
        let a = train_readout(&train, &val, &test, 2, &cfg).unwrap();
        let b = train_readout(&train, &val, &test, 2, &cfg).unwrap();
        assert_eq!(a.test_error, b.test_error);
        assert_eq!(a.best_val_error, b.best_val_error);
        assert_eq!(a.best_epoch, b.best_epoch);
    }

    #[test]
    fn mismatched_rows_are_rejected() {
        let train = FeatureSet {
            x: vec![vec![0.0; 4], vec![0.0; 3]],
            y: vec![0, 1],
        };
        let val = blob_set(10, &CENTERS, 0.5, 2);
        let test = blob_set(10, &CENTERS, 0.5, 3);
        let err = train_readout(&train, &val, &test, 2, &ReadoutConfig::default()).unwrap_err();
        assert!(err.to_string().contains("row 1"));
    }

    #[test]
    fn out_of_range_label_is_rejected() {
        let train = FeatureSet {
            x: vec![vec![0.0; 4], vec![0.0; 4]],
            y: vec![0, 5],
        };
        let val = blob_set(10, &CENTERS, 0.5, 2);
        let test = blob_set(10, &CENTERS, 0.5, 3);
        let err = train_readout(&train, &val, &test, 2, &ReadoutConfig::default()).unwrap_err();
        assert!(err.to_string().contains("label 5"));
    }
}
