//! What did the units learn? Input-gradient portraits of the most active
//! units of a layer, rendered as a tiled PGM grid plus raw CSV.
//!
//! For each selected unit the portrait is the gradient of that unit's
//! squared linear response with respect to the input, evaluated at the
//! training sample that excites the unit most. For a single identity
//! layer this is exactly the unit's weight vector (times `2 y_u`), so the
//! portraits degrade gracefully into familiar weight images.

use std::path::Path;

use actlearn::layers::{activation_input_gradient, forward_stack};
use actlearn::numerics::Mat;
use actlearn::Model32;
use anyhow::{bail, Context, Result};
use serde::Serialize;

use crate::datasets::LoadedData;
use crate::images;

pub struct FeatureSelection {
    /// Which layer's units to portray (0-based).
    pub layer: usize,
    /// How many units, most active first.
    pub units: usize,
    /// Cap on how many training samples to probe for activity ranking.
    pub probe_samples: usize,
}

#[derive(Debug, Serialize)]
pub struct UnitFeature {
    pub unit: usize,
    /// Mean `|linear response|` over the probe set.
    pub mean_activation: f64,
    /// Probe-set index of the sample that excites this unit most.
    pub probe_index: usize,
}

#[derive(Debug, Serialize)]
pub struct FeatureReport {
    pub layer: usize,
    pub layer_width: usize,
    pub probed: usize,
    pub grid_pgm: String,
    pub grid_csv: String,
    pub units: Vec<UnitFeature>,
}

/// Rank units of `sel.layer` by mean activity over the training set and
/// write their input-gradient portraits into `out`.
pub fn visualize(
    model: &Model32,
    data: &LoadedData,
    sel: &FeatureSelection,
    out: &Path,
) -> Result<FeatureReport> {
    let layers = model.layers();
    if sel.layer >= layers.len() {
        bail!(
            "layer {} out of range: model has {} layers",
            sel.layer,
            layers.len()
        );
    }
    let stack = &layers[..=sel.layer];
    let width = stack.last().unwrap().fan_out();
    if sel.units == 0 {
        bail!("need at least one unit to visualize");
    }

    let probe = if !data.train.is_empty() {
        &data.train
    } else {
        &data.test
    };
    if probe.is_empty() {
        bail!("no samples to probe unit activity with");
    }
    let n = probe.len().min(sel.probe_samples.max(1));

    // Mean |net| per unit, and each unit's most exciting sample.
    let mut mean_abs = vec![0.0f64; width];
    let mut best_val = vec![f64::NEG_INFINITY; width];
    let mut best_idx = vec![0usize; width];
    let mut seen = 0usize;
    for (chunk_no, chunk) in probe[..n].chunks(512).enumerate() {
        let rows: Vec<Vec<f32>> = chunk.iter().map(|s| s.joint()).collect();
        let x = Mat::from_rows(&rows)?;
        let trace = forward_stack(stack, &x)?;
        let nets = trace.nets.last().unwrap();
        for r in 0..nets.rows() {
            let global = chunk_no * 512 + r;
            for (u, &v) in nets.row(r).iter().enumerate() {
                let a = (v as f64).abs();
                mean_abs[u] += a;
                if a > best_val[u] {
                    best_val[u] = a;
                    best_idx[u] = global;
                }
            }
        }
        seen += chunk.len();
    }
    for m in &mut mean_abs {
        *m /= seen as f64;
    }

    let mut order: Vec<usize> = (0..width).collect();
    order.sort_by(|&a, &b| mean_abs[b].total_cmp(&mean_abs[a]).then(a.cmp(&b)));
    order.truncate(sel.units.min(width));

    let shape = data.raw_train.shape;
    let data_len = model.layout().data_len();
    let mut tiles: Vec<Vec<f32>> = Vec::with_capacity(order.len());
    let mut units = Vec::with_capacity(order.len());
    for &u in &order {
        let x = probe[best_idx[u]].joint();
        let mut one_hot = vec![0.0f32; width];
        one_hot[u] = 1.0;
        let grad = activation_input_gradient(stack, &x, Some(&one_hot))?;
        let img = &grad[..data_len];
        // Multi-channel gradients collapse to one grey plane for the grid;
        // the CSV keeps every channel.
        let tile: Vec<f32> = if shape.channels == 1 {
            img.to_vec()
        } else {
            let plane = shape.height * shape.width;
            (0..plane)
                .map(|p| {
                    (0..shape.channels).map(|c| img[c * plane + p]).sum::<f32>()
                        / shape.channels as f32
                })
                .collect()
        };
        tiles.push(tile);
        units.push(UnitFeature {
            unit: u,
            mean_activation: mean_abs[u],
            probe_index: best_idx[u],
        });
    }

    std::fs::create_dir_all(out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    let grid_name = format!("features_layer{}.pgm", sel.layer);
    let csv_name = format!("features_layer{}.csv", sel.layer);
    let cols = (tiles.len() as f64).sqrt().ceil() as usize;
    let grey_shape = actlearn::data::ImageShape::new(shape.height, shape.width, 1);
    images::write_grid_pgm(&out.join(&grid_name), &tiles, grey_shape, cols)?;

    // One CSV row per unit: unit id, then the raw gradient values.
    let mut csv = String::new();
    for (uf, &u) in units.iter().zip(&order) {
        let x = probe[uf.probe_index].joint();
        let mut one_hot = vec![0.0f32; width];
        one_hot[u] = 1.0;
        let grad = activation_input_gradient(stack, &x, Some(&one_hot))?;
        let vals: Vec<String> = grad[..data_len].iter().map(|v| format!("{v:.6}")).collect();
        csv.push_str(&format!("{},{}\n", u, vals.join(",")));
    }
    std::fs::write(out.join(&csv_name), csv)?;

    Ok(FeatureReport {
        layer: sel.layer,
        layer_width: width,
        probed: seen,
        grid_pgm: grid_name,
        grid_csv: csv_name,
        units,
    })
}
