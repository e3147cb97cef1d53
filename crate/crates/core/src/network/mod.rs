//! Network models: input layout, stacked layers, training loops, scoring.
//!
//! A model owns a stack of layers plus a description of its input — named
//! blocks (image data, optional label rendering) and the normalization
//! policy. Its single scalar output of interest is the *output activation*
//! `||y||^2` of the top layer's linear response: trained on a data
//! distribution, typical inputs land near the subspaces the layers learned
//! and score high, atypical inputs lose energy on the way up.

mod checkpoint;

pub use checkpoint::{checkpoint_bytes, load_checkpoint, parse_checkpoint, save_checkpoint};

use crate::data::{EncodedSample, LabelCodec, NormPolicy};
use crate::error::{Error, Result};
use crate::layers::{forward_stack, Activation, Connectivity, ForwardTrace, LayerState};
use crate::numerics::{norm_sq, Mat, Scalar, SeededRng};

/// What a block of input units carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockRole {
    Data,
    Label,
}

/// One named block of the input vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub name: String,
    pub dims: Vec<usize>,
    pub role: BlockRole,
}

impl Block {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, role: BlockRole) -> Self {
        Block {
            name: name.into(),
            dims,
            role,
        }
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The input layout: a data block, optionally followed by a label block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLayout {
    blocks: Vec<Block>,
}

impl BlockLayout {
    /// First block must be data; at most one label block may follow.
    pub fn new(blocks: Vec<Block>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::EmptyInput("BlockLayout::new"));
        }
        if blocks.iter().any(|b| b.len() == 0) {
            return Err(Error::EmptyInput("BlockLayout::new: zero-sized block"));
        }
        if blocks[0].role != BlockRole::Data {
            return Err(Error::format("layout", "first block must be the data block"));
        }
        let labels = blocks.iter().filter(|b| b.role == BlockRole::Label).count();
        let datas = blocks.iter().filter(|b| b.role == BlockRole::Data).count();
        if datas != 1 || labels > 1 || blocks.len() > 2 {
            return Err(Error::format(
                "layout",
                "expected one data block and at most one label block",
            ));
        }
        Ok(BlockLayout { blocks })
    }

    /// 28x28 image + 10x28 label rendering: 1064 inputs.
    pub fn mnist() -> Self {
        BlockLayout::new(vec![
            Block::new("image", vec![28, 28], BlockRole::Data),
            Block::new("label", vec![10, 28], BlockRole::Label),
        ])
        .expect("static layout")
    }

    /// 28x28 image only, for unlabeled feature learning.
    pub fn mnist_unlabeled() -> Self {
        BlockLayout::new(vec![Block::new("image", vec![28, 28], BlockRole::Data)])
            .expect("static layout")
    }

    /// 3x32x32 image + 10x10 label rendering: 3172 inputs.
    pub fn cifar10() -> Self {
        BlockLayout::new(vec![
            Block::new("image", vec![3, 32, 32], BlockRole::Data),
            Block::new("label", vec![10, 10], BlockRole::Label),
        ])
        .expect("static layout")
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn total_len(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    pub fn data_len(&self) -> usize {
        self.blocks[0].len()
    }

    pub fn data_range(&self) -> std::ops::Range<usize> {
        0..self.data_len()
    }

    pub fn label_len(&self) -> usize {
        self.blocks.get(1).map_or(0, |b| b.len())
    }

    pub fn label_range(&self) -> Option<std::ops::Range<usize>> {
        (self.label_len() > 0).then(|| self.data_len()..self.total_len())
    }

    /// Check that an encoded sample fits this layout.
    pub fn matches<T: Scalar>(&self, sample: &EncodedSample<T>) -> Result<()> {
        if sample.data.len() != self.data_len() {
            return Err(Error::LayoutMismatch {
                expected: self.data_len(),
                got: sample.data.len(),
            });
        }
        let got_label = sample.label.as_ref().map_or(0, |l| l.len());
        if got_label != self.label_len() {
            return Err(Error::LayoutMismatch {
                expected: self.label_len(),
                got: got_label,
            });
        }
        Ok(())
    }
}

/// A stack of layers with its input description.
#[derive(Debug, Clone)]
pub struct NetworkModel<T> {
    layout: BlockLayout,
    policy: NormPolicy,
    layers: Vec<LayerState<T>>,
}

impl<T: Scalar> NetworkModel<T> {
    /// Wire up a model, checking that layer widths chain correctly from the
    /// layout's total input width.
    pub fn new(layout: BlockLayout, policy: NormPolicy, layers: Vec<LayerState<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::EmptyInput("NetworkModel::new"));
        }
        let mut expect = layout.total_len();
        for layer in &layers {
            if layer.fan_in() != expect {
                return Err(Error::LayoutMismatch {
                    expected: expect,
                    got: layer.fan_in(),
                });
            }
            expect = layer.fan_out();
        }
        Ok(NetworkModel {
            layout,
            policy,
            layers,
        })
    }

    /// `n_layers` square fully connected layers of the layout's width, all
    /// with the same activation, weights `N(0, sigma^2)`.
    pub fn fully_connected(
        layout: BlockLayout,
        policy: NormPolicy,
        n_layers: usize,
        act: Activation,
        sigma: f64,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if n_layers == 0 {
            return Err(Error::EmptyInput("NetworkModel::fully_connected"));
        }
        let n = layout.total_len();
        let layers = (0..n_layers)
            .map(|_| {
                LayerState::init(
                    Connectivity::Full {
                        fan_in: n,
                        fan_out: n,
                    },
                    act,
                    rng,
                    sigma,
                )
            })
            .collect();
        NetworkModel::new(layout, policy, layers)
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn policy(&self) -> NormPolicy {
        self.policy
    }

    pub fn layers(&self) -> &[LayerState<T>] {
        &self.layers
    }

    /// Forward a batch of already-assembled input rows.
    pub fn forward_batch(&self, x: &Mat<T>) -> Result<ForwardTrace<T>> {
        forward_stack(&self.layers, x)
    }

    /// Output activation `||y_top||^2` for one encoded sample.
    pub fn output_activation(&self, sample: &EncodedSample<T>) -> Result<T> {
        self.layout.matches(sample)?;
        self.output_activation_raw(&sample.joint())
    }

    /// Output activation for a pre-assembled input vector.
    pub fn output_activation_raw(&self, joint: &[T]) -> Result<T> {
        if joint.len() != self.layout.total_len() {
            return Err(Error::LayoutMismatch {
                expected: self.layout.total_len(),
                got: joint.len(),
            });
        }
        let x = Mat::from_rows(&[joint.to_vec()])?;
        let trace = self.forward_batch(&x)?;
        Ok(norm_sq(trace.output().row(0)))
    }

    /// Output activation divided by the input's squared norm — the scale-free
    /// fraction of input energy that survives to the top.
    pub fn normalized_output_activation(&self, sample: &EncodedSample<T>) -> Result<T> {
        let act = self.output_activation(sample)?;
        let in_sq = sample.input_norm_sq();
        if in_sq.as64() <= 0.0 {
            return Err(Error::ZeroNorm {
                context: "normalized_output_activation",
                index: None,
            });
        }
        Ok(act / in_sq)
    }

    /// Unnormalized log-likelihood `a * activation` with temperature
    /// `a > 0`. Monotone in the output activation, so rankings are
    /// temperature-invariant; at `a = 1` it equals the activation itself.
    pub fn likelihood_score(&self, sample: &EncodedSample<T>, a: f64) -> Result<T> {
        if a <= 0.0 || !a.is_finite() {
            return Err(Error::NonFinite {
                context: "likelihood_score: temperature must be positive and finite".into(),
            });
        }
        let act = self.output_activation(sample)?;
        Ok(T::from64(a * act.as64()))
    }

    /// Output activations for every class pairing: row `s`, column `c` holds
    /// `||y_top||^2` for data row `s` joined with the rendering of class `c`.
    ///
    /// The data part of the input is shared across classes, so the first
    /// layer runs once on `[data, 0]` and per-class label contributions are
    /// added as precomputed row offsets.
    pub fn class_activations(&self, data_rows: &Mat<T>, codec: &LabelCodec) -> Result<Mat<T>> {
        let parts = self.class_forward(data_rows, codec, false)?;
        Ok(parts.activations)
    }

    /// As [`class_activations`](Self::class_activations), but retaining the
    /// full per-class traces for feedback training.
    fn class_forward(
        &self,
        data_rows: &Mat<T>,
        codec: &LabelCodec,
        keep_traces: bool,
    ) -> Result<ClassForward<T>> {
        let label_range = self.layout.label_range().ok_or(Error::EmptyInput(
            "class enumeration needs a label block in the layout",
        ))?;
        if codec.block_len() != label_range.len() {
            return Err(Error::LayoutMismatch {
                expected: label_range.len(),
                got: codec.block_len(),
            });
        }
        if data_rows.cols() != self.layout.data_len() {
            return Err(Error::LayoutMismatch {
                expected: self.layout.data_len(),
                got: data_rows.cols(),
            });
        }
        let b = data_rows.rows();
        let classes = codec.classes();
        let total = self.layout.total_len();

        // Base input: data in place, label block zero.
        let mut x0 = Mat::zeros(b, total);
        for s in 0..b {
            x0.row_mut(s)[..data_rows.cols()].copy_from_slice(data_rows.row(s));
        }
        let base_net = self.layers[0].forward_linear(&x0)?;

        // Per-class first-layer offset: response to [0, label_c].
        let mut label_blocks = Vec::with_capacity(classes);
        let mut offsets = Vec::with_capacity(classes);
        for c in 0..classes {
            let block: Vec<T> = codec.encode(c)?;
            let mut probe = vec![T::zero(); total];
            probe[label_range.clone()].copy_from_slice(&block);
            let probe_mat = Mat::from_rows(&[probe])?;
            offsets.push(self.layers[0].forward_linear(&probe_mat)?);
            label_blocks.push(block);
        }

        let mut activations = Mat::zeros(b, classes);
        let mut traces = Vec::new();
        for c in 0..classes {
            let mut net1 = base_net.clone();
            let off = offsets[c].row(0);
            for s in 0..b {
                for (v, &o) in net1.row_mut(s).iter_mut().zip(off) {
                    *v = *v + o;
                }
            }
            let mut nets = vec![net1];
            let mut posts = Vec::with_capacity(self.layers.len());
            for (l, layer) in self.layers.iter().enumerate() {
                let post = layer.activate(&nets[l])?;
                if l + 1 < self.layers.len() {
                    nets.push(self.layers[l + 1].forward_linear(&post)?);
                }
                posts.push(post);
            }
            let top = nets.last().unwrap();
            for s in 0..b {
                activations[(s, c)] = norm_sq(top.row(s));
            }
            if keep_traces {
                traces.push(ForwardTrace { nets, posts });
            }
        }
        Ok(ClassForward {
            x0,
            label_blocks,
            label_range,
            activations,
            traces,
        })
    }

    fn set_layer(&mut self, l: usize, layer: LayerState<T>) {
        self.layers[l] = layer;
    }
}

/// Everything the per-class forward pass produced.
struct ClassForward<T> {
    /// Assembled `[data, 0]` base input rows.
    x0: Mat<T>,
    /// Encoded label block per class.
    label_blocks: Vec<Vec<T>>,
    label_range: std::ops::Range<usize>,
    /// `B x classes` output activations.
    activations: Mat<T>,
    /// Per-class traces (only when requested).
    traces: Vec<ForwardTrace<T>>,
}

/// How a multi-layer model is trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// All layers update each batch from one shared forward pass.
    Simultaneous,
    /// Train layer 1 to completion on the data, freeze it, train layer 2 on
    /// its outputs, and so on.
    Layerwise,
}

/// Unsupervised training switches.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub eta: f64,
    /// Epochs (per layer, in layerwise mode).
    pub epochs: usize,
    pub batch_size: usize,
    pub mode: TrainMode,
    /// Linear learning-rate decay: the effective rate falls from `eta` to
    /// `eta * (1 - eta_decay)` across the epochs. 0 disables.
    pub eta_decay: f64,
    /// Reshuffle sample order each epoch (seeded).
    pub shuffle: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            eta: 1e-3,
            epochs: 1,
            batch_size: 100,
            mode: TrainMode::Simultaneous,
            eta_decay: 0.0,
            shuffle: true,
            seed: 0,
        }
    }
}

/// Per-epoch training telemetry.
#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: usize,
    /// In layerwise mode, which layer this epoch trained.
    pub layer: Option<usize>,
    /// Mean output activation over the epoch's training batches.
    pub mean_activation: f64,
    /// Mean of activation / input norm^2.
    pub mean_normalized_activation: f64,
}

/// Supervision-by-feedback switches (used on top of [`TrainConfig`]).
#[derive(Debug, Clone)]
pub struct FeedbackConfig {
    /// Strength of the negative (unlearning) term relative to the positive.
    pub lambda: f64,
    /// Gate slope; see [`feedback_gate`].
    pub gate_slope: f64,
    /// Gate intercept.
    pub gate_intercept: f64,
    /// Normalized activation below which the negative term is switched off
    /// for a sample (lets fragile early models grow before unlearning).
    /// 0 disables.
    pub start_threshold: f64,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        FeedbackConfig {
            lambda: 0.9,
            gate_slope: 5.0,
            gate_intercept: 1.0,
            start_threshold: 0.0,
        }
    }
}

/// Per-sample learning-rate gate for feedback training.
///
/// `margin` is how much the best wrong labeling *out-scores* the correct one
/// (wrong minus right, on normalized activations): positive for
/// misclassified samples. The gate is a truncated linear ramp — 1 for clear
/// errors, sliding to 0 once the sample is correct by
/// `intercept / slope` of margin, so confidently-correct samples stop
/// training while errors train at full rate.
pub fn feedback_gate(margin: f64, slope: f64, intercept: f64) -> f64 {
    (slope * margin + intercept).clamp(0.0, 1.0)
}

/// Assemble encoded samples (by index) into a batch matrix of input rows.
pub fn assemble_inputs<T: Scalar>(
    samples: &[EncodedSample<T>],
    idx: &[usize],
    width: usize,
) -> Result<Mat<T>> {
    let mut x = Mat::zeros(idx.len(), width);
    for (r, &i) in idx.iter().enumerate() {
        let joint = samples[i].joint();
        if joint.len() != width {
            return Err(Error::LayoutMismatch {
                expected: width,
                got: joint.len(),
            });
        }
        x.row_mut(r).copy_from_slice(&joint);
    }
    Ok(x)
}

fn epoch_order(n: usize, cfg: &TrainConfig, epoch: usize) -> Vec<usize> {
    if cfg.shuffle {
        SeededRng::new(cfg.seed).derive(epoch as u64 + 1).permutation(n)
    } else {
        (0..n).collect()
    }
}

fn effective_eta(cfg: &TrainConfig, epoch: usize) -> f64 {
    if cfg.epochs <= 1 {
        return cfg.eta;
    }
    let progress = epoch as f64 / (cfg.epochs - 1) as f64;
    cfg.eta * (1.0 - cfg.eta_decay * progress)
}

/// Train every layer with the competitive rule, no labels involved (labels
/// may still be *present* in the input rows — they are just more input).
///
/// The observer runs after each epoch with the updated model and the
/// epoch's stats; returning `false` stops training early.
pub fn train_unsupervised<T: Scalar, F>(
    model: &mut NetworkModel<T>,
    samples: &[EncodedSample<T>],
    cfg: &TrainConfig,
    mut observer: F,
) -> Result<Vec<EpochStats>>
where
    F: FnMut(&NetworkModel<T>, &EpochStats) -> bool,
{
    if samples.is_empty() {
        return Err(Error::EmptyInput("train_unsupervised"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::EmptyInput("train_unsupervised: batch_size"));
    }
    for s in samples {
        model.layout.matches(s)?;
    }
    match cfg.mode {
        TrainMode::Simultaneous => train_simultaneous(model, samples, cfg, &mut observer),
        TrainMode::Layerwise => train_layerwise(model, samples, cfg, &mut observer),
    }
}

fn train_simultaneous<T: Scalar, F>(
    model: &mut NetworkModel<T>,
    samples: &[EncodedSample<T>],
    cfg: &TrainConfig,
    observer: &mut F,
) -> Result<Vec<EpochStats>>
where
    F: FnMut(&NetworkModel<T>, &EpochStats) -> bool,
{
    let width = model.layout.total_len();
    let mut all_stats = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let eta = T::from64(effective_eta(cfg, epoch));
        let order = epoch_order(samples.len(), cfg, epoch);
        let mut act_sum = 0.0f64;
        let mut norm_act_sum = 0.0f64;
        let mut seen = 0usize;
        for (batch_no, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let x0 = assemble_inputs(samples, chunk, width)?;
            let input_sq: Vec<f64> = (0..x0.rows()).map(|s| norm_sq(x0.row(s)).as64()).collect();
            let mut deltas = Vec::with_capacity(model.layers.len());
            let mut x = x0;
            let last = model.layers.len() - 1;
            for (l, layer) in model.layers.iter().enumerate() {
                let net = layer.forward_linear(&x)?;
                deltas.push(
                    layer
                        .delta(&x, &net, eta, None)
                        .map_err(|e| diverged(e, epoch, batch_no))?,
                );
                if l == last {
                    for s in 0..net.rows() {
                        let a = norm_sq(net.row(s)).as64();
                        act_sum += a;
                        if input_sq[s] > 0.0 {
                            norm_act_sum += a / input_sq[s];
                        }
                    }
                } else {
                    x = layer.activate(&net)?;
                }
            }
            for l in 0..model.layers.len() {
                let updated = model.layers[l]
                    .apply_update(&deltas[l])
                    .map_err(|e| diverged(e, epoch, batch_no))?;
                model.set_layer(l, updated);
            }
            seen += chunk.len();
        }
        let stats = EpochStats {
            epoch,
            layer: None,
            mean_activation: act_sum / seen.max(1) as f64,
            mean_normalized_activation: norm_act_sum / seen.max(1) as f64,
        };
        all_stats.push(stats.clone());
        if !observer(model, &stats) {
            break;
        }
    }
    Ok(all_stats)
}

fn diverged(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::NonFinite { .. } => Error::Diverged { epoch, batch },
        other => other,
    }
}

fn train_layerwise<T: Scalar, F>(
    model: &mut NetworkModel<T>,
    samples: &[EncodedSample<T>],
    cfg: &TrainConfig,
    observer: &mut F,
) -> Result<Vec<EpochStats>>
where
    F: FnMut(&NetworkModel<T>, &EpochStats) -> bool,
{
    let width = model.layout.total_len();
    let idx_all: Vec<usize> = (0..samples.len()).collect();
    // Features seen by the layer currently in training; starts as the raw
    // input and advances through each frozen layer.
    let mut feats = assemble_inputs(samples, &idx_all, width)?;
    let mut all_stats = Vec::new();
    let mut global_epoch = 0usize;
    'outer: for l in 0..model.layers.len() {
        for epoch in 0..cfg.epochs {
            let eta = T::from64(effective_eta(cfg, epoch));
            let order = epoch_order(samples.len(), cfg, global_epoch);
            let mut act_sum = 0.0f64;
            let mut norm_act_sum = 0.0f64;
            let mut seen = 0usize;
            for (batch_no, chunk) in order.chunks(cfg.batch_size).enumerate() {
                let mut x = Mat::zeros(chunk.len(), feats.cols());
                for (r, &i) in chunk.iter().enumerate() {
                    x.row_mut(r).copy_from_slice(feats.row(i));
                }
                let layer = &model.layers[l];
                let net = layer.forward_linear(&x)?;
                let delta = layer
                    .delta(&x, &net, eta, None)
                    .map_err(|e| diverged(e, global_epoch, batch_no))?;
                let updated = model.layers[l]
                    .apply_update(&delta)
                    .map_err(|e| diverged(e, global_epoch, batch_no))?;
                model.set_layer(l, updated);
                for s in 0..net.rows() {
                    let a = norm_sq(net.row(s)).as64();
                    let in_sq = norm_sq(x.row(s)).as64();
                    act_sum += a;
                    if in_sq > 0.0 {
                        norm_act_sum += a / in_sq;
                    }
                }
                seen += chunk.len();
            }
            let stats = EpochStats {
                epoch: global_epoch,
                layer: Some(l),
                mean_activation: act_sum / seen.max(1) as f64,
                mean_normalized_activation: norm_act_sum / seen.max(1) as f64,
            };
            global_epoch += 1;
            all_stats.push(stats.clone());
            if !observer(model, &stats) {
                break 'outer;
            }
        }
        // Freeze the trained layer and advance the features through it.
        let layer = &model.layers[l];
        let net = layer.forward_linear(&feats)?;
        feats = layer.activate(&net)?;
    }
    Ok(all_stats)
}

/// Train with labels in the loop: each batch reinforces the correctly
/// labeled pairing and unlearns the strongest wrong labeling, with a
/// per-sample gate that concentrates learning on errors.
///
/// Requires per-block normalization and samples carrying their class.
pub fn train_with_feedback<T: Scalar, F>(
    model: &mut NetworkModel<T>,
    samples: &[EncodedSample<T>],
    codec: &LabelCodec,
    cfg: &TrainConfig,
    fb: &FeedbackConfig,
    mut observer: F,
) -> Result<Vec<EpochStats>>
where
    F: FnMut(&NetworkModel<T>, &EpochStats) -> bool,
{
    if samples.is_empty() {
        return Err(Error::EmptyInput("train_with_feedback"));
    }
    if model.policy != NormPolicy::PerBlock {
        return Err(Error::format(
            "train_with_feedback",
            "feedback training assumes per-block normalization",
        ));
    }
    for s in samples {
        model.layout.matches(s)?;
        if s.class.is_none() {
            return Err(Error::EmptyInput("train_with_feedback: unlabeled sample"));
        }
    }
    let data_len = model.layout.data_len();
    let n_layers = model.layers.len();
    let mut all_stats = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let eta = T::from64(effective_eta(cfg, epoch));
        let order = epoch_order(samples.len(), cfg, epoch);
        let mut act_sum = 0.0f64;
        let mut norm_act_sum = 0.0f64;
        let mut seen = 0usize;

        for (batch_no, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let b = chunk.len();
            let mut data_rows = Mat::zeros(b, data_len);
            for (r, &i) in chunk.iter().enumerate() {
                data_rows.row_mut(r).copy_from_slice(&samples[i].data);
            }
            let cf = model.class_forward(&data_rows, codec, true)?;

            // Per-sample gates from the pre-update activations.
            let mut pos_class = vec![0usize; b];
            let mut neg_class = vec![0usize; b];
            let mut pos_w = vec![T::zero(); b];
            let mut neg_w = vec![T::zero(); b];
            for s in 0..b {
                let truth = samples[chunk[s]].class.unwrap() as usize;
                if truth >= codec.classes() {
                    return Err(Error::NotEnough {
                        context: "train_with_feedback: class out of codec range",
                        requested: truth,
                        available: codec.classes(),
                    });
                }
                let acts = cf.activations.row(s);
                let mut best_wrong = usize::MAX;
                for c in 0..codec.classes() {
                    if c != truth
                        && (best_wrong == usize::MAX || acts[c] > acts[best_wrong])
                    {
                        best_wrong = c;
                    }
                }
                let in_sq = norm_sq(data_rows.row(s)).as64() + 1.0; // unit label block
                let norm_pos = acts[truth].as64() / in_sq;
                let norm_neg = acts[best_wrong].as64() / in_sq;
                let gamma = feedback_gate(norm_neg - norm_pos, fb.gate_slope, fb.gate_intercept);
                let lambda = if norm_pos < fb.start_threshold {
                    0.0
                } else {
                    fb.lambda
                };
                pos_class[s] = truth;
                neg_class[s] = best_wrong;
                pos_w[s] = T::from64(gamma);
                neg_w[s] = T::from64(gamma * lambda);
                act_sum += acts[truth].as64();
                norm_act_sum += norm_pos;
            }
            seen += b;
            if pos_w.iter().all(|w| w.as64() == 0.0) && neg_w.iter().all(|w| w.as64() == 0.0) {
                continue; // every sample correct by margin; nothing to learn
            }

            // Gather per-layer (input, response) pairs for the chosen
            // pairings out of the per-class traces, then one weighted
            // update per side.
            let mut deltas: Vec<Mat<T>> = Vec::with_capacity(n_layers);
            for l in 0..n_layers {
                let gather = |choice: &[usize]| -> (Mat<T>, Mat<T>) {
                    let fan_in = model.layers[l].fan_in();
                    let fan_out = model.layers[l].fan_out();
                    let mut x = Mat::zeros(b, fan_in);
                    let mut net = Mat::zeros(b, fan_out);
                    for s in 0..b {
                        let c = choice[s];
                        if l == 0 {
                            let row = x.row_mut(s);
                            row[..data_len].copy_from_slice(&cf.x0.row(s)[..data_len]);
                            row[cf.label_range.clone()].copy_from_slice(&cf.label_blocks[c]);
                        } else {
                            x.row_mut(s).copy_from_slice(cf.traces[c].posts[l - 1].row(s));
                        }
                        net.row_mut(s).copy_from_slice(cf.traces[c].nets[l].row(s));
                    }
                    (x, net)
                };
                let (x_pos, net_pos) = gather(&pos_class);
                let (x_neg, net_neg) = gather(&neg_class);
                let d_pos = model.layers[l]
                    .delta(&x_pos, &net_pos, eta, Some(&pos_w))
                    .map_err(|e| diverged(e, epoch, batch_no))?;
                let d_neg = model.layers[l]
                    .delta(&x_neg, &net_neg, eta, Some(&neg_w))
                    .map_err(|e| diverged(e, epoch, batch_no))?;
                deltas.push(d_pos.sub(&d_neg)?);
            }
            for l in 0..n_layers {
                let updated = model.layers[l]
                    .apply_update(&deltas[l])
                    .map_err(|e| diverged(e, epoch, batch_no))?;
                model.set_layer(l, updated);
            }
        }

        let stats = EpochStats {
            epoch,
            layer: None,
            mean_activation: act_sum / seen.max(1) as f64,
            mean_normalized_activation: norm_act_sum / seen.max(1) as f64,
        };
        all_stats.push(stats.clone());
        if !observer(model, &stats) {
            break;
        }
    }
    Ok(all_stats)
}
