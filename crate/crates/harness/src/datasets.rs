//! Dataset resolution: locate the files, load, restrict, split, encode.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use actlearn::data::{
    encode_dataset, few_shot_subset, load_cifar10, load_mnist, split_validation, Dataset,
    EncodedSample, LabelCodec, NormPolicy,
};
use actlearn::network::{Block, BlockLayout, BlockRole};
use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};

use crate::config::Config;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Mnist,
    Cifar10,
}

/// Which data to train and evaluate on, resolved from config keys under
/// `dataset.`.
#[derive(Debug, Clone)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    /// Append the rendered label block to each input (classification runs);
    /// false trains on bare images (unsupervised feature runs).
    pub labeled: bool,
    /// Keep only these classes, relabeled to 0..k (empty = all).
    pub classes: Vec<u8>,
    /// Balanced cap: keep this many training samples per class (0 = all).
    pub per_class: usize,
    /// Unbalanced cap applied after everything else (0 = all).
    pub train_limit: usize,
    /// Validation split carved from the training set (0 = none).
    pub validation: usize,
}

impl DatasetSpec {
    pub fn resolve(cfg: &mut Config) -> Result<DatasetSpec> {
        let kind = match cfg.str("dataset.kind")?.as_str() {
            "mnist" => DatasetKind::Mnist,
            "cifar10" => DatasetKind::Cifar10,
            other => bail!("dataset.kind: `{other}` is not `mnist` or `cifar10`"),
        };
        let classes_raw = cfg.str_or("dataset.classes", "");
        let mut classes = Vec::new();
        if !classes_raw.is_empty() {
            for part in classes_raw.split(',') {
                let c: u8 = part
                    .trim()
                    .parse()
                    .with_context(|| format!("dataset.classes: `{part}` is not a class id"))?;
                classes.push(c);
            }
        }
        Ok(DatasetSpec {
            kind,
            labeled: cfg.bool_or("dataset.labeled", true)?,
            classes,
            per_class: cfg.usize_or("dataset.per_class", 0)?,
            train_limit: cfg.usize_or("dataset.train_limit", 0)?,
            validation: cfg.usize_or("dataset.validation", 0)?,
        })
    }

    pub fn class_count(&self) -> usize {
        if self.classes.is_empty() {
            10
        } else {
            self.classes.len()
        }
    }

    /// Label codec for this dataset, honoring class restriction. The label
    /// block keeps the dataset's native row width.
    pub fn codec(&self) -> Option<LabelCodec> {
        if !self.labeled {
            return None;
        }
        let width = match self.kind {
            DatasetKind::Mnist => 28,
            DatasetKind::Cifar10 => 10,
        };
        Some(LabelCodec::new(self.class_count(), width))
    }

    /// Image grid `(height, width, channels)` for local connectivity.
    pub fn grid(&self) -> (usize, usize, usize) {
        match self.kind {
            DatasetKind::Mnist => (28, 28, 1),
            DatasetKind::Cifar10 => (32, 32, 3),
        }
    }

    /// Block layout matching [`DatasetSpec::codec`].
    pub fn layout(&self) -> BlockLayout {
        let data = match self.kind {
            DatasetKind::Mnist => Block::new("image", vec![28, 28], BlockRole::Data),
            DatasetKind::Cifar10 => Block::new("image", vec![3, 32, 32], BlockRole::Data),
        };
        let mut blocks = vec![data];
        if let Some(codec) = self.codec() {
            blocks.push(Block::new(
                "label",
                vec![codec.classes(), codec.width()],
                BlockRole::Label,
            ));
        }
        BlockLayout::new(blocks).expect("preset layouts are valid")
    }

    /// The files this dataset reads, relative to the dataset directory.
    /// Compressed (`.gz`) variants are preferred when present.
    pub fn files(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let names: &[&str] = match self.kind {
            DatasetKind::Mnist => &[
                "train-images-idx3-ubyte",
                "train-labels-idx1-ubyte",
                "t10k-images-idx3-ubyte",
                "t10k-labels-idx1-ubyte",
            ],
            DatasetKind::Cifar10 => &[
                "data_batch_1.bin",
                "data_batch_2.bin",
                "data_batch_3.bin",
                "data_batch_4.bin",
                "data_batch_5.bin",
                "test_batch.bin",
            ],
        };
        names
            .iter()
            .map(|name| {
                let gz = dir.join(format!("{name}.gz"));
                if gz.is_file() {
                    return Ok(gz);
                }
                let plain = dir.join(name);
                if plain.is_file() {
                    return Ok(plain);
                }
                bail!(
                    "dataset file `{name}` not found in {} (looked for `{name}` and `{name}.gz`)",
                    dir.display()
                )
            })
            .collect()
    }
}

/// Encoded datasets ready for training plus everything needed to interpret
/// them.
pub struct LoadedData {
    pub train: Vec<EncodedSample<f32>>,
    pub validation: Vec<EncodedSample<f32>>,
    pub test: Vec<EncodedSample<f32>>,
    pub codec: Option<LabelCodec>,
    pub layout: BlockLayout,
    /// Raw (pre-encoding) training and test sets, kept for transforms that
    /// operate on pixels (masking, lines, augmentation).
    pub raw_train: Dataset,
    pub raw_test: Dataset,
}

/// Load, restrict, split, and encode as the `DatasetSpec` describes. The
/// seed drives the validation split and the balanced subset; everything
/// else is deterministic file order.
pub fn load(spec: &DatasetSpec, dir: &Path, seed: u64) -> Result<LoadedData> {
    let files = spec.files(dir)?;
    let (mut train_raw, test_raw) = match spec.kind {
        DatasetKind::Mnist => {
            let train = load_mnist(&files[0], &files[1]).context("loading MNIST training set")?;
            let test = load_mnist(&files[2], &files[3]).context("loading MNIST test set")?;
            (train, test)
        }
        DatasetKind::Cifar10 => {
            let train = load_cifar10(&files[..5]).context("loading CIFAR-10 training batches")?;
            let test = load_cifar10(&files[5..]).context("loading CIFAR-10 test batch")?;
            (train, test)
        }
    };
    let mut test_raw = test_raw;

    if !spec.classes.is_empty() {
        train_raw = train_raw.filter_and_relabel(&spec.classes);
        test_raw = test_raw.filter_and_relabel(&spec.classes);
        if train_raw.is_empty() || test_raw.is_empty() {
            bail!("class restriction left no samples");
        }
    }
    if spec.per_class > 0 {
        train_raw = few_shot_subset(&train_raw, spec.class_count(), spec.per_class, seed)?;
    }
    let (mut train_raw, val_raw) = if spec.validation > 0 {
        split_validation(&train_raw, spec.validation, seed)?
    } else {
        let empty = train_raw.subset(&[]);
        (train_raw, empty)
    };
    if spec.train_limit > 0 && spec.train_limit < train_raw.len() {
        let keep: Vec<usize> = (0..spec.train_limit).collect();
        train_raw = train_raw.subset(&keep);
    }

    let codec = spec.codec();
    let policy = NormPolicy::PerBlock;
    let train = encode_dataset(&train_raw, codec.as_ref(), policy)?;
    let validation = encode_dataset(&val_raw, codec.as_ref(), policy)?;
    let test = encode_dataset(&test_raw, codec.as_ref(), policy)?;
    Ok(LoadedData {
        train,
        validation,
        test,
        codec,
        layout: spec.layout(),
        raw_train: train_raw,
        raw_test: test_raw,
    })
}

/// The test set re-encoded after a pixel corruption: bottom-mask by ratio
/// and/or random lines of the given width (0 disables each). Samples whose
/// image the corruption zeroes entirely are dropped (they cannot be
/// normalized), which the caller sees via the returned count.
pub fn corrupted_test(
    data: &LoadedData,
    mask_ratio: f64,
    line_width: usize,
    seed: u64,
) -> Result<Vec<EncodedSample<f32>>> {
    use actlearn::data::{add_random_lines, encode_sample, mask_bottom};
    let shape = data.raw_test.shape;
    let mut rng = actlearn::numerics::SeededRng::new(seed);
    let mut out = Vec::with_capacity(data.raw_test.len());
    for img in data.raw_test.iter() {
        let mut img = img.clone();
        if mask_ratio > 0.0 {
            img = mask_bottom(&img, shape, mask_ratio)?;
        }
        if line_width > 0 {
            img = add_random_lines(&img, shape, line_width, &mut rng)?;
        }
        match encode_sample::<f32>(&img, data.codec.as_ref(), NormPolicy::PerBlock) {
            Ok(s) => out.push(s),
            Err(actlearn::Error::ZeroNorm { .. }) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    if out.is_empty() {
        bail!("corruption left no usable test samples");
    }
    Ok(out)
}

/// SHA-256 of each dataset file, keyed by file name — the manifest's record
/// of exactly which bytes the run saw.
pub fn content_hashes(spec: &DatasetSpec, dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for path in spec.files(dir)? {
        let bytes = std::fs::read(&path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        let digest = Sha256::digest(&bytes);
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        out.insert(name, format!("{digest:x}"));
    }
    Ok(out)
}
