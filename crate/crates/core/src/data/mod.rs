//! Datasets, label encoding, input normalization and image transforms.
//!
//! Raw images are stored with pixels in `[0, 1]`; all normalization happens
//! at the encoding boundary, where an image (and optionally its label,
//! rendered as a block of active units) becomes the network's input vector.

mod cifar;
mod encode;
mod idx;
mod transform;

pub use cifar::load_cifar10;
pub use encode::{encode_dataset, encode_sample, EncodedSample, LabelCodec, NormPolicy};
pub use idx::load_mnist;
pub use transform::{add_random_lines, augment_crop_flip, crop_flip, mask_bottom};

use crate::error::{Error, Result};
use crate::numerics::SeededRng;

/// Spatial shape of one image, stored channel-planar
/// (index `ch * H * W + r * W + c`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageShape {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        ImageShape {
            height,
            width,
            channels,
        }
    }

    /// Number of pixel values per image.
    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One image with pixels in `[0, 1]` and an optional class label.
#[derive(Debug, Clone, PartialEq)]
pub struct RawImage {
    pub pixels: Vec<f32>,
    pub label: Option<u8>,
}

/// A set of images of one shape.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub shape: ImageShape,
    samples: Vec<RawImage>,
}

impl Dataset {
    /// Validates that every image matches the shape and has nonzero energy
    /// (an all-black image cannot be normalized later).
    pub fn new(name: impl Into<String>, shape: ImageShape, samples: Vec<RawImage>) -> Result<Self> {
        let name = name.into();
        for (i, s) in samples.iter().enumerate() {
            if s.pixels.len() != shape.len() {
                return Err(Error::LayoutMismatch {
                    expected: shape.len(),
                    got: s.pixels.len(),
                });
            }
            if !s.pixels.iter().any(|&p| p != 0.0) {
                return Err(Error::ZeroNorm {
                    context: "Dataset::new: all-zero image",
                    index: Some(i),
                });
            }
        }
        Ok(Dataset {
            name,
            shape,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, i: usize) -> &RawImage {
        &self.samples[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, RawImage> {
        self.samples.iter()
    }

    /// Count of samples per class over `0..classes`; unlabeled samples are
    /// ignored.
    pub fn class_histogram(&self, classes: usize) -> Vec<usize> {
        let mut h = vec![0usize; classes];
        for s in &self.samples {
            if let Some(l) = s.label {
                if (l as usize) < classes {
                    h[l as usize] += 1;
                }
            }
        }
        h
    }

    /// New dataset with the samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            shape: self.shape,
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    /// Keep only the listed classes, relabeled to their position in
    /// `classes` (e.g. `[3, 7]` becomes a binary task with labels 0 and 1).
    pub fn filter_and_relabel(&self, classes: &[u8]) -> Dataset {
        let samples = self
            .samples
            .iter()
            .filter_map(|s| {
                let old = s.label?;
                let new = classes.iter().position(|&c| c == old)? as u8;
                Some(RawImage {
                    pixels: s.pixels.clone(),
                    label: Some(new),
                })
            })
            .collect();
        Dataset {
            name: self.name.clone(),
            shape: self.shape,
            samples,
        }
    }

    /// Apply a transform to every image.
    pub fn map(&self, mut f: impl FnMut(&RawImage) -> RawImage) -> Dataset {
        Dataset {
            name: self.name.clone(),
            shape: self.shape,
            samples: self.samples.iter().map(|s| f(s)).collect(),
        }
    }

    /// Same images with a different declared shape (after cropping etc.).
    pub fn with_shape(self, shape: ImageShape) -> Result<Dataset> {
        Dataset::new(self.name.clone(), shape, self.samples)
    }
}

/// Seeded split into `(rest, validation)` with `val_n` validation samples.
///
/// The permutation is drawn from the seed, so the same seed always yields
/// the same split.
pub fn split_validation(ds: &Dataset, val_n: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if val_n > ds.len() {
        return Err(Error::NotEnough {
            context: "split_validation",
            requested: val_n,
            available: ds.len(),
        });
    }
    let mut rng = SeededRng::new(seed);
    let perm = rng.permutation(ds.len());
    let val = ds.subset(&perm[..val_n]);
    let rest = ds.subset(&perm[val_n..]);
    Ok((rest, val))
}

/// Seeded balanced subset: `per_class` samples of each class in
/// `0..classes`, ordered class-major.
///
/// Selection per class is an independent stream of the seed, so the subset
/// for a larger `per_class` is a superset of the one for a smaller count —
/// few-shot pools nest.
pub fn few_shot_subset(
    ds: &Dataset,
    classes: usize,
    per_class: usize,
    seed: u64,
) -> Result<Dataset> {
    let root = SeededRng::new(seed);
    let mut picks = Vec::with_capacity(classes * per_class);
    for c in 0..classes {
        let mut idx: Vec<usize> = (0..ds.len())
            .filter(|&i| ds.get(i).label == Some(c as u8))
            .collect();
        if idx.len() < per_class {
            return Err(Error::NotEnough {
                context: "few_shot_subset",
                requested: per_class,
                available: idx.len(),
            });
        }
        let mut rng = root.derive(c as u64);
        rng.shuffle(&mut idx);
        picks.extend_from_slice(&idx[..per_class]);
    }
    Ok(ds.subset(&picks))
}
