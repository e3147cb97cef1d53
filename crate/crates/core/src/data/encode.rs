//! From raw images to network input vectors.
//!
//! The network's input is the concatenation of a data block (the image) and,
//! for labeled training and label-enumeration inference, a label block in
//! which the chosen class lights up a group of units. Labels enter through
//! the same door as pixels — there is no separate supervision channel.

use super::{Dataset, RawImage};
use crate::error::{Error, Result};
use crate::numerics::{norm_sq, Scalar};

/// How the concatenated input is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormPolicy {
    /// Each block to unit norm independently (`||x||^2` = number of blocks).
    /// The default: data and label carry equal energy.
    PerBlock,
    /// The whole concatenation to unit norm.
    Joint,
}

impl NormPolicy {
    pub fn tag(&self) -> u8 {
        match self {
            NormPolicy::PerBlock => 0,
            NormPolicy::Joint => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(NormPolicy::PerBlock),
            1 => Some(NormPolicy::Joint),
            _ => None,
        }
    }
}

/// Renders class labels as blocks of active units.
///
/// Class `c` activates units `c * width .. (c+1) * width` of a block of
/// `classes * width` units; the block is then normalized, so each active
/// unit carries `1 / sqrt(width)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelCodec {
    classes: usize,
    width: usize,
}

impl LabelCodec {
    pub fn new(classes: usize, width: usize) -> Self {
        assert!(classes > 0 && width > 0);
        LabelCodec { classes, width }
    }

    /// 10 classes x 28 units, matching a 28-wide image grid.
    pub fn mnist() -> Self {
        LabelCodec::new(10, 28)
    }

    /// 10 classes x 10 units.
    pub fn cifar10() -> Self {
        LabelCodec::new(10, 10)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn block_len(&self) -> usize {
        self.classes * self.width
    }

    /// Unit-norm label block for `class`.
    pub fn encode<T: Scalar>(&self, class: usize) -> Result<Vec<T>> {
        if class >= self.classes {
            return Err(Error::NotEnough {
                context: "LabelCodec::encode: class out of range",
                requested: class,
                available: self.classes,
            });
        }
        let mut block = vec![T::zero(); self.block_len()];
        let v = T::from64(1.0 / (self.width as f64).sqrt());
        for u in block
            .iter_mut()
            .skip(class * self.width)
            .take(self.width)
        {
            *u = v;
        }
        Ok(block)
    }
}

/// One network-ready sample: normalized data block, optional label block.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSample<T> {
    /// Normalized image block.
    pub data: Vec<T>,
    /// Normalized label block, when the sample is labeled and a codec was
    /// supplied.
    pub label: Option<Vec<T>>,
    /// The class behind `label`, kept for training and evaluation.
    pub class: Option<u8>,
}

impl<T: Scalar> EncodedSample<T> {
    /// Total input width.
    pub fn input_len(&self) -> usize {
        self.data.len() + self.label.as_ref().map_or(0, |l| l.len())
    }

    /// Concatenated input vector.
    pub fn joint(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.input_len());
        v.extend_from_slice(&self.data);
        if let Some(l) = &self.label {
            v.extend_from_slice(l);
        }
        v
    }

    /// Squared norm of the concatenated input.
    pub fn input_norm_sq(&self) -> T {
        let mut n = norm_sq(&self.data);
        if let Some(l) = &self.label {
            n = n + norm_sq(l);
        }
        n
    }
}

/// Encode one image. With a codec, the image must be labeled.
pub fn encode_sample<T: Scalar>(
    img: &RawImage,
    codec: Option<&LabelCodec>,
    policy: NormPolicy,
) -> Result<EncodedSample<T>> {
    let mut data: Vec<T> = img.pixels.iter().map(|&p| T::from64(p as f64)).collect();
    let (label, class) = match codec {
        Some(c) => {
            let cls = img.label.ok_or(Error::EmptyInput(
                "encode_sample: codec given but image has no label",
            ))?;
            (Some(c.encode::<T>(cls as usize)?), Some(cls))
        }
        None => (None, img.label),
    };

    match policy {
        NormPolicy::PerBlock => {
            let n = crate::numerics::normalize(&mut data);
            if n.as64() <= 1e-12 {
                return Err(Error::ZeroNorm {
                    context: "encode_sample: data block",
                    index: None,
                });
            }
            // Label blocks from the codec are already unit norm.
            Ok(EncodedSample { data, label, class })
        }
        NormPolicy::Joint => {
            let mut joint_sq = norm_sq(&data).as64();
            if let Some(l) = &label {
                joint_sq += norm_sq(l).as64();
            }
            if joint_sq <= 1e-24 {
                return Err(Error::ZeroNorm {
                    context: "encode_sample: joint input",
                    index: None,
                });
            }
            let inv = T::from64(1.0 / joint_sq.sqrt());
            for v in data.iter_mut() {
                *v = *v * inv;
            }
            let label = label.map(|mut l| {
                for v in l.iter_mut() {
                    *v = *v * inv;
                }
                l
            });
            Ok(EncodedSample { data, label, class })
        }
    }
}

/// Encode a whole dataset; errors carry the failing sample index.
pub fn encode_dataset<T: Scalar>(
    ds: &Dataset,
    codec: Option<&LabelCodec>,
    policy: NormPolicy,
) -> Result<Vec<EncodedSample<T>>> {
    ds.iter()
        .enumerate()
        .map(|(i, img)| {
            encode_sample(img, codec, policy).map_err(|e| match e {
                Error::ZeroNorm { context, .. } => Error::ZeroNorm {
                    context,
                    index: Some(i),
                },
                other => other,
            })
        })
        .collect()
}
