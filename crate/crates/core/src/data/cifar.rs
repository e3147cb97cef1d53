//! CIFAR-10 binary batches: records of 1 label byte + 3072 planar RGB bytes.

use super::{Dataset, ImageShape, RawImage};
use crate::error::{Error, Result};
use flate2::read::GzDecoder;
use std::io::Read;
use std::path::Path;

const RECORD_LEN: usize = 1 + 3072;

/// Load one or more CIFAR-10 binary batch files (plain or gzipped) into a
/// single dataset of 32x32x3 images.
pub fn load_cifar10<P: AsRef<Path>>(paths: &[P]) -> Result<Dataset> {
    if paths.is_empty() {
        return Err(Error::EmptyInput("load_cifar10"));
    }
    let shape = ImageShape::new(32, 32, 3);
    let mut samples = Vec::new();
    for p in paths {
        let path = p.as_ref();
        let raw = std::fs::read(path)?;
        let bytes = if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
            let mut out = Vec::new();
            GzDecoder::new(&raw[..]).read_to_end(&mut out).map_err(|e| {
                Error::format(path.display().to_string(), format!("gzip: {e}"))
            })?;
            out
        } else {
            raw
        };
        if bytes.is_empty() || bytes.len() % RECORD_LEN != 0 {
            return Err(Error::format(
                path.display().to_string(),
                format!(
                    "size {} is not a multiple of the {RECORD_LEN}-byte record",
                    bytes.len()
                ),
            ));
        }
        for (r, rec) in bytes.chunks_exact(RECORD_LEN).enumerate() {
            let label = rec[0];
            if label > 9 {
                return Err(Error::format(
                    path.display().to_string(),
                    format!("label {label} out of range at record {r}"),
                ));
            }
            samples.push(RawImage {
                pixels: rec[1..].iter().map(|&b| b as f32 / 255.0).collect(),
                label: Some(label),
            });
        }
    }
    Dataset::new("cifar10", shape, samples)
}
