//! IDX image/label files (the MNIST container format), plain or gzipped.

use super::{Dataset, ImageShape, RawImage};
use crate::error::{Error, Result};
use flate2::read::GzDecoder;
use std::io::Read;
use std::path::Path;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Read a file, transparently gunzipping when it starts with the gzip magic.
fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path)?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out).map_err(|e| {
            Error::format(path.display().to_string(), format!("gzip: {e}"))
        })?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], off: usize, path: &Path) -> Result<u32> {
    bytes
        .get(off..off + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(path.display().to_string(), "truncated header"))
}

/// Parse an IDX image file into `[0, 1]` pixel vectors.
pub(crate) fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<(Vec<Vec<f32>>, ImageShape)> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::format(
            path.display().to_string(),
            format!("bad image magic 0x{magic:08x}, expected 0x{IMAGE_MAGIC:08x}"),
        ));
    }
    let count = be_u32(bytes, 4, path)? as usize;
    let height = be_u32(bytes, 8, path)? as usize;
    let width = be_u32(bytes, 12, path)? as usize;
    let expected = 16 + count * height * width;
    if bytes.len() != expected {
        return Err(Error::format(
            path.display().to_string(),
            format!(
                "size mismatch: header promises {count} images of {height}x{width} \
                 ({expected} bytes), file has {}",
                bytes.len()
            ),
        ));
    }
    let mut images = Vec::with_capacity(count);
    let mut off = 16;
    for _ in 0..count {
        images.push(
            bytes[off..off + height * width]
                .iter()
                .map(|&b| b as f32 / 255.0)
                .collect(),
        );
        off += height * width;
    }
    Ok((images, ImageShape::new(height, width, 1)))
}

/// Parse an IDX label file.
pub(crate) fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != LABEL_MAGIC {
        return Err(Error::format(
            path.display().to_string(),
            format!("bad label magic 0x{magic:08x}, expected 0x{LABEL_MAGIC:08x}"),
        ));
    }
    let count = be_u32(bytes, 4, path)? as usize;
    if bytes.len() != 8 + count {
        return Err(Error::format(
            path.display().to_string(),
            format!(
                "size mismatch: header promises {count} labels, file has {} payload bytes",
                bytes.len().saturating_sub(8)
            ),
        ));
    }
    Ok(bytes[8..].to_vec())
}

/// Load an IDX image/label pair (e.g. MNIST) into a dataset.
///
/// Accepts plain or gzip-compressed files, rejects mismatched counts,
/// labels above 9 and all-zero images (which could not be normalized).
pub fn load_mnist(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let (images, shape) = parse_idx_images(&read_maybe_gzip(images_path)?, images_path)?;
    let labels = parse_idx_labels(&read_maybe_gzip(labels_path)?, labels_path)?;
    if images.len() != labels.len() {
        return Err(Error::format(
            images_path.display().to_string(),
            format!(
                "{} images but {} labels in {}",
                images.len(),
                labels.len(),
                labels_path.display()
            ),
        ));
    }
    if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l > 9) {
        return Err(Error::format(
            labels_path.display().to_string(),
            format!("label {l} out of range at sample {i}"),
        ));
    }
    let samples = images
        .into_iter()
        .zip(labels)
        .map(|(pixels, label)| RawImage {
            pixels,
            label: Some(label),
        })
        .collect();
    Dataset::new(
        images_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "idx".into()),
        shape,
        samples,
    )
}


#[cfg(test)]
mod tests {
    use super::fixtures::{image_bytes, label_bytes};
    use super::*;
    use flate2::write::GzEncoder;
    use flate2::Compression;
    use std::io::Write;

    fn write_temp(name: &str, bytes: &[u8]) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("actlearn-idx-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        std::fs::write(&path, bytes).unwrap();
        path
    }

    #[test]
    fn loads_fixture_pair() {
        let ip = write_temp("ok-images", &image_bytes());
        let lp = write_temp("ok-labels", &label_bytes());
        let ds = load_mnist(&ip, &lp).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.shape, ImageShape::new(4, 4, 1));
        assert_eq!(ds.get(0).label, Some(7));
        assert_eq!(ds.get(1).label, Some(1));
        assert_eq!(ds.get(0).pixels[0], 1.0);
        assert!((ds.get(0).pixels[7] - 128.0 / 255.0).abs() < 1e-6);
        assert_eq!(ds.get(1).pixels[0], 0.0);
    }

    #[test]
    fn gzipped_files_load_identically() {
        let gz = |bytes: &[u8]| {
            let mut enc = GzEncoder::new(Vec::new(), Compression::default());
            enc.write_all(bytes).unwrap();
            enc.finish().unwrap()
        };
        let ip = write_temp("gz-images.gz", &gz(&image_bytes()));
        let lp = write_temp("gz-labels.gz", &gz(&label_bytes()));
        let ds = load_mnist(&ip, &lp).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.get(0).pixels[0], 1.0);
    }

    #[test]
    fn rejects_bad_magic() {
        let mut bytes = image_bytes();
        bytes[3] = 9;
        let ip = write_temp("badmagic-images", &bytes);
        let lp = write_temp("badmagic-labels", &label_bytes());
        let err = load_mnist(&ip, &lp).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn rejects_truncated_payload() {
        let mut bytes = image_bytes();
        bytes.truncate(bytes.len() - 5);
        let ip = write_temp("trunc-images", &bytes);
        let lp = write_temp("trunc-labels", &label_bytes());
        assert!(load_mnist(&ip, &lp).is_err());
    }

    #[test]
    fn rejects_count_mismatch() {
        let mut labels = vec![0, 0, 8, 1];
        labels.extend_from_slice(&3u32.to_be_bytes());
        labels.extend_from_slice(&[7, 1, 2]);
        let ip = write_temp("mismatch-images", &image_bytes());
        let lp = write_temp("mismatch-labels", &labels);
        let err = load_mnist(&ip, &lp).unwrap_err();
        assert!(err.to_string().contains("2 images but 3 labels"), "{err}");
    }

    #[test]
    fn rejects_label_out_of_range() {
        let mut labels = label_bytes();
        let last = labels.len() - 1;
        labels[last] = 11;
        let ip = write_temp("range-images", &image_bytes());
        let lp = write_temp("range-labels", &labels);
        let err = load_mnist(&ip, &lp).unwrap_err();
        assert!(err.to_string().contains("label 11"), "{err}");
    }

    #[test]
    fn rejects_zero_image() {
        let mut bytes = image_bytes();
        for px in bytes[16..32].iter_mut() {
            *px = 0;
        }
        let ip = write_temp("zero-images", &bytes);
        let lp = write_temp("zero-labels", &label_bytes());
        let err = load_mnist(&ip, &lp).unwrap_err();
        assert!(err.to_string().contains("sample 0"), "{err}");
    }
}
