//! Plain-text image output: portable pixmaps (PGM/PPM) and raw CSV.
//!
//! No plotting dependencies — every artifact opens in a text editor or any
//! image viewer that groks netpbm.

use std::path::Path;

use actlearn::data::ImageShape;
use anyhow::{bail, Context, Result};

/// Map raw values onto 0..=255 grey levels. Nonnegative data spans
/// `[0, max]`; data with negative values gets a symmetric range around 0
/// so zero is mid-grey and sign structure stays visible.
fn grey_levels(values: &[f32]) -> Vec<u8> {
    let mut lo = 0.0f32;
    let mut hi = 0.0f32;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo < 0.0 {
        let a = lo.abs().max(hi).max(1e-12);
        values
            .iter()
            .map(|&v| (((v / a) * 0.5 + 0.5) * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    } else {
        let a = hi.max(1e-12);
        values
            .iter()
            .map(|&v| ((v / a) * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }
}

fn check_len(values: &[f32], shape: ImageShape) -> Result<()> {
    if values.len() != shape.len() {
        bail!(
            "image has {} values but shape {}x{}x{} needs {}",
            values.len(),
            shape.channels,
            shape.height,
            shape.width,
            shape.len()
        );
    }
    Ok(())
}

/// Write one image. Single-channel data becomes PGM (P2); three-channel
/// (channel-planar) data becomes PPM (P3).
pub fn write_pgm(path: &Path, values: &[f32], shape: ImageShape) -> Result<()> {
    check_len(values, shape)?;
    let grey = grey_levels(values);
    let mut text = String::new();
    match shape.channels {
        1 => {
            text.push_str(&format!("P2\n{} {}\n255\n", shape.width, shape.height));
            for r in 0..shape.height {
                let row: Vec<String> = (0..shape.width)
                    .map(|c| grey[r * shape.width + c].to_string())
                    .collect();
                text.push_str(&row.join(" "));
                text.push('\n');
            }
        }
        3 => {
            text.push_str(&format!("P3\n{} {}\n255\n", shape.width, shape.height));
            let plane = shape.height * shape.width;
            for r in 0..shape.height {
                let mut row = Vec::with_capacity(shape.width * 3);
                for c in 0..shape.width {
                    for ch in 0..3 {
                        row.push(grey[ch * plane + r * shape.width + c].to_string());
                    }
                }
                text.push_str(&row.join(" "));
                text.push('\n');
            }
        }
        other => bail!("cannot render {other}-channel images"),
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Raw values as CSV, one image row per line (channel planes stacked
/// vertically for multi-channel data).
pub fn write_csv(path: &Path, values: &[f32], shape: ImageShape) -> Result<()> {
    check_len(values, shape)?;
    let mut text = String::new();
    for ch in 0..shape.channels {
        for r in 0..shape.height {
            let base = ch * shape.height * shape.width + r * shape.width;
            let row: Vec<String> = values[base..base + shape.width]
                .iter()
                .map(|v| format!("{v:.6}"))
                .collect();
            text.push_str(&row.join(","));
            text.push('\n');
        }
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Tile single-channel images into one grid PGM with 1-pixel separators,
/// `cols` tiles per row. Each tile is scaled independently so every unit's
/// structure is visible regardless of its gradient magnitude.
pub fn write_grid_pgm(
    path: &Path,
    tiles: &[Vec<f32>],
    shape: ImageShape,
    cols: usize,
) -> Result<()> {
    if tiles.is_empty() || cols == 0 {
        bail!("empty feature grid");
    }
    if shape.channels != 1 {
        bail!("feature grids are single-channel");
    }
    for t in tiles {
        check_len(t, shape)?;
    }
    let rows = tiles.len().div_ceil(cols);
    let gw = cols * shape.width + (cols - 1);
    let gh = rows * shape.height + (rows - 1);
    // Separator grey 64 reads as a thin dark grid line.
    let mut canvas = vec![64u8; gw * gh];
    for (t, tile) in tiles.iter().enumerate() {
        let grey = grey_levels(tile);
        let tr = t / cols;
        let tc = t % cols;
        let y0 = tr * (shape.height + 1);
        let x0 = tc * (shape.width + 1);
        for r in 0..shape.height {
            for c in 0..shape.width {
                canvas[(y0 + r) * gw + x0 + c] = grey[r * shape.width + c];
            }
        }
    }
    let mut text = format!("P2\n{gw} {gh}\n255\n");
    for r in 0..gh {
        let row: Vec<String> = (0..gw).map(|c| canvas[r * gw + c].to_string()).collect();
        text.push_str(&row.join(" "));
        text.push('\n');
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_has_correct_header_and_extremes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        let shape = ImageShape::new(2, 3, 1);
        write_pgm(&path, &[0.0, 0.5, 1.0, 1.0, 0.0, 0.25], shape).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "P2");
        assert_eq!(lines[1], "3 2");
        assert_eq!(lines[2], "255");
        assert_eq!(lines[3], "0 128 255");
        assert_eq!(lines[4], "255 0 64");
    }

    #[test]
    fn negative_values_map_zero_to_mid_grey() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        let shape = ImageShape::new(1, 3, 1);
        write_pgm(&path, &[-1.0, 0.0, 1.0], shape).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().nth(3).unwrap(), "0 128 255");
    }

    #[test]
    fn ppm_interleaves_planar_channels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ppm");
        let shape = ImageShape::new(1, 2, 3);
        // planes: R = [1, 0], G = [0, 1], B = [0, 0]
        write_pgm(&path, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0], shape).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "P3");
        assert_eq!(lines[3], "255 0 0 0 255 0");
    }

    #[test]
    fn csv_roundtrips_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let shape = ImageShape::new(2, 2, 1);
        write_csv(&path, &[0.1, -0.2, 0.3, 0.4], shape).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "0.100000,-0.200000\n0.300000,0.400000\n");
    }

    #[test]
    fn grid_dimensions_include_separators() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.pgm");
        let shape = ImageShape::new(2, 2, 1);
        let tiles = vec![vec![1.0f32; 4]; 6];
        write_grid_pgm(&path, &tiles, shape, 3).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        // 3 cols * 2 + 2 separators = 8 wide; 2 rows * 2 + 1 = 5 tall.
        assert_eq!(text.lines().nth(1).unwrap(), "8 5");
    }

    #[test]
    fn wrong_length_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let shape = ImageShape::new(2, 2, 1);
        assert!(write_pgm(&dir.path().join("x.pgm"), &[0.0; 3], shape).is_err());
        assert!(write_csv(&dir.path().join("x.csv"), &[0.0; 5], shape).is_err());
    }
}
