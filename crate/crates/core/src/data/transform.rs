//! Image corruptions and augmentations, all operating on raw `[0, 1]`
//! pixels before any normalization.

use super::{ImageShape, RawImage};
use crate::error::{Error, Result};
use crate::numerics::SeededRng;

/// Zero the bottom `ratio` of an image's rows (rounded to whole rows,
/// across all channels). `ratio` must lie in `[0, 1]`.
pub fn mask_bottom(img: &RawImage, shape: ImageShape, ratio: f64) -> Result<RawImage> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::NotEnough {
            context: "mask_bottom: ratio must be within [0, 1] (in percent units)",
            requested: (ratio * 100.0) as usize,
            available: 100,
        });
    }
    let masked_rows = (ratio * shape.height as f64).round() as usize;
    let first_masked = shape.height - masked_rows;
    let mut out = img.clone();
    for ch in 0..shape.channels {
        for r in first_masked..shape.height {
            let base = ch * shape.height * shape.width + r * shape.width;
            for p in out.pixels[base..base + shape.width].iter_mut() {
                *p = 0.0;
            }
        }
    }
    Ok(out)
}

/// Draw one random full-height vertical and one full-width horizontal bar
/// of `width` pixels at maximum intensity. `width == 0` is a no-op.
pub fn add_random_lines(
    img: &RawImage,
    shape: ImageShape,
    width: usize,
    rng: &mut SeededRng,
) -> Result<RawImage> {
    if width == 0 {
        return Ok(img.clone());
    }
    if width > shape.height || width > shape.width {
        return Err(Error::NotEnough {
            context: "add_random_lines: bar wider than image",
            requested: width,
            available: shape.height.min(shape.width),
        });
    }
    let r0 = rng.below(shape.height - width + 1);
    let c0 = rng.below(shape.width - width + 1);
    let mut out = img.clone();
    for ch in 0..shape.channels {
        let plane = ch * shape.height * shape.width;
        for r in r0..r0 + width {
            for c in 0..shape.width {
                out.pixels[plane + r * shape.width + c] = 1.0;
            }
        }
        for r in 0..shape.height {
            for c in c0..c0 + width {
                out.pixels[plane + r * shape.width + c] = 1.0;
            }
        }
    }
    Ok(out)
}

/// Deterministic crop to `out_h x out_w` at offset `(dy, dx)`, optionally
/// mirrored horizontally.
pub fn crop_flip(
    img: &RawImage,
    shape: ImageShape,
    dy: usize,
    dx: usize,
    flip: bool,
    out_h: usize,
    out_w: usize,
) -> Result<RawImage> {
    if dy + out_h > shape.height || dx + out_w > shape.width {
        return Err(Error::NotEnough {
            context: "crop_flip: crop exceeds image",
            requested: (dy + out_h).max(dx + out_w),
            available: shape.height.min(shape.width),
        });
    }
    let mut pixels = Vec::with_capacity(out_h * out_w * shape.channels);
    for ch in 0..shape.channels {
        let plane = ch * shape.height * shape.width;
        for r in 0..out_h {
            for c in 0..out_w {
                let src_c = if flip { out_w - 1 - c } else { c };
                pixels.push(img.pixels[plane + (dy + r) * shape.width + (dx + src_c)]);
            }
        }
    }
    Ok(RawImage {
        pixels,
        label: img.label,
    })
}

/// Training augmentation: random crop offset and coin-flip mirror.
pub fn augment_crop_flip(
    img: &RawImage,
    shape: ImageShape,
    out_h: usize,
    out_w: usize,
    rng: &mut SeededRng,
) -> Result<RawImage> {
    let dy = rng.below(shape.height - out_h + 1);
    let dx = rng.below(shape.width - out_w + 1);
    let flip = rng.below(2) == 1;
    crop_flip(img, shape, dy, dx, flip, out_h, out_w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_image(shape: ImageShape) -> RawImage {
        RawImage {
            pixels: (0..shape.len()).map(|i| (i % 97) as f32 / 100.0).collect(),
            label: Some(3),
        }
    }

    #[test]
    fn mask_zero_is_identity_and_one_blanks_all() {
        let shape = ImageShape::new(4, 3, 1);
        let img = gradient_image(shape);
        assert_eq!(mask_bottom(&img, shape, 0.0).unwrap(), img);
        let full = mask_bottom(&img, shape, 1.0).unwrap();
        assert!(full.pixels.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn mask_half_zeroes_exactly_the_bottom_rows() {
        let shape = ImageShape::new(4, 3, 2);
        let img = gradient_image(shape);
        let half = mask_bottom(&img, shape, 0.5).unwrap();
        for ch in 0..2 {
            let plane = ch * 12;
            // Rows 0..2 intact, rows 2..4 zero, in both channels.
            assert_eq!(half.pixels[plane..plane + 6], img.pixels[plane..plane + 6]);
            assert!(half.pixels[plane + 6..plane + 12].iter().all(|&p| p == 0.0));
        }
        assert_eq!(half.label, img.label);
    }

    #[test]
    fn mask_ratio_out_of_range_rejected() {
        let shape = ImageShape::new(2, 2, 1);
        let img = gradient_image(shape);
        assert!(mask_bottom(&img, shape, 1.5).is_err());
        assert!(mask_bottom(&img, shape, -0.1).is_err());
    }

    #[test]
    fn lines_width_zero_is_identity() {
        let shape = ImageShape::new(5, 5, 1);
        let img = gradient_image(shape);
        let mut rng = SeededRng::new(1);
        assert_eq!(add_random_lines(&img, shape, 0, &mut rng).unwrap(), img);
    }

    #[test]
    fn lines_touch_expected_pixel_count() {
        // On an almost-black canvas, bars of width w cover
        // w*W + w*H - w*w distinct pixels per channel.
        let shape = ImageShape::new(8, 6, 1);
        let img = RawImage {
            pixels: vec![0.001; shape.len()],
            label: None,
        };
        for width in [1usize, 2, 3] {
            let mut rng = SeededRng::new(width as u64);
            let out = add_random_lines(&img, shape, width, &mut rng).unwrap();
            let ones = out.pixels.iter().filter(|&&p| p == 1.0).count();
            let expect = width * 6 + width * 8 - width * width;
            assert_eq!(ones, expect, "width {width}");
        }
    }

    #[test]
    fn lines_are_reproducible_per_seed() {
        let shape = ImageShape::new(9, 9, 1);
        let img = gradient_image(shape);
        let a = add_random_lines(&img, shape, 2, &mut SeededRng::new(5)).unwrap();
        let b = add_random_lines(&img, shape, 2, &mut SeededRng::new(5)).unwrap();
        let c = add_random_lines(&img, shape, 2, &mut SeededRng::new(6)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn crop_extracts_the_right_window() {
        let shape = ImageShape::new(4, 4, 2);
        let img = gradient_image(shape);
        let crop = crop_flip(&img, shape, 1, 2, false, 2, 2).unwrap();
        assert_eq!(crop.pixels.len(), 8);
        for ch in 0..2 {
            for r in 0..2 {
                for c in 0..2 {
                    let got = crop.pixels[ch * 4 + r * 2 + c];
                    let want = img.pixels[ch * 16 + (1 + r) * 4 + (2 + c)];
                    assert_eq!(got, want);
                }
            }
        }
    }

    #[test]
    fn flip_mirrors_columns() {
        let shape = ImageShape::new(1, 3, 1);
        let img = RawImage {
            pixels: vec![0.1, 0.2, 0.3],
            label: None,
        };
        let flipped = crop_flip(&img, shape, 0, 0, true, 1, 3).unwrap();
        assert_eq!(flipped.pixels, vec![0.3, 0.2, 0.1]);
    }

    #[test]
    fn crop_out_of_bounds_rejected() {
        let shape = ImageShape::new(4, 4, 1);
        let img = gradient_image(shape);
        assert!(crop_flip(&img, shape, 2, 0, false, 3, 4).is_err());
    }

    #[test]
    fn augment_is_reproducible_per_seed() {
        let shape = ImageShape::new(6, 6, 3);
        let img = gradient_image(shape);
        let a = augment_crop_flip(&img, shape, 4, 4, &mut SeededRng::new(9)).unwrap();
        let b = augment_crop_flip(&img, shape, 4, 4, &mut SeededRng::new(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.pixels.len(), 48);
        assert_eq!(a.label, Some(3));
    }
}
