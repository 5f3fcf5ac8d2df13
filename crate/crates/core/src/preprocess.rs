//! Conditioning stages applied before feature extraction: aspect-preserving
//! resize, median denoising, percentile intensity stretch and fixed-threshold
//! binarization.

use thiserror::Error;

use crate::raster::{BinaryMask, GrayImage};

/// Default binarization threshold for the region-extraction path.
pub const DEFAULT_BINARIZE_THRESHOLD: f64 = 0.65;

/// Default median filter window.
pub const DEFAULT_MEDIAN_WINDOW: usize = 3;

/// Default tail fraction dropped on each side by [`adjust_intensity`].
pub const DEFAULT_TAIL_FRACTION: f64 = 0.01;

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("median window must be odd, got {0}")]
    EvenWindow(usize),
    #[error("resize target must be at least 1x1")]
    ZeroTarget,
    #[error("tail fractions must satisfy 0 <= lo, hi and lo + hi < 1 (got {lo}, {hi})")]
    BadTailFractions { lo: f64, hi: f64 },
    #[error("threshold {0} outside [0, 1]")]
    ThresholdOutOfRange(f64),
}

/// Scales the image by the largest factor that fits inside `target`
/// (bilinear interpolation), then zero-pads symmetrically to exactly
/// `target`. Content aspect ratio is preserved; odd leftover padding
/// goes to the bottom/right.
pub fn resize_with_aspect(
    img: &GrayImage,
    target: (usize, usize),
) -> Result<GrayImage, PreprocessError> {
    let (tw, th) = target;
    if tw == 0 || th == 0 {
        return Err(PreprocessError::ZeroTarget);
    }
    let (w, h) = (img.width(), img.height());
    let scale = (tw as f64 / w as f64).min(th as f64 / h as f64);
    let cw = ((w as f64 * scale).round() as usize).clamp(1, tw);
    let ch = ((h as f64 * scale).round() as usize).clamp(1, th);
    let pad_left = (tw - cw) / 2;
    let pad_top = (th - ch) / 2;

    let mut out = vec![0.0; tw * th];
    for cy in 0..ch {
        for cx in 0..cw {
            let v = sample_bilinear(img, cx, cy, cw, ch);
            out[(pad_top + cy) * tw + (pad_left + cx)] = v;
        }
    }
    Ok(GrayImage::new(tw, th, out).expect("resized pixels stay in range"))
}

/// Bilinear sample of `img` at the center of output pixel (cx, cy) when the
/// full image is mapped onto a cw x ch grid. Pixel-center convention, so a
/// same-size mapping is the identity.
fn sample_bilinear(img: &GrayImage, cx: usize, cy: usize, cw: usize, ch: usize) -> f64 {
    let sx = (cx as f64 + 0.5) * (img.width() as f64 / cw as f64) - 0.5;
    let sy = (cy as f64 + 0.5) * (img.height() as f64 / ch as f64) - 0.5;
    let sx = sx.clamp(0.0, img.width() as f64 - 1.0);
    let sy = sy.clamp(0.0, img.height() as f64 - 1.0);
    let x0 = sx.floor() as usize;
    let y0 = sy.floor() as usize;
    let x1 = (x0 + 1).min(img.width() - 1);
    let y1 = (y0 + 1).min(img.height() - 1);
    let fx = sx - x0 as f64;
    let fy = sy - y0 as f64;
    // lerp form keeps constants exact
    let top = lerp(img.get(x0, y0), img.get(x1, y0), fx);
    let bottom = lerp(img.get(x0, y1), img.get(x1, y1), fx);
    lerp(top, bottom, fy).clamp(0.0, 1.0)
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Replaces each pixel with the median of its `window` x `window`
/// neighborhood (replicate border). `window` must be odd; window 1 is the
/// identity.
pub fn median_filter(img: &GrayImage, window: usize) -> Result<GrayImage, PreprocessError> {
    if window.is_multiple_of(2) {
        return Err(PreprocessError::EvenWindow(window));
    }
    if window == 1 {
        return Ok(img.clone());
    }
    let r = (window / 2) as isize;
    let mut neigh = Vec::with_capacity(window * window);
    let out = GrayImage::from_fn(img.width(), img.height(), |x, y| {
        neigh.clear();
        for dy in -r..=r {
            for dx in -r..=r {
                neigh.push(img.get_clamped(x as isize + dx, y as isize + dy));
            }
        }
        neigh.sort_unstable_by(f64::total_cmp);
        // odd window => odd count; the index is also the lower median
        neigh[(neigh.len() - 1) / 2]
    });
    Ok(out.expect("dimensions unchanged"))
}

/// Percentile contrast stretch: values at or below the `low_frac` quantile
/// map to 0, values at or above the `1 - high_frac` quantile map to 1, and
/// the band in between stretches linearly. A flat image (equal quantiles)
/// maps to all zeros.
///
/// Quantiles are nearest-rank on the sorted pixel multiset.
pub fn adjust_intensity(
    img: &GrayImage,
    low_frac: f64,
    high_frac: f64,
) -> Result<GrayImage, PreprocessError> {
    if !(low_frac >= 0.0 && high_frac >= 0.0 && low_frac + high_frac < 1.0) {
        return Err(PreprocessError::BadTailFractions {
            lo: low_frac,
            hi: high_frac,
        });
    }
    let mut sorted: Vec<f64> = img.pixels().to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let lo = nearest_rank(&sorted, low_frac);
    let hi = nearest_rank(&sorted, 1.0 - high_frac);
    let out = if hi <= lo {
        GrayImage::filled(img.width(), img.height(), 0.0)
    } else {
        let span = hi - lo;
        GrayImage::from_fn(img.width(), img.height(), |x, y| {
            ((img.get(x, y) - lo) / span).clamp(0.0, 1.0)
        })
    };
    Ok(out.expect("dimensions unchanged"))
}

/// Nearest-rank quantile of an ascending-sorted non-empty slice.
fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = (q * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Foreground = intensity strictly greater than `t`.
pub fn binarize(img: &GrayImage, t: f64) -> Result<BinaryMask, PreprocessError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(PreprocessError::ThresholdOutOfRange(t));
    }
    let bits = img.pixels().iter().map(|&v| v > t).collect();
    Ok(BinaryMask::new(img.width(), img.height(), bits).expect("dimensions unchanged"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(w: usize, h: usize, px: &[f64]) -> GrayImage {
        GrayImage::new(w, h, px.to_vec()).unwrap()
    }

    #[test]
    fn resize_same_size_is_identity() {
        let img = GrayImage::from_fn(64, 64, |x, y| ((x * 7 + y * 13) % 97) as f64 / 96.0).unwrap();
        let out = resize_with_aspect(&img, (64, 64)).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn resize_pads_symmetrically_with_zeros() {
        // 100x50 into 64x64: scale 0.64, content 64x32, 16 rows of padding
        // above and below.
        let img = GrayImage::filled(100, 50, 0.5).unwrap();
        let out = resize_with_aspect(&img, (64, 64)).unwrap();
        assert_eq!((out.width(), out.height()), (64, 64));
        for y in 0..64 {
            for x in 0..64 {
                let expected = if (16..48).contains(&y) { 0.5 } else { 0.0 };
                assert_eq!(out.get(x, y), expected, "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn resize_constant_content_stays_constant() {
        let img = GrayImage::filled(30, 17, 0.5).unwrap();
        let out = resize_with_aspect(&img, (41, 23)).unwrap();
        for &v in out.pixels() {
            assert!(v == 0.5 || v == 0.0);
        }
        assert!(out.pixels().contains(&0.5));
    }

    #[test]
    fn resize_output_dims_match_target() {
        let img = GrayImage::filled(13, 29, 0.3).unwrap();
        for target in [(7, 7), (64, 16), (1, 1), (29, 13)] {
            let out = resize_with_aspect(&img, target).unwrap();
            assert_eq!((out.width(), out.height()), target);
        }
    }

    #[test]
    fn median_of_constant_image_is_identity() {
        let img = GrayImage::filled(8, 8, 0.5).unwrap();
        assert_eq!(median_filter(&img, 3).unwrap(), img);
    }

    #[test]
    fn median_removes_isolated_spike() {
        let mut px = vec![0.0; 9];
        px[4] = 1.0;
        let img = image(3, 3, &px);
        let out = median_filter(&img, 3).unwrap();
        assert_eq!(out.get(1, 1), 0.0);
    }

    #[test]
    fn median_window_one_is_identity() {
        let img = GrayImage::from_fn(5, 4, |x, y| (x as f64 + y as f64) / 10.0).unwrap();
        assert_eq!(median_filter(&img, 1).unwrap(), img);
    }

    #[test]
    fn median_rejects_even_window() {
        let img = GrayImage::filled(4, 4, 0.1).unwrap();
        assert_eq!(
            median_filter(&img, 4).unwrap_err(),
            PreprocessError::EvenWindow(4)
        );
    }

    #[test]
    fn median_output_drawn_from_window_values() {
        let img = GrayImage::from_fn(9, 9, |x, y| ((x * 31 + y * 17) % 11) as f64 / 10.0).unwrap();
        let out = median_filter(&img, 3).unwrap();
        for y in 0..9 {
            for x in 0..9 {
                let mut window = vec![];
                for dy in -1..=1isize {
                    for dx in -1..=1isize {
                        window.push(img.get_clamped(x as isize + dx, y as isize + dy));
                    }
                }
                assert!(window.contains(&out.get(x, y)));
            }
        }
    }

    #[test]
    fn adjust_maps_tail_quantiles_to_extremes() {
        // 1000 pixels spanning [0,1] uniformly: x[i] = i/999.
        let px: Vec<f64> = (0..1000).map(|i| i as f64 / 999.0).collect();
        let img = image(1000, 1, &px);
        let out = adjust_intensity(&img, 0.01, 0.01).unwrap();
        // nearest-rank: lo = x[9], hi = x[989]
        assert_eq!(out.get(9, 0), 0.0);
        assert_eq!(out.get(989, 0), 1.0);
        assert_eq!(out.get(0, 0), 0.0);
        assert_eq!(out.get(999, 0), 1.0);
        let mid = (px[500] - px[9]) / (px[989] - px[9]);
        assert!((out.get(500, 0) - mid).abs() < 1e-12);
    }

    #[test]
    fn adjust_constant_image_goes_to_zero() {
        let img = GrayImage::filled(10, 10, 0.7).unwrap();
        let out = adjust_intensity(&img, 0.01, 0.01).unwrap();
        assert!(out.pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adjust_zero_fractions_is_min_max_stretch() {
        let img = image(4, 1, &[0.2, 0.4, 0.6, 0.8]);
        let out = adjust_intensity(&img, 0.0, 0.0).unwrap();
        assert!((out.get(0, 0) - 0.0).abs() < 1e-12);
        assert!((out.get(3, 0) - 1.0).abs() < 1e-12);
        assert!((out.get(1, 0) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn adjust_rejects_bad_fractions() {
        let img = GrayImage::filled(2, 2, 0.5).unwrap();
        assert!(adjust_intensity(&img, 0.6, 0.5).is_err());
        assert!(adjust_intensity(&img, -0.1, 0.0).is_err());
    }

    #[test]
    fn adjust_is_monotone() {
        let px: Vec<f64> = (0..256).map(|i| ((i * 97) % 256) as f64 / 255.0).collect();
        let img = image(16, 16, &px);
        let out = adjust_intensity(&img, 0.05, 0.05).unwrap();
        for i in 0..px.len() {
            for j in 0..px.len() {
                if px[i] <= px[j] {
                    assert!(out.pixels()[i] <= out.pixels()[j]);
                }
            }
        }
    }

    #[test]
    fn binarize_uses_strict_greater() {
        let img = image(2, 1, &[0.66, 0.65]);
        let mask = binarize(&img, 0.65).unwrap();
        assert_eq!(mask.bits(), &[true, false]);
    }

    #[test]
    fn binarize_all_dark_is_empty() {
        let img = GrayImage::filled(4, 4, 0.0).unwrap();
        assert_eq!(binarize(&img, 0.0).unwrap().count(), 0);
    }

    #[test]
    fn binarize_foreground_shrinks_as_threshold_rises() {
        let px: Vec<f64> = (0..100).map(|i| (i as f64) / 99.0).collect();
        let img = image(10, 10, &px);
        let mut prev = usize::MAX;
        for t in [0.0, 0.2, 0.5, 0.65, 0.9, 1.0] {
            let count = binarize(&img, t).unwrap().count();
            assert!(count <= prev);
            prev = count;
        }
    }
}
