//! Flat mathematical morphology on grayscale images and binary masks:
//! disc structuring elements, dilation/erosion with replicate borders, and
//! geodesic reconstruction in both directions.

use thiserror::Error;

use crate::raster::{BinaryMask, GrayImage};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MorphError {
    #[error("structuring element must contain the origin")]
    MissingOrigin,
    #[error("structuring element is not symmetric: offset ({0}, {1}) has no negation")]
    Asymmetric(i32, i32),
    #[error("marker exceeds mask at ({x}, {y})")]
    MarkerExceedsMask { x: usize, y: usize },
    #[error("marker is below mask at ({x}, {y})")]
    MarkerBelowMask { x: usize, y: usize },
    #[error("operands have different dimensions")]
    DimensionMismatch,
}

/// A flat structuring element: a set of `(dy, dx)` displacements that
/// contains the origin and is symmetric under negation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuringElement {
    offsets: Vec<(i32, i32)>,
}

impl StructuringElement {
    pub fn from_offsets(mut offsets: Vec<(i32, i32)>) -> Result<Self, MorphError> {
        offsets.sort_unstable();
        offsets.dedup();
        if !offsets.contains(&(0, 0)) {
            return Err(MorphError::MissingOrigin);
        }
        for &(dy, dx) in &offsets {
            if offsets.binary_search(&(-dy, -dx)).is_err() {
                return Err(MorphError::Asymmetric(dy, dx));
            }
        }
        Ok(Self { offsets })
    }

    /// All lattice points with squared norm at most `bound`.
    fn ball_by_norm_sq(bound: u64) -> Self {
        let mut r = 0i64;
        while (r + 1) * (r + 1) <= bound as i64 {
            r += 1;
        }
        let mut offsets = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                if (dy * dy + dx * dx) as u64 <= bound {
                    offsets.push((dy as i32, dx as i32));
                }
            }
        }
        Self { offsets }
    }

    pub fn offsets(&self) -> &[(i32, i32)] {
        &self.offsets
    }

    /// Largest squared Euclidean norm among the offsets.
    pub fn max_norm_sq(&self) -> u64 {
        self.offsets
            .iter()
            .map(|&(dy, dx)| (i64::from(dy) * i64::from(dy) + i64::from(dx) * i64::from(dx)) as u64)
            .max()
            .unwrap_or(0)
    }
}

/// Disc of the given radius: offsets with `dy^2 + dx^2 <= radius^2`.
pub fn disc_element(radius: u32) -> StructuringElement {
    StructuringElement::ball_by_norm_sq(u64::from(radius) * u64::from(radius))
}

/// Disc covering every lattice point within twice the reach of `se`
/// (exact on squared norms, so non-integer reaches stay exact).
pub fn doubled_reach_element(se: &StructuringElement) -> StructuringElement {
    StructuringElement::ball_by_norm_sq(4 * se.max_norm_sq())
}

/// Grayscale dilation: neighborhood maximum, replicate border.
pub fn dilate(img: &GrayImage, se: &StructuringElement) -> GrayImage {
    neighborhood_extreme(img, se, f64::max, 0.0)
}

/// Grayscale erosion: neighborhood minimum, replicate border.
pub fn erode(img: &GrayImage, se: &StructuringElement) -> GrayImage {
    neighborhood_extreme(img, se, f64::min, 1.0)
}

fn neighborhood_extreme(
    img: &GrayImage,
    se: &StructuringElement,
    pick: fn(f64, f64) -> f64,
    identity: f64,
) -> GrayImage {
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        se.offsets.iter().fold(identity, |acc, &(dy, dx)| {
            pick(
                acc,
                img.get_clamped(x as isize + dx as isize, y as isize + dy as isize),
            )
        })
    })
    .expect("extrema of unit-interval values stay in range")
}

/// Binary dilation: true wherever any neighbor under `se` is true.
pub fn dilate_mask(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    mask_morph(mask, se, true)
}

/// Binary erosion: true only where every neighbor under `se` is true.
pub fn erode_mask(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    mask_morph(mask, se, false)
}

fn mask_morph(mask: &BinaryMask, se: &StructuringElement, any: bool) -> BinaryMask {
    let mut out = BinaryMask::filled(mask.width(), mask.height(), false).expect("same dims");
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            let mut hits = se.offsets.iter().map(|&(dy, dx)| {
                mask.get_clamped(x as isize + dx as isize, y as isize + dy as isize)
            });
            let v = if any {
                hits.any(|b| b)
            } else {
                hits.all(|b| b)
            };
            out.set(x, y, v);
        }
    }
    out
}

/// Reconstruction by dilation: iterates `r <- min(dilate(r, se), mask)`
/// from `r = marker` to the fixpoint. Requires `marker <= mask` pointwise.
pub fn morph_reconstruct(
    marker: &GrayImage,
    mask: &GrayImage,
    se: &StructuringElement,
) -> Result<GrayImage, MorphError> {
    check_dims(marker, mask)?;
    for y in 0..marker.height() {
        for x in 0..marker.width() {
            if marker.get(x, y) > mask.get(x, y) {
                return Err(MorphError::MarkerExceedsMask { x, y });
            }
        }
    }
    let mut current = marker.clone();
    loop {
        let dilated = dilate(&current, se);
        let next = GrayImage::from_fn(marker.width(), marker.height(), |x, y| {
            dilated.get(x, y).min(mask.get(x, y))
        })
        .expect("min of unit-interval values stays in range");
        if next == current {
            return Ok(next);
        }
        current = next;
    }
}

/// Reconstruction by erosion: iterates `r <- max(erode(r, se), mask)`
/// from `r = marker` to the fixpoint. Requires `marker >= mask` pointwise.
pub fn morph_reconstruct_by_erosion(
    marker: &GrayImage,
    mask: &GrayImage,
    se: &StructuringElement,
) -> Result<GrayImage, MorphError> {
    check_dims(marker, mask)?;
    for y in 0..marker.height() {
        for x in 0..marker.width() {
            if marker.get(x, y) < mask.get(x, y) {
                return Err(MorphError::MarkerBelowMask { x, y });
            }
        }
    }
    let mut current = marker.clone();
    loop {
        let eroded = erode(&current, se);
        let next = GrayImage::from_fn(marker.width(), marker.height(), |x, y| {
            eroded.get(x, y).max(mask.get(x, y))
        })
        .expect("max of unit-interval values stays in range");
        if next == current {
            return Ok(next);
        }
        current = next;
    }
}

/// Binary reconstruction by dilation: the connected structures of `mask`
/// (under the reach of `se`) that are touched by `marker`.
pub fn reconstruct_mask(
    marker: &BinaryMask,
    mask: &BinaryMask,
    se: &StructuringElement,
) -> Result<BinaryMask, MorphError> {
    if (marker.width(), marker.height()) != (mask.width(), mask.height()) {
        return Err(MorphError::DimensionMismatch);
    }
    for (i, (&m, &k)) in marker.bits().iter().zip(mask.bits()).enumerate() {
        if m && !k {
            return Err(MorphError::MarkerExceedsMask {
                x: i % marker.width(),
                y: i / marker.width(),
            });
        }
    }
    let mut current = marker.clone();
    loop {
        let next = dilate_mask(&current, se).and(mask);
        if next == current {
            return Ok(next);
        }
        current = next;
    }
}

fn check_dims(a: &GrayImage, b: &GrayImage) -> Result<(), MorphError> {
    if (a.width(), a.height()) == (b.width(), b.height()) {
        Ok(())
    } else {
        Err(MorphError::DimensionMismatch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mask_from(w: usize, h: usize, on: &[(usize, usize)]) -> BinaryMask {
        let mut m = BinaryMask::filled(w, h, false).unwrap();
        for &(x, y) in on {
            m.set(x, y, true);
        }
        m
    }

    #[test]
    fn disc_offset_counts() {
        assert_eq!(disc_element(0).offsets().len(), 1);
        assert_eq!(disc_element(1).offsets().len(), 5);
        assert_eq!(disc_element(2).offsets().len(), 13);
    }

    #[test]
    fn disc_is_symmetric_and_contains_origin() {
        for r in 0..6 {
            let se = disc_element(r);
            assert!(se.offsets().contains(&(0, 0)));
            for &(dy, dx) in se.offsets() {
                assert!(se.offsets().contains(&(-dy, -dx)));
            }
            assert_eq!(se.max_norm_sq(), u64::from(r) * u64::from(r));
        }
    }

    #[test]
    fn doubled_reach_of_disc_is_double_radius_disc() {
        for r in 0..5 {
            assert_eq!(doubled_reach_element(&disc_element(r)), disc_element(2 * r));
        }
    }

    #[test]
    fn from_offsets_validates() {
        assert_eq!(
            StructuringElement::from_offsets(vec![(0, 1), (0, -1)]).unwrap_err(),
            MorphError::MissingOrigin
        );
        assert_eq!(
            StructuringElement::from_offsets(vec![(0, 0), (0, 1)]).unwrap_err(),
            MorphError::Asymmetric(0, 1)
        );
        assert!(StructuringElement::from_offsets(vec![(0, 0), (0, 1), (0, -1)]).is_ok());
    }

    #[test]
    fn single_pixel_dilates_to_plus() {
        let m = mask_from(5, 5, &[(2, 2)]);
        let d = dilate_mask(&m, &disc_element(1));
        let expected = mask_from(5, 5, &[(2, 2), (1, 2), (3, 2), (2, 1), (2, 3)]);
        assert_eq!(d, expected);
    }

    #[test]
    fn erosion_of_full_mask_is_full() {
        let m = BinaryMask::filled(6, 4, true).unwrap();
        assert_eq!(erode_mask(&m, &disc_element(2)), m);
    }

    #[test]
    fn closing_preserves_isolated_pixel() {
        let m = mask_from(5, 5, &[(2, 2)]);
        let closed = erode_mask(&dilate_mask(&m, &disc_element(1)), &disc_element(1));
        assert_eq!(closed, m);
    }

    #[test]
    fn erosion_dilation_duality_on_random_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..30 {
            let (w, h) = (rng.gen_range(1..12), rng.gen_range(1..12));
            let bits: Vec<bool> = (0..w * h).map(|_| rng.gen_bool(0.5)).collect();
            let m = BinaryMask::new(w, h, bits).unwrap();
            for r in 0..3 {
                let se = disc_element(r);
                let lhs = erode_mask(&m, &se);
                let rhs = dilate_mask(&m.complement(), &se).complement();
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn gray_extremes_respect_replicate_border() {
        let img = GrayImage::new(3, 1, vec![0.1, 0.5, 0.9]).unwrap();
        let d = dilate(&img, &disc_element(1));
        assert_eq!(d.pixels(), &[0.5, 0.9, 0.9]);
        let e = erode(&img, &disc_element(1));
        assert_eq!(e.pixels(), &[0.1, 0.1, 0.5]);
    }

    #[test]
    fn reconstruct_fixpoint_cases() {
        let mask = GrayImage::new(2, 2, vec![0.3, 0.7, 0.0, 1.0]).unwrap();
        assert_eq!(
            morph_reconstruct(&mask, &mask, &disc_element(1)).unwrap(),
            mask
        );
        let zeros = GrayImage::filled(2, 2, 0.0).unwrap();
        assert_eq!(
            morph_reconstruct(&zeros, &mask, &disc_element(1)).unwrap(),
            zeros
        );
    }

    #[test]
    fn reconstruct_keeps_only_touched_plateau() {
        let mask = GrayImage::new(9, 1, vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let mut marker = GrayImage::filled(9, 1, 0.0).unwrap();
        marker.set(1, 0, 1.0);
        let rec = morph_reconstruct(&marker, &mask, &disc_element(1)).unwrap();
        assert_eq!(rec.pixels(), &[1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn reconstruct_bounds_and_idempotence() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..20 {
            let (w, h) = (rng.gen_range(1..10), rng.gen_range(1..10));
            let a: Vec<f64> = (0..w * h).map(|_| rng.gen_range(0.0..=1.0)).collect();
            let b: Vec<f64> = (0..w * h).map(|_| rng.gen_range(0.0..=1.0)).collect();
            let marker = GrayImage::new(
                w,
                h,
                a.iter().zip(&b).map(|(&x, &y)| x.min(y)).collect(),
            )
            .unwrap();
            let mask =
                GrayImage::new(w, h, a.iter().zip(&b).map(|(&x, &y)| x.max(y)).collect()).unwrap();
            let se = disc_element(1);
            let rec = morph_reconstruct(&marker, &mask, &se).unwrap();
            for i in 0..w * h {
                assert!(rec.pixels()[i] >= marker.pixels()[i]);
                assert!(rec.pixels()[i] <= mask.pixels()[i]);
            }
            assert_eq!(morph_reconstruct(&rec, &mask, &se).unwrap(), rec);
        }
    }

    #[test]
    fn reconstruct_rejects_marker_above_mask() {
        let marker = GrayImage::filled(2, 2, 0.8).unwrap();
        let mask = GrayImage::filled(2, 2, 0.5).unwrap();
        assert_eq!(
            morph_reconstruct(&marker, &mask, &disc_element(1)).unwrap_err(),
            MorphError::MarkerExceedsMask { x: 0, y: 0 }
        );
    }

    #[test]
    fn erosive_reconstruction_lifts_unmarked_basin() {
        // Profile with two pits; only the left one is marked (held at 0).
        // The unmarked right pit is lifted to its enclosing ridge height.
        let mask_vals = [0.0, 0.2, 0.6, 0.1, 0.6, 0.2, 0.7];
        let marker_vals = [0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        let mask = GrayImage::new(7, 1, mask_vals.to_vec()).unwrap();
        let marker = GrayImage::new(7, 1, marker_vals.to_vec()).unwrap();
        let rec = morph_reconstruct_by_erosion(&marker, &mask, &disc_element(1)).unwrap();
        assert_eq!(rec.pixels(), &[0.0, 0.2, 0.6, 0.6, 0.6, 0.6, 0.7]);
    }

    #[test]
    fn binary_reconstruction_selects_touched_components() {
        let mask = mask_from(7, 1, &[(0, 0), (1, 0), (2, 0), (5, 0), (6, 0)]);
        let marker = mask_from(7, 1, &[(1, 0)]);
        let rec = reconstruct_mask(&marker, &mask, &disc_element(1)).unwrap();
        assert_eq!(rec, mask_from(7, 1, &[(0, 0), (1, 0), (2, 0)]));
    }

    #[test]
    fn binary_reconstruction_rejects_marker_outside_mask() {
        let mask = mask_from(3, 1, &[(0, 0)]);
        let marker = mask_from(3, 1, &[(2, 0)]);
        assert_eq!(
            reconstruct_mask(&marker, &mask, &disc_element(1)).unwrap_err(),
            MorphError::MarkerExceedsMask { x: 2, y: 0 }
        );
    }
}
