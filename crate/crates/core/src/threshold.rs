//! Global threshold selection by Otsu's criterion over a 256-bin histogram.
//!
//! The selector maximizes the between-class variance
//! `phi(t) * psi(t) * (mu1(t) - mu2(t))^2` over every split
//! `{bins <= t}` vs `{bins > t}`. Candidates are compared in exact integer
//! arithmetic, so a plateau of equal variances always resolves to the
//! smallest index, independent of floating-point rounding.

use std::cmp::Ordering;

use thiserror::Error;

use crate::preprocess::{self, DEFAULT_TAIL_FRACTION};
use crate::raster::GrayImage;

/// Number of histogram bins, matching 8-bit intensity depth.
pub const BIN_COUNT: usize = 256;

/// Largest histogram total for which threshold selection is exact.
pub const MAX_HISTOGRAM_TOTAL: u64 = 1 << 28;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ThresholdError {
    #[error("histogram has no pixels")]
    EmptyHistogram,
    #[error("histogram total {0} exceeds the supported maximum {MAX_HISTOGRAM_TOTAL}")]
    TotalTooLarge(u64),
}

/// Intensity histogram over 256 bins with at least one pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    bins: [u64; BIN_COUNT],
    total: u64,
}

impl Histogram {
    /// Builds a histogram from raw counts. The total must be at least 1
    /// and at most [`MAX_HISTOGRAM_TOTAL`] (the exact-arithmetic bound;
    /// a single image would need more than 2^28 pixels to exceed it).
    pub fn from_counts(bins: [u64; BIN_COUNT]) -> Result<Self, ThresholdError> {
        let total = bins
            .iter()
            .try_fold(0u64, |acc, &c| acc.checked_add(c))
            .filter(|&t| t <= MAX_HISTOGRAM_TOTAL)
            .ok_or_else(|| {
                ThresholdError::TotalTooLarge(bins.iter().copied().fold(0, u64::saturating_add))
            })?;
        if total == 0 {
            return Err(ThresholdError::EmptyHistogram);
        }
        Ok(Self { bins, total })
    }

    pub fn bins(&self) -> &[u64; BIN_COUNT] {
        &self.bins
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}

/// An 8-bit threshold reported on the unit intensity scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnitThreshold {
    bin: u8,
}

impl UnitThreshold {
    pub fn bin(self) -> u8 {
        self.bin
    }

    /// Threshold as `bin / 255` in `[0, 1]`.
    pub fn value(self) -> f64 {
        f64::from(self.bin) / 255.0
    }
}

/// Quantizes unit-interval intensities into 256 bins:
/// `bin = floor(v * 255 + 0.5)` clamped to `[0, 255]`.
pub fn compute_histogram(img: &GrayImage) -> Histogram {
    let mut bins = [0u64; BIN_COUNT];
    for &v in img.pixels() {
        bins[intensity_bin(v)] += 1;
    }
    Histogram {
        bins,
        total: img.len() as u64,
    }
}

#[inline]
fn intensity_bin(v: f64) -> usize {
    ((v * 255.0 + 0.5).floor() as usize).min(BIN_COUNT - 1)
}

/// Returns `t* / 255` where the integer `t*` maximizes the between-class
/// variance over splits `{<= t}` vs `{> t}`. Ties resolve to the smallest
/// maximizing index; a histogram with a single occupied bin yields that
/// bin itself.
pub fn otsu_threshold(hist: &Histogram) -> UnitThreshold {
    let mut occupied = hist.bins.iter().enumerate().filter(|(_, &c)| c > 0);
    let first_occupied = occupied.next().map(|(i, _)| i).expect("total >= 1");
    if occupied.next().is_none() {
        return UnitThreshold {
            bin: first_occupied as u8,
        };
    }

    let total = u128::from(hist.total);
    let grand: u128 = hist
        .bins
        .iter()
        .enumerate()
        .map(|(i, &c)| i as u128 * u128::from(c))
        .sum();

    // Maximize d^2 / (n1 * n2) with d = s1*total - grand*n1, a positive
    // rescaling of the between-class variance. Totals are capped at 2^28,
    // so d < 2^64 and d^2 fits in u128.
    let mut best_bin = 0u8;
    let mut best: Option<(u128, u128)> = None;
    let mut n1: u128 = 0;
    let mut s1: u128 = 0;
    for t in 0..BIN_COUNT {
        n1 += u128::from(hist.bins[t]);
        s1 += t as u128 * u128::from(hist.bins[t]);
        let n2 = total - n1;
        if n1 == 0 || n2 == 0 {
            continue;
        }
        let d = (s1 * total).abs_diff(grand * n1);
        let num = d * d;
        let den = n1 * n2;
        let improves = match best {
            None => true,
            Some((bn, bd)) => cmp_ratio(num, den, bn, bd) == Ordering::Greater,
        };
        if improves {
            best = Some((num, den));
            best_bin = t as u8;
        }
    }
    UnitThreshold { bin: best_bin }
}

/// Between-class variance `phi * psi * (mu1 - mu2)^2` at split `t`, with
/// class means taken on the unit intensity scale. Zero when either class
/// is empty.
pub fn between_class_variance(hist: &Histogram, t: u8) -> f64 {
    let (mut n1, mut s1) = (0u64, 0u64);
    for (i, &c) in hist.bins.iter().enumerate().take(usize::from(t) + 1) {
        n1 += c;
        s1 += i as u64 * c;
    }
    let n2 = hist.total - n1;
    if n1 == 0 || n2 == 0 {
        return 0.0;
    }
    let grand: u64 = hist
        .bins
        .iter()
        .enumerate()
        .map(|(i, &c)| i as u64 * c)
        .sum();
    let s2 = grand - s1;
    let total = hist.total as f64;
    let mu1 = s1 as f64 / (n1 as f64 * 255.0);
    let mu2 = s2 as f64 / (n2 as f64 * 255.0);
    (n1 as f64 / total) * (n2 as f64 / total) * (mu1 - mu2) * (mu1 - mu2)
}

/// Otsu threshold of the intensity-adjusted image: the "global threshold"
/// input feature of the classifier.
pub fn global_threshold_feature(img: &GrayImage) -> UnitThreshold {
    let adjusted = preprocess::adjust_intensity(img, DEFAULT_TAIL_FRACTION, DEFAULT_TAIL_FRACTION)
        .expect("default tail fractions are valid");
    otsu_threshold(&compute_histogram(&adjusted))
}

/// Exact comparison of non-negative rationals `an/ad` vs `bn/bd`
/// (denominators nonzero) by continued-fraction descent; never overflows.
fn cmp_ratio(mut an: u128, mut ad: u128, mut bn: u128, mut bd: u128) -> Ordering {
    loop {
        let (qa, ra) = (an / ad, an % ad);
        let (qb, rb) = (bn / bd, bn % bd);
        match qa.cmp(&qb) {
            Ordering::Equal => match (ra == 0, rb == 0) {
                (true, true) => return Ordering::Equal,
                (true, false) => return Ordering::Less,
                (false, true) => return Ordering::Greater,
                (false, false) => {
                    // qa == qb, so compare fractional parts ra/ad vs rb/bd;
                    // inverting both flips the order, hence the swap.
                    let (prev_ad, prev_ra) = (ad, ra);
                    an = bd;
                    ad = rb;
                    bn = prev_ad;
                    bd = prev_ra;
                }
            },
            other => return other,
        }
    }
}
