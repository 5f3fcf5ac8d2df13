//! Randomized invariants that cut across modules.

use proptest::prelude::*;

use btfuzz_core::eval::{compute_metrics, ConfusionMatrix};
use btfuzz_core::fuzzy::{defuzzify_centroid, LinguisticVariable, MamdaniFis, MembershipFunction};
use btfuzz_core::preprocess::{adjust_intensity, binarize, median_filter};
use btfuzz_core::raster::GrayImage;
use btfuzz_core::segmentation::region_grow;
use btfuzz_core::threshold::{otsu_threshold, Histogram, BIN_COUNT};

fn sorted4() -> impl Strategy<Value = [f64; 4]> {
    prop::collection::vec(-5.0f64..5.0, 4).prop_map(|mut v| {
        v.sort_unstable_by(f64::total_cmp);
        [v[0], v[1], v[2], v[3]]
    })
}

fn image() -> impl Strategy<Value = GrayImage> {
    (1usize..10, 1usize..10).prop_flat_map(|(w, h)| {
        prop::collection::vec(0.0f64..=1.0, w * h)
            .prop_map(move |px| GrayImage::new(w, h, px).unwrap())
    })
}

/// Independent exact maximizer of the between-class separation
/// d^2 / (n1 n2) with d = |s1 total - grand n1|, smallest split wins ties.
/// Counts are kept small enough that u128 cross-multiplication is exact.
fn brute_force_otsu(bins: &[u64; BIN_COUNT]) -> u8 {
    let total: u64 = bins.iter().sum();
    let grand: u64 = bins.iter().enumerate().map(|(i, &c)| i as u64 * c).sum();
    let mut best: Option<(u8, u128, u128)> = None;
    let mut n1 = 0u64;
    let mut s1 = 0u64;
    for t in 0..=255u8 {
        n1 += bins[t as usize];
        s1 += u64::from(t) * bins[t as usize];
        let n2 = total - n1;
        if n1 == 0 || n2 == 0 {
            continue;
        }
        let d = (s1 as i128 * total as i128 - grand as i128 * n1 as i128).unsigned_abs();
        let num = d * d;
        let den = u128::from(n1) * u128::from(n2);
        let better = match &best {
            None => true,
            Some((_, bn, bd)) => num * bd > bn * den,
        };
        if better {
            best = Some((t, num, den));
        }
    }
    match best {
        Some((t, _, _)) => t,
        // single occupied bin: no valid split exists
        None => bins.iter().position(|&c| c > 0).unwrap() as u8,
    }
}

proptest! {
    #[test]
    fn trapezoid_degrees_stay_in_unit_interval(q in sorted4(), x in -10.0f64..10.0) {
        let mf = MembershipFunction::trapezoidal(q[0], q[1], q[2], q[3]).unwrap();
        let d = mf.eval(x);
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn triangle_degrees_stay_in_unit_interval(q in sorted4(), x in -10.0f64..10.0) {
        let mf = MembershipFunction::triangular(q[0], q[1], q[2]).unwrap();
        let d = mf.eval(x);
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn otsu_agrees_with_exhaustive_search(
        counts in prop::collection::vec(0u64..=60, BIN_COUNT),
    ) {
        let mut bins = [0u64; BIN_COUNT];
        bins.copy_from_slice(&counts);
        bins[0] += 1; // never empty
        let hist = Histogram::from_counts(bins).unwrap();
        prop_assert_eq!(otsu_threshold(&hist).bin(), brute_force_otsu(&bins));
    }

    #[test]
    fn metrics_are_valid_percentages(
        tp in 0u64..200, fp in 0u64..200, fn_ in 0u64..200, tn in 1u64..200,
    ) {
        let cm = ConfusionMatrix::new(tp, fp, fn_, tn);
        let m = compute_metrics(&cm).unwrap();
        prop_assert!((0.0..=100.0).contains(&m.accuracy));
        for v in [m.precision, m.recall, m.f1].into_iter().flatten() {
            prop_assert!((0.0..=100.0).contains(&v));
        }
        let correct = (m.accuracy / 100.0 * cm.total() as f64).round() as u64;
        prop_assert_eq!(correct, tp + tn);
    }

    #[test]
    fn centroid_stays_in_output_universe(
        q in prop::collection::vec(0.0f64..=1.0, 4), x in 0.0f64..=1.0,
    ) {
        let mut sorted = q.clone();
        sorted.sort_unstable_by(f64::total_cmp);
        let mut input = LinguisticVariable::new("size", 0.0, 1.0).unwrap();
        input
            .add_term("on", MembershipFunction::trapezoidal(0.0, 0.0, 1.0, 1.0).unwrap())
            .unwrap();
        let mut output = LinguisticVariable::new("out", 0.0, 1.0).unwrap();
        output
            .add_term(
                "only",
                MembershipFunction::trapezoidal(sorted[0], sorted[1], sorted[2], sorted[3])
                    .unwrap(),
            )
            .unwrap();
        let mut fis = MamdaniFis::new(vec![input], output, 101).unwrap();
        fis.add_rule(&[("size", "on")], "only").unwrap();
        let crisp = defuzzify_centroid(&fis.infer(&[x]).unwrap()).crisp;
        prop_assert!((0.0..=1.0).contains(&crisp));
    }

    #[test]
    fn median_filter_output_within_input_range(img in image(), w in 0usize..3) {
        let window = 2 * w + 1;
        let out = median_filter(&img, window).unwrap();
        let lo = img.pixels().iter().copied().fold(f64::INFINITY, f64::min);
        let hi = img.pixels().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for &v in out.pixels() {
            prop_assert!(lo <= v && v <= hi);
        }
    }

    #[test]
    fn intensity_adjustment_is_monotone_into_unit_interval(img in image()) {
        let out = adjust_intensity(&img, 0.01, 0.01).unwrap();
        for &v in out.pixels() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let n = img.len();
        for i in 0..n {
            for j in 0..n {
                if img.pixels()[i] <= img.pixels()[j] {
                    prop_assert!(out.pixels()[i] <= out.pixels()[j]);
                }
            }
        }
    }

    #[test]
    fn binarize_foreground_shrinks_as_threshold_rises(
        img in image(), a in 0.0f64..=1.0, b in 0.0f64..=1.0,
    ) {
        let (t1, t2) = if a <= b { (a, b) } else { (b, a) };
        let low = binarize(&img, t1).unwrap();
        let high = binarize(&img, t2).unwrap();
        prop_assert!(low.count() >= high.count());
        for (l, h) in low.bits().iter().zip(high.bits()) {
            prop_assert!(*h <= *l); // high-threshold foreground is a subset
        }
    }

    #[test]
    fn region_growing_tolerance_is_monotone(
        img in image(), sx in 0.0f64..1.0, sy in 0.0f64..1.0,
        a in 0.0f64..=1.0, b in 0.0f64..=1.0,
    ) {
        let seed = (
            (sx * img.width() as f64) as usize,
            (sy * img.height() as f64) as usize,
        );
        let (t1, t2) = if a <= b { (a, b) } else { (b, a) };
        let small = region_grow(&img, &[seed], t1).unwrap();
        let large = region_grow(&img, &[seed], t2).unwrap();
        prop_assert!(small.get(seed.0, seed.1));
        for (s, l) in small.bits().iter().zip(large.bits()) {
            prop_assert!(*s <= *l);
        }
    }
}
