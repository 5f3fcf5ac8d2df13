//! End-to-end library flow: phantoms in, scored report out.

use btfuzz_core::dataset::{write_phantom_set, DatasetManifest, Label, PhantomSpec, Split};
use btfuzz_core::eval::{compute_metrics, render_report, round_percentage, ReportFormat};
use btfuzz_core::fuzzy::parser::{parse_fis, serialize_fis};
use btfuzz_core::fuzzy::{FeatureVector, MamdaniFis};
use btfuzz_core::pipeline::{
    evaluate_predictions, run_pipeline, write_predictions, PipelineConfig,
};
use btfuzz_core::raster::GrayImage;
use btfuzz_core::segmentation::Method;

#[test]
fn phantom_set_classifies_and_scores() {
    let dir = tempfile::tempdir().unwrap();
    let spec = PhantomSpec::with_defaults(5, 48, 48, 3);
    let manifest = write_phantom_set(&spec, dir.path()).unwrap();
    let config = PipelineConfig {
        resize_width: 48,
        resize_height: 48,
        ..PipelineConfig::default()
    };
    let records = run_pipeline(&config, &manifest).unwrap();
    assert_eq!(records.len(), 10);
    assert!(records.iter().all(|r| !r.is_error()));
    write_predictions(&records, dir.path().join("predictions.csv")).unwrap();

    let cm = evaluate_predictions(&records, &manifest).unwrap();
    assert_eq!(cm.total(), 10);
    let metrics = compute_metrics(&cm).unwrap();
    // strict thresholds live in the acceptance suite; this guards the wiring
    assert!(
        metrics.accuracy >= 80.0,
        "accuracy {:.2} too low for clean phantoms",
        metrics.accuracy
    );
    for format in [ReportFormat::Text, ReportFormat::Csv, ReportFormat::Json] {
        let report = render_report(&[(Method::RegionGrowing, metrics)], format).unwrap();
        assert!(report.contains("region_growing"));
        assert!(report.contains(&format!("{:.2}", round_percentage(metrics.accuracy))));
    }
}

#[test]
fn watershed_backend_runs_the_same_flow() {
    let dir = tempfile::tempdir().unwrap();
    let spec = PhantomSpec::with_defaults(3, 48, 48, 8);
    let manifest = write_phantom_set(&spec, dir.path()).unwrap();
    let config = PipelineConfig {
        resize_width: 48,
        resize_height: 48,
        method: Method::Watershed,
        ..PipelineConfig::default()
    };
    let records = run_pipeline(&config, &manifest).unwrap();
    assert_eq!(records.len(), 6);
    for r in &records {
        assert_eq!(r.method, Method::Watershed);
        assert!(!r.is_error());
    }
}

#[test]
fn manifest_supports_a_full_study_split() {
    // 253 images: tumour 124 train + 31 test, normal 78 train + 20 test
    let dir = tempfile::tempdir().unwrap();
    let pixel = GrayImage::new(1, 1, vec![0.5]).unwrap();
    let mut text = String::from("path,label,split\n");
    let mut add = |prefix: &str, label: &str, split: &str, n: usize, start: usize| {
        for i in 0..n {
            let name = format!("{prefix}_{:03}.png", start + i);
            pixel.save_png(dir.path().join(&name)).unwrap();
            text.push_str(&format!("{name},{label},{split}\n"));
        }
    };
    add("yes", "tumour", "train", 124, 0);
    add("yes", "tumour", "test", 31, 124);
    add("no", "non_tumour", "train", 78, 0);
    add("no", "non_tumour", "test", 20, 78);
    let path = dir.path().join("manifest.csv");
    std::fs::write(&path, text).unwrap();

    let manifest = DatasetManifest::load(&path).unwrap();
    assert_eq!(manifest.len(), 253);
    assert_eq!(manifest.count(Label::Tumour, Split::Train), 124);
    assert_eq!(manifest.count(Label::Tumour, Split::Test), 31);
    assert_eq!(manifest.count(Label::Normal, Split::Train), 78);
    assert_eq!(manifest.count(Label::Normal, Split::Test), 20);
    assert_eq!(manifest.split_entries(Split::Test).count(), 51);
}

#[test]
fn rule_file_on_disk_matches_the_embedded_default() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rules.fis");
    std::fs::write(&path, serialize_fis(&MamdaniFis::shipped_default())).unwrap();

    let from_disk = parse_fis(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let embedded = MamdaniFis::shipped_default();
    for i in 0..10 {
        for j in 0..10 {
            let features = FeatureVector {
                size_fraction: i as f64 / 9.0,
                global_threshold: j as f64 / 9.0,
            };
            let a = embedded.classify(&features).unwrap();
            let b = from_disk.classify(&features).unwrap();
            assert_eq!(a.crisp, b.crisp);
            assert_eq!(a.label, b.label);
        }
    }
}

#[test]
fn crisp_output_converges_with_resolution() {
    let coarse = MamdaniFis::shipped_default();
    let fine = coarse.clone().with_resolution(10001).unwrap();
    for i in 0..10 {
        for j in 0..10 {
            let features = FeatureVector {
                size_fraction: i as f64 / 9.0,
                global_threshold: j as f64 / 9.0,
            };
            let a = coarse.classify(&features).unwrap().crisp;
            let b = fine.classify(&features).unwrap().crisp;
            assert!(
                (a - b).abs() < 1e-3,
                "crisp drifted {:.6} between resolutions at ({i},{j})",
                (a - b).abs()
            );
        }
    }
}
