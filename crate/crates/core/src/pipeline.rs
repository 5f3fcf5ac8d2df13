//! Batch orchestration: run every test-split image through
//! preprocess → segment → classify, quarantining per-image failures, and
//! join the resulting predictions back against manifest truth.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::{DatasetError, DatasetManifest, Label, Split};
use crate::eval::{confusion_matrix, ConfusionMatrix, EvalError};
use crate::fuzzy::parser::{parse_fis, ParseError};
use crate::fuzzy::{FeatureVector, FuzzyError, MamdaniFis};
use crate::preprocess::{self, DEFAULT_TAIL_FRACTION};
use crate::raster::GrayImage;
use crate::segmentation::{self, Method, RegionParams};
use crate::threshold::global_threshold_feature;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config {path}: line {line}: {message}")]
    Config {
        path: String,
        line: usize,
        message: String,
    },
    #[error("invalid {key}: {message}")]
    Setting { key: &'static str, message: String },
    #[error("{path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("rule file {path}")]
    Fis {
        path: String,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    Fuzzy(#[from] FuzzyError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("predictions {path}: line {line}: {message}")]
    Predictions {
        path: String,
        line: usize,
        message: String,
    },
    #[error("no comparable records between predictions and manifest")]
    NoComparableRecords,
}

/// Everything `run_pipeline` needs besides the manifest. Mirrors the
/// `key=value` lines of a config file one to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub resize_width: usize,
    pub resize_height: usize,
    pub median_window: usize,
    pub binarize_threshold: f64,
    pub method: Method,
    pub marker_radius: u32,
    pub reconstruct_radius: u32,
    pub grow_tolerance: f64,
    /// Rule file to load; the embedded default when absent.
    pub fis_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub workers: usize,
    /// Recorded for phantom generation; the processing stages themselves
    /// are deterministic and never draw from it.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            resize_width: 128,
            resize_height: 128,
            median_window: preprocess::DEFAULT_MEDIAN_WINDOW,
            binarize_threshold: preprocess::DEFAULT_BINARIZE_THRESHOLD,
            method: Method::RegionGrowing,
            marker_radius: segmentation::DEFAULT_MARKER_RADIUS,
            reconstruct_radius: segmentation::DEFAULT_RECONSTRUCT_RADIUS,
            grow_tolerance: segmentation::DEFAULT_GROW_TOLERANCE,
            fis_path: None,
            out_dir: PathBuf::from("."),
            workers: 1,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Checks every numeric field against the preconditions of the stage
    /// that consumes it, so violations fail fast instead of per image.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let setting = |key, message: String| Err(PipelineError::Setting { key, message });
        if self.resize_width == 0 || self.resize_height == 0 {
            return setting("resize", "target dimensions must be positive".into());
        }
        if self.median_window == 0 || self.median_window.is_multiple_of(2) {
            return setting(
                "median_window",
                format!("must be odd and positive, got {}", self.median_window),
            );
        }
        if !(0.0..=1.0).contains(&self.binarize_threshold) {
            return setting(
                "binarize_threshold",
                format!("must lie in [0, 1], got {}", self.binarize_threshold),
            );
        }
        if !(0.0..=1.0).contains(&self.grow_tolerance) {
            return setting(
                "grow_tolerance",
                format!("must lie in [0, 1], got {}", self.grow_tolerance),
            );
        }
        if self.workers == 0 {
            return setting("workers", "need at least one worker".into());
        }
        Ok(())
    }

    fn region_params(&self) -> RegionParams {
        RegionParams {
            binarize_threshold: self.binarize_threshold,
            marker_radius: self.marker_radius,
            reconstruct_radius: self.reconstruct_radius,
            grow_tolerance: self.grow_tolerance,
        }
    }

    /// Loads the configured rule file, or the embedded default when no
    /// path is set. A missing or malformed file is fatal.
    pub fn load_fis(&self) -> Result<MamdaniFis, PipelineError> {
        match &self.fis_path {
            None => Ok(MamdaniFis::shipped_default()),
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| PipelineError::Io {
                    path: path.display().to_string(),
                    source: e,
                })?;
                parse_fis(&text).map_err(|e| PipelineError::Fis {
                    path: path.display().to_string(),
                    source: e,
                })
            }
        }
    }
}

/// Parses a `key=value` config file ('#' comments, blank lines ignored,
/// later assignments win). Keys are the `PipelineConfig` field names; a
/// relative `fis_path` resolves against the config file's directory.
pub fn load_config(path: impl AsRef<Path>) -> Result<PipelineConfig, PipelineError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| PipelineError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut config = PipelineConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let fail = |message: String| {
            Err(PipelineError::Config {
                path: path.display().to_string(),
                line: line_no,
                message,
            })
        };
        let line = match raw.find('#') {
            Some(cut) => &raw[..cut],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return fail(format!("expected key=value, got '{line}'"));
        };
        let (key, value) = (key.trim(), value.trim());
        macro_rules! parsed {
            ($ty:ty) => {
                match value.parse::<$ty>() {
                    Ok(v) => v,
                    Err(e) => return fail(format!("{key}: {e}")),
                }
            };
        }
        match key {
            "resize_width" => config.resize_width = parsed!(usize),
            "resize_height" => config.resize_height = parsed!(usize),
            "median_window" => config.median_window = parsed!(usize),
            "binarize_threshold" => config.binarize_threshold = parsed!(f64),
            "method" => config.method = parsed!(Method),
            "marker_radius" => config.marker_radius = parsed!(u32),
            "reconstruct_radius" => config.reconstruct_radius = parsed!(u32),
            "grow_tolerance" => config.grow_tolerance = parsed!(f64),
            "fis_path" => config.fis_path = Some(base.join(value)),
            "out_dir" => config.out_dir = PathBuf::from(value),
            "workers" => config.workers = parsed!(usize),
            "seed" => config.seed = parsed!(u64),
            other => return fail(format!("unknown key '{other}'")),
        }
    }
    config.validate()?;
    Ok(config)
}

/// One image's trip through the pipeline. A failed image keeps its row:
/// the numeric fields and label go absent and `flags` carries a single
/// `error:` entry.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub path: String,
    pub method: Method,
    pub size_fraction: Option<f64>,
    pub global_threshold: Option<f64>,
    pub crisp: Option<f64>,
    pub label: Option<Label>,
    pub flags: Vec<String>,
}

impl PredictionRecord {
    pub fn is_error(&self) -> bool {
        self.flags.iter().any(|f| f.starts_with("error:"))
    }
}

/// Flag strings ride in one CSV cell, so they must stay free of the cell
/// separator and record separator.
fn sanitize_flag(text: &str) -> String {
    text.replace(['\n', '\r'], " ").replace([',', ';'], " ")
}

/// Display plus every source, joined with ": ".
fn error_chain(e: &dyn std::error::Error) -> String {
    let mut text = e.to_string();
    let mut cur = e.source();
    while let Some(s) = cur {
        text.push_str(": ");
        text.push_str(&s.to_string());
        cur = s.source();
    }
    text
}

fn classify_one(
    path: &Path,
    config: &PipelineConfig,
    fis: &MamdaniFis,
) -> Result<(f64, f64, f64, Label, Vec<String>), String> {
    let err = |stage: &str, e: &dyn std::error::Error| format!("{stage}: {}", error_chain(e));
    let image = GrayImage::load(path).map_err(|e| err("load", &e))?;
    let resized =
        preprocess::resize_with_aspect(&image, (config.resize_width, config.resize_height))
            .map_err(|e| err("resize", &e))?;
    let filtered = preprocess::median_filter(&resized, config.median_window)
        .map_err(|e| err("median", &e))?;

    // feature path: intensity adjustment feeds the Otsu threshold
    let adjusted =
        preprocess::adjust_intensity(&filtered, DEFAULT_TAIL_FRACTION, DEFAULT_TAIL_FRACTION)
            .map_err(|e| err("adjust", &e))?;
    let threshold = global_threshold_feature(&adjusted).value();

    // region path: binarize and segment the filtered image
    let (_, stats) = segmentation::tumour_region(&filtered, config.method, &config.region_params())
        .map_err(|e| err("segment", &e))?;

    let features = FeatureVector {
        size_fraction: stats.size_fraction,
        global_threshold: threshold,
    };
    let result = fis.classify(&features).map_err(|e| err("classify", &e))?;
    let mut flags = Vec::new();
    if result.flags.no_rule_fired {
        flags.push("no_rule_fired".to_string());
    }
    Ok((
        stats.size_fraction,
        threshold,
        result.crisp,
        result.label,
        flags,
    ))
}

/// Classifies every test-split image. Records come back in manifest
/// order whatever the worker count, and one bad image never sinks the
/// batch; only an unloadable rule file is fatal.
pub fn run_pipeline(
    config: &PipelineConfig,
    manifest: &DatasetManifest,
) -> Result<Vec<PredictionRecord>, PipelineError> {
    config.validate()?;
    let fis = config.load_fis()?;
    let entries: Vec<_> = manifest.split_entries(Split::Test).collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| PipelineError::Setting {
            key: "workers",
            message: e.to_string(),
        })?;
    let records = pool.install(|| {
        entries
            .par_iter()
            .map(|entry| {
                let path = entry.path.display().to_string();
                match classify_one(&entry.path, config, &fis) {
                    Ok((size, threshold, crisp, label, flags)) => PredictionRecord {
                        path,
                        method: config.method,
                        size_fraction: Some(size),
                        global_threshold: Some(threshold),
                        crisp: Some(crisp),
                        label: Some(label),
                        flags,
                    },
                    Err(message) => PredictionRecord {
                        path,
                        method: config.method,
                        size_fraction: None,
                        global_threshold: None,
                        crisp: None,
                        label: None,
                        flags: vec![format!("error:{}", sanitize_flag(&message))],
                    },
                }
            })
            .collect()
    });
    Ok(records)
}

pub const PREDICTIONS_HEADER: [&str; 7] = [
    "path",
    "method",
    "size_fraction",
    "global_threshold",
    "crisp",
    "label",
    "flags",
];

fn float_cell(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.6}"),
        None => String::new(),
    }
}

/// Writes records as CSV. Floats carry six decimals, absent fields are
/// empty cells, flags share one cell joined by ';'.
pub fn write_predictions(
    records: &[PredictionRecord],
    path: impl AsRef<Path>,
) -> Result<(), PipelineError> {
    let path = path.as_ref();
    let io_err = |e: csv::Error| PipelineError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    };
    let mut writer = csv::Writer::from_path(path).map_err(io_err)?;
    writer.write_record(PREDICTIONS_HEADER).map_err(io_err)?;
    for r in records {
        writer
            .write_record([
                r.path.as_str(),
                r.method.as_str(),
                &float_cell(r.size_fraction),
                &float_cell(r.global_threshold),
                &float_cell(r.crisp),
                r.label.map(|l| l.as_token()).unwrap_or(""),
                &r.flags.join(";"),
            ])
            .map_err(io_err)?;
    }
    writer.flush().map_err(|e| PipelineError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(())
}

/// Reads a predictions CSV written by [`write_predictions`].
pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>, PipelineError> {
    let path = path.as_ref();
    let fail = |line: usize, message: String| PipelineError::Predictions {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| {
            if e.is_io_error() {
                PipelineError::Io {
                    path: path.display().to_string(),
                    source: std::io::Error::other(e),
                }
            } else {
                fail(1, e.to_string())
            }
        })?;
    let header = reader.headers().map_err(|e| fail(1, e.to_string()))?;
    if header.iter().ne(PREDICTIONS_HEADER) {
        return Err(fail(
            1,
            format!("expected header {}", PREDICTIONS_HEADER.join(",")),
        ));
    }
    let mut records = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        let line = idx + 2;
        let row = row.map_err(|e| fail(line, e.to_string()))?;
        if row.len() != PREDICTIONS_HEADER.len() {
            return Err(fail(line, format!("expected 7 fields, got {}", row.len())));
        }
        let float = |cell: &str, name: &str| -> Result<Option<f64>, PipelineError> {
            if cell.is_empty() {
                Ok(None)
            } else {
                cell.parse::<f64>()
                    .map(Some)
                    .map_err(|e| fail(line, format!("{name}: {e}")))
            }
        };
        let method = row[1]
            .parse::<Method>()
            .map_err(|e| fail(line, e.to_string()))?;
        let label = if row[5].is_empty() {
            None
        } else {
            Some(
                row[5]
                    .parse::<Label>()
                    .map_err(|e| fail(line, e.to_string()))?,
            )
        };
        let flags = if row[6].is_empty() {
            Vec::new()
        } else {
            row[6].split(';').map(str::to_string).collect()
        };
        records.push(PredictionRecord {
            path: row[0].to_string(),
            method,
            size_fraction: float(&row[2], "size_fraction")?,
            global_threshold: float(&row[3], "global_threshold")?,
            crisp: float(&row[4], "crisp")?,
            label,
            flags,
        });
    }
    Ok(records)
}

/// Joins predictions against manifest truth by exact path string and
/// tallies the comparable pairs. Error records and paths missing from
/// the manifest are skipped; zero comparable pairs is an error so the
/// caller can distinguish "evaluated nothing" from a real score.
pub fn evaluate_predictions(
    records: &[PredictionRecord],
    manifest: &DatasetManifest,
) -> Result<ConfusionMatrix, PipelineError> {
    let truth: std::collections::HashMap<String, Label> = manifest
        .entries()
        .iter()
        .map(|e| (e.path.display().to_string(), e.label))
        .collect();
    let mut predicted = Vec::new();
    let mut actual = Vec::new();
    for r in records {
        let (Some(label), Some(&t)) = (r.label, truth.get(&r.path)) else {
            continue;
        };
        predicted.push(label);
        actual.push(t);
    }
    if predicted.is_empty() {
        return Err(PipelineError::NoComparableRecords);
    }
    Ok(confusion_matrix(&predicted, &actual)?)
}
