//! Labeled image manifests and the synthetic phantom generator that
//! makes the pipeline testable without an external corpus.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::raster::{GrayImage, RasterError};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot access {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest: {0}")]
    Csv(#[from] csv::Error),
    #[error("manifest header must be exactly 'path,label,split', found '{0}'")]
    BadHeader(String),
    #[error("line {line}: unknown label '{token}' (expected tumour or non_tumour)")]
    UnknownLabel { token: String, line: usize },
    #[error("line {line}: unknown split '{token}' (expected train or test)")]
    UnknownSplit { token: String, line: usize },
    #[error("line {line}: duplicate path '{path}'")]
    DuplicatePath { path: String, line: usize },
    #[error("manifest references missing file {0}")]
    MissingImage(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("phantom spec invalid: {0}")]
    BadPhantomSpec(String),
}

/// Ground-truth class. Tumour is the positive class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Tumour,
    Normal,
}

impl Label {
    /// Token used in manifest and prediction CSV files.
    pub fn as_token(self) -> &'static str {
        match self {
            Label::Tumour => "tumour",
            Label::Normal => "non_tumour",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_token())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tumour" => Ok(Label::Tumour),
            "non_tumour" => Ok(Label::Normal),
            other => Err(format!("unknown label '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_token(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_token())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Image location, resolved against the manifest's directory.
    pub path: PathBuf,
    pub label: Label,
    pub split: Split,
}

/// Ordered list of labeled images.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Reads a `path,label,split` CSV. Relative image paths resolve
    /// against the manifest's own directory, and every referenced file
    /// must exist.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| {
                if e.is_io_error() {
                    DatasetError::Io {
                        path: path.display().to_string(),
                        source: std::io::Error::other(e),
                    }
                } else {
                    DatasetError::Csv(e)
                }
            })?;
        let header = reader.headers()?.clone();
        let expected = ["path", "label", "split"];
        if header.iter().collect::<Vec<_>>() != expected {
            return Err(DatasetError::BadHeader(header.iter().collect::<Vec<_>>().join(",")));
        }

        let mut entries = Vec::new();
        let mut seen: Vec<String> = Vec::new();
        for (idx, record) in reader.records().enumerate() {
            let record = record?;
            let line = idx + 2; // header is line 1
            let raw_path = record.get(0).unwrap_or("").to_string();
            let label_tok = record.get(1).unwrap_or("");
            let split_tok = record.get(2).unwrap_or("");
            if seen.contains(&raw_path) {
                return Err(DatasetError::DuplicatePath {
                    path: raw_path,
                    line,
                });
            }
            let label: Label = label_tok.parse().map_err(|_| DatasetError::UnknownLabel {
                token: label_tok.to_string(),
                line,
            })?;
            let split: Split = split_tok.parse().map_err(|_| DatasetError::UnknownSplit {
                token: split_tok.to_string(),
                line,
            })?;
            let resolved = if Path::new(&raw_path).is_absolute() {
                PathBuf::from(&raw_path)
            } else {
                base.join(&raw_path)
            };
            if !resolved.is_file() {
                return Err(DatasetError::MissingImage(resolved.display().to_string()));
            }
            seen.push(raw_path);
            entries.push(ManifestEntry {
                path: resolved,
                label,
                split,
            });
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries belonging to one split, in manifest order.
    pub fn split_entries(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn count(&self, label: Label, split: Split) -> usize {
        self.entries
            .iter()
            .filter(|e| e.label == label && e.split == split)
            .count()
    }
}

/// Recipe for a deterministic synthetic dataset: tumour-class images get
/// one bright disc over noisy background, normal-class images get noise
/// only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhantomSpec {
    pub per_class: usize,
    pub width: usize,
    pub height: usize,
    /// Inclusive disc radius range in pixels.
    pub radius: (u32, u32),
    pub blob_intensity: f64,
    pub background_mean: f64,
    pub noise_amplitude: f64,
    pub seed: u64,
}

impl PhantomSpec {
    /// Spec with derived defaults: disc radii sized so the blob covers
    /// 32-45% of the image (safely inside the default rule base's
    /// "large" band), bright blobs at 0.9 over 0.2 +/- 0.05 background.
    pub fn with_defaults(per_class: usize, width: usize, height: usize, seed: u64) -> Self {
        let area = (width * height) as f64;
        let r_min = (0.32 * area / std::f64::consts::PI).sqrt().ceil() as u32;
        let r_max = ((0.45 * area / std::f64::consts::PI).sqrt().floor() as u32).max(r_min);
        Self {
            per_class,
            width,
            height,
            radius: (r_min, r_max),
            blob_intensity: 0.9,
            background_mean: 0.2,
            noise_amplitude: 0.05,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let fail = |msg: String| Err(DatasetError::BadPhantomSpec(msg));
        if self.width == 0 || self.height == 0 {
            return fail("image dimensions must be positive".into());
        }
        let (r_lo, r_hi) = self.radius;
        if r_lo > r_hi {
            return fail(format!("radius range {r_lo}..={r_hi} is empty"));
        }
        let min_dim = self.width.min(self.height);
        if 2 * r_hi as usize + 1 > min_dim {
            return fail(format!(
                "radius {r_hi} does not fit a {}x{} image",
                self.width, self.height
            ));
        }
        for (name, v) in [
            ("blob_intensity", self.blob_intensity),
            ("background_mean", self.background_mean),
            ("noise_amplitude", self.noise_amplitude),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return fail(format!("{name} {v} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Generates `2 * per_class` images, tumour class first, as a pure
/// function of the recipe.
pub fn generate_phantoms(spec: &PhantomSpec) -> Result<Vec<(GrayImage, Label)>, DatasetError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(2 * spec.per_class);
    for i in 0..2 * spec.per_class {
        let label = if i < spec.per_class {
            Label::Tumour
        } else {
            Label::Normal
        };
        out.push((phantom_image(spec, label, &mut rng), label));
    }
    Ok(out)
}

fn phantom_image(spec: &PhantomSpec, label: Label, rng: &mut ChaCha8Rng) -> GrayImage {
    let disc = match label {
        Label::Tumour => {
            let r = rng.gen_range(spec.radius.0..=spec.radius.1) as i64;
            let cx = rng.gen_range(r as usize..=spec.width - 1 - r as usize) as i64;
            let cy = rng.gen_range(r as usize..=spec.height - 1 - r as usize) as i64;
            Some((cx, cy, r))
        }
        Label::Normal => None,
    };
    let amp = spec.noise_amplitude;
    GrayImage::from_fn(spec.width, spec.height, |x, y| {
        let base = match disc {
            Some((cx, cy, r)) => {
                let (dx, dy) = (x as i64 - cx, y as i64 - cy);
                if dx * dx + dy * dy <= r * r {
                    spec.blob_intensity
                } else {
                    spec.background_mean
                }
            }
            None => spec.background_mean,
        };
        (base + rng.gen_range(-amp..=amp)).clamp(0.0, 1.0)
    })
    .expect("phantom intensities are clamped into range")
}

/// Writes the phantom images plus a `manifest.csv` (all entries split
/// `test`) into `dir` and returns the loaded-equivalent manifest.
pub fn write_phantom_set(spec: &PhantomSpec, dir: impl AsRef<Path>) -> Result<DatasetManifest, DatasetError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| DatasetError::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    let phantoms = generate_phantoms(spec)?;
    let mut csv_text = String::from("path,label,split\n");
    let mut entries = Vec::with_capacity(phantoms.len());
    let mut tumour_idx = 0usize;
    let mut normal_idx = 0usize;
    for (img, label) in &phantoms {
        let name = match label {
            Label::Tumour => {
                tumour_idx += 1;
                format!("tumour_{:04}.png", tumour_idx - 1)
            }
            Label::Normal => {
                normal_idx += 1;
                format!("normal_{:04}.png", normal_idx - 1)
            }
        };
        let path = dir.join(&name);
        img.save_png(&path)?;
        csv_text.push_str(&format!("{name},{},test\n", label.as_token()));
        entries.push(ManifestEntry {
            path,
            label: *label,
            split: Split::Test,
        });
    }
    let manifest_path = dir.join("manifest.csv");
    fs::write(&manifest_path, csv_text).map_err(|e| DatasetError::Io {
        path: manifest_path.display().to_string(),
        source: e,
    })?;
    Ok(DatasetManifest { entries })
}
