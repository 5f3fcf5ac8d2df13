//! `btfuzz`: phantom generation, segmentation, fuzzy classification and
//! evaluation from one binary.
//!
//! Exit codes: 0 success, 1 fatal error (unreadable config, rule file,
//! manifest or image), 2 evaluation found zero comparable records.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use btfuzz_core::dataset::{write_phantom_set, DatasetManifest, PhantomSpec};
use btfuzz_core::eval::{compute_metrics, render_report, ReportFormat};
use btfuzz_core::fuzzy::parser::parse_fis;
use btfuzz_core::pipeline::{
    evaluate_predictions, load_config, read_predictions, run_pipeline, write_predictions,
    PipelineConfig, PipelineError,
};
use btfuzz_core::preprocess;
use btfuzz_core::raster::GrayImage;
use btfuzz_core::segmentation::{tumour_region, Method};

#[derive(Parser)]
#[command(
    name = "btfuzz",
    version,
    about = "Brain MRI tumour classification: segmentation plus fuzzy inference"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse::<Method>().map_err(|e| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic phantom set plus its manifest.csv
    Phantom {
        /// Total image count, split evenly between the two classes
        #[arg(long)]
        count: usize,
        /// Image dimensions as WxH
        #[arg(long, default_value = "64x64")]
        size: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify every test-split image listed in a manifest
    Classify {
        #[arg(long)]
        manifest: PathBuf,
        /// watershed or region-growing (overrides the config file)
        #[arg(long, value_parser = parse_method)]
        method: Option<Method>,
        /// Rule file (default: the built-in rule base)
        #[arg(long)]
        fis: Option<PathBuf>,
        /// key=value settings file
        #[arg(long)]
        config: Option<PathBuf>,
        /// Predictions CSV to write
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (overrides the config file)
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Score a predictions CSV against manifest ground truth
    Evaluate {
        /// Predictions CSV written by `classify`
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// text, csv or json
        #[arg(long, default_value = "text")]
        format: String,
    },
    /// Segment one image and write its region mask (debug aid)
    Segment {
        #[arg(long)]
        image: PathBuf,
        #[arg(long, value_parser = parse_method, default_value = "region-growing")]
        method: Method,
        /// Mask PNG to write
        #[arg(long)]
        out: PathBuf,
        /// key=value settings file
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Parse and validate a rule file
    FisCheck {
        #[arg(long)]
        fis: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help / --version land here too; only real usage errors fail
            let code = u8::from(e.use_stderr());
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_config_or_default(path: Option<&PathBuf>) -> Result<PipelineConfig> {
    match path {
        Some(p) => {
            load_config(p).with_context(|| format!("loading config {}", p.display()))
        }
        None => Ok(PipelineConfig::default()),
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Phantom {
            count,
            size,
            seed,
            out,
        } => {
            if count == 0 || count % 2 != 0 {
                bail!("--count must be a positive even number (half per class), got {count}");
            }
            let (w, h) = size
                .split_once('x')
                .and_then(|(w, h)| Some((w.parse::<usize>().ok()?, h.parse::<usize>().ok()?)))
                .with_context(|| format!("--size must look like 64x64, got '{size}'"))?;
            let spec = PhantomSpec::with_defaults(count / 2, w, h, seed);
            let manifest = write_phantom_set(&spec, &out)
                .with_context(|| format!("writing phantoms to {}", out.display()))?;
            println!(
                "wrote {} images and manifest.csv to {}",
                manifest.len(),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }

        Command::Classify {
            manifest,
            method,
            fis,
            config,
            out,
            workers,
        } => {
            let mut cfg = load_config_or_default(config.as_ref())?;
            if let Some(m) = method {
                cfg.method = m;
            }
            if let Some(f) = fis {
                cfg.fis_path = Some(f);
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let manifest = DatasetManifest::load(&manifest)
                .with_context(|| format!("loading manifest {}", manifest.display()))?;
            let records = run_pipeline(&cfg, &manifest)?;
            write_predictions(&records, &out)?;
            let errors = records.iter().filter(|r| r.is_error()).count();
            println!(
                "wrote {} records to {} ({} quarantined)",
                records.len(),
                out.display(),
                errors
            );
            Ok(ExitCode::SUCCESS)
        }

        Command::Evaluate {
            pred,
            manifest,
            format,
        } => {
            let format: ReportFormat = format.parse()?;
            let records = read_predictions(&pred)?;
            let manifest = DatasetManifest::load(&manifest)
                .with_context(|| format!("loading manifest {}", manifest.display()))?;
            let mut entries = Vec::new();
            for method in [Method::Watershed, Method::RegionGrowing] {
                let group: Vec<_> = records
                    .iter()
                    .filter(|r| r.method == method)
                    .cloned()
                    .collect();
                if group.is_empty() {
                    continue;
                }
                match evaluate_predictions(&group, &manifest) {
                    Ok(cm) => entries.push((method, compute_metrics(&cm)?)),
                    Err(PipelineError::NoComparableRecords) => continue,
                    Err(e) => return Err(e.into()),
                }
            }
            if entries.is_empty() {
                eprintln!("no comparable records between predictions and manifest");
                return Ok(ExitCode::from(2));
            }
            print!("{}", render_report(&entries, format)?);
            Ok(ExitCode::SUCCESS)
        }

        Command::Segment {
            image,
            method,
            out,
            config,
        } => {
            let mut cfg = load_config_or_default(config.as_ref())?;
            cfg.method = method;
            cfg.validate()?;
            let img = GrayImage::load(&image)
                .with_context(|| format!("loading {}", image.display()))?;
            let resized =
                preprocess::resize_with_aspect(&img, (cfg.resize_width, cfg.resize_height))?;
            let filtered = preprocess::median_filter(&resized, cfg.median_window)?;
            let params = btfuzz_core::segmentation::RegionParams {
                binarize_threshold: cfg.binarize_threshold,
                marker_radius: cfg.marker_radius,
                reconstruct_radius: cfg.reconstruct_radius,
                grow_tolerance: cfg.grow_tolerance,
            };
            let (mask, stats) = tumour_region(&filtered, method, &params)?;
            mask.save_png(&out)
                .with_context(|| format!("writing {}", out.display()))?;
            println!(
                "{}: size_fraction {:.6}, circularity {:.4} ({})",
                out.display(),
                stats.size_fraction,
                stats.circularity,
                method
            );
            Ok(ExitCode::SUCCESS)
        }

        Command::FisCheck { fis } => {
            let text = std::fs::read_to_string(&fis)
                .with_context(|| format!("reading {}", fis.display()))?;
            let parsed =
                parse_fis(&text).with_context(|| format!("rule file {}", fis.display()))?;
            println!("{}: OK ({parsed})", fis.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
