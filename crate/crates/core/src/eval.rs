//! Confusion matrix and accuracy/precision/recall/F1 reporting, one
//! column per segmentation method. Tumour is the positive class.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::dataset::Label;
use crate::segmentation::Method;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("prediction and truth lists differ in length ({predictions} vs {truth})")]
    LengthMismatch { predictions: usize, truth: usize },
    #[error("cannot evaluate an empty list")]
    Empty,
    #[error("confusion matrix has no observations")]
    EmptyMatrix,
    #[error("report needs at least one method entry")]
    EmptyReport,
    #[error("unknown report format '{0}' (expected text, csv or json)")]
    UnknownFormat(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub true_negatives: u64,
}

impl ConfusionMatrix {
    pub fn new(
        true_positives: u64,
        false_positives: u64,
        false_negatives: u64,
        true_negatives: u64,
    ) -> Self {
        Self {
            true_positives,
            false_positives,
            false_negatives,
            true_negatives,
        }
    }

    pub fn total(&self) -> u64 {
        self.true_positives + self.false_positives + self.false_negatives + self.true_negatives
    }

    pub fn record(&mut self, predicted: Label, truth: Label) {
        match (predicted, truth) {
            (Label::Tumour, Label::Tumour) => self.true_positives += 1,
            (Label::Tumour, Label::Normal) => self.false_positives += 1,
            (Label::Normal, Label::Tumour) => self.false_negatives += 1,
            (Label::Normal, Label::Normal) => self.true_negatives += 1,
        }
    }
}

/// Tallies aligned prediction/truth lists.
pub fn confusion_matrix(predictions: &[Label], truth: &[Label]) -> Result<ConfusionMatrix, EvalError> {
    if predictions.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            truth: truth.len(),
        });
    }
    if predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in predictions.iter().zip(truth) {
        cm.record(p, t);
    }
    Ok(cm)
}

/// Percentages in `[0, 100]`, unrounded. Ratios with a zero denominator
/// are absent rather than coerced to 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<Metrics, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let pct = |num: u64, den: u64| {
        if den == 0 {
            None
        } else {
            Some(100.0 * num as f64 / den as f64)
        }
    };
    let accuracy = 100.0 * (cm.true_positives + cm.true_negatives) as f64 / total as f64;
    let precision = pct(cm.true_positives, cm.true_positives + cm.false_positives);
    let recall = pct(cm.true_positives, cm.true_positives + cm.false_negatives);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Ok(Metrics {
        accuracy,
        precision,
        recall,
        f1,
    })
}

/// Half-up rounding to two decimal places, the precision reports print.
pub fn round_percentage(p: f64) -> f64 {
    (p * 100.0).round() / 100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(EvalError::UnknownFormat(other.to_string())),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Text => "text",
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        })
    }
}

/// Method token used as a report column name.
fn column_token(method: Method) -> &'static str {
    match method {
        Method::Watershed => "watershed",
        Method::RegionGrowing => "region_growing",
    }
}

const METRIC_ROWS: [&str; 4] = ["accuracy", "precision", "recall", "f1"];

fn metric_value(metrics: &Metrics, row: &str) -> Option<f64> {
    match row {
        "accuracy" => Some(metrics.accuracy),
        "precision" => metrics.precision,
        "recall" => metrics.recall,
        "f1" => metrics.f1,
        _ => unreachable!("fixed row set"),
    }
}

fn format_rounded(v: f64) -> String {
    format!("{:.2}", round_percentage(v))
}

/// Renders one metrics column per method, watershed first, percentages
/// to two decimals. Absent ratios render as an empty CSV cell, a `-` in
/// text, and `null` in JSON.
pub fn render_report(
    entries: &[(Method, Metrics)],
    format: ReportFormat,
) -> Result<String, EvalError> {
    if entries.is_empty() {
        return Err(EvalError::EmptyReport);
    }
    let mut ordered: Vec<&(Method, Metrics)> = entries.iter().collect();
    ordered.sort_by_key(|(m, _)| match m {
        Method::Watershed => 0,
        Method::RegionGrowing => 1,
    });

    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            out.push_str("metric");
            for (m, _) in &ordered {
                out.push(',');
                out.push_str(column_token(*m));
            }
            out.push('\n');
            for row in METRIC_ROWS {
                out.push_str(row);
                for (_, metrics) in &ordered {
                    out.push(',');
                    if let Some(v) = metric_value(metrics, row) {
                        out.push_str(&format_rounded(v));
                    }
                }
                out.push('\n');
            }
        }
        ReportFormat::Text => {
            let name_width = "precision".len();
            let col_width = 16;
            out.push_str(&format!("{:<name_width$}", "metric"));
            for (m, _) in &ordered {
                out.push_str(&format!("{:>col_width$}", column_token(*m)));
            }
            out.push('\n');
            for row in METRIC_ROWS {
                out.push_str(&format!("{row:<name_width$}"));
                for (_, metrics) in &ordered {
                    let cell = match metric_value(metrics, row) {
                        Some(v) => format_rounded(v),
                        None => "-".to_string(),
                    };
                    out.push_str(&format!("{cell:>col_width$}"));
                }
                out.push('\n');
            }
        }
        ReportFormat::Json => {
            // fixed tokens and numbers only, so hand assembly is safe
            out.push_str("{\n");
            for (i, (m, metrics)) in ordered.iter().enumerate() {
                out.push_str(&format!("  \"{}\": {{\n", column_token(*m)));
                for (j, row) in METRIC_ROWS.iter().enumerate() {
                    let value = match metric_value(metrics, row) {
                        Some(v) => format_rounded(v),
                        None => "null".to_string(),
                    };
                    let comma = if j + 1 < METRIC_ROWS.len() { "," } else { "" };
                    out.push_str(&format!("    \"{row}\": {value}{comma}\n"));
                }
                let comma = if i + 1 < ordered.len() { "," } else { "" };
                out.push_str(&format!("  }}{comma}\n"));
            }
            out.push_str("}\n");
        }
    }
    Ok(out)
}
