//! Published reference numbers and comparisons against them.
//!
//! The reference grid covers YOLOv9/v10/v11 and an MCNN-LSTM baseline on
//! the CWRU, PU and IMS bearing datasets. Those numbers come from full GPU
//! training on the real recordings, so deltas are informational only.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::eval::EvalReport;

pub const DATASETS: [&str; 3] = ["CWRU", "PU", "IMS"];
pub const MODELS: [&str; 4] = ["YOLOv9", "YOLOv10", "YOLOv11", "MCNN-LSTM"];
pub const COMPARISON_JSON: &str = "comparison.json";
pub const COMPARISON_TEXT: &str = "comparison.txt";

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("unknown reference ({dataset}, {model}); valid keys: {valid}")]
    UnknownKey {
        dataset: String,
        model: String,
        valid: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMetrics {
    pub map: f64,
    pub pre: f64,
    pub rec: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub dataset: String,
    pub model: String,
    pub metrics: ReferenceMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTable {
    pub rows: Vec<ReferenceRow>,
    pub provenance: String,
}

// Row order: CWRU, PU, IMS × YOLOv9, YOLOv10, YOLOv11, MCNN-LSTM.
// Columns: mAP@0.5, precision, recall, F1.
const TABLE: [[f64; 4]; 12] = [
    [0.994, 0.986, 0.985, 0.986],
    [0.994, 0.992, 0.981, 0.986],
    [0.990, 0.939, 0.985, 0.962],
    [0.960, 0.961, 0.961, 0.961],
    [0.916, 0.808, 0.848, 0.827],
    [0.972, 0.890, 0.927, 0.908],
    [0.978, 0.949, 0.938, 0.943],
    [0.777, 0.777, 0.774, 0.776],
    [0.995, 0.999, 1.000, 1.000],
    [0.995, 0.999, 1.000, 0.999],
    [0.995, 1.000, 1.000, 1.000],
    [0.968, 0.968, 0.968, 0.968],
];

/// The built-in reference grid (mAP@0.5, precision, recall, F1 as fractions).
pub fn load_reference_table() -> ReferenceTable {
    let mut rows = Vec::with_capacity(12);
    for (d, dataset) in DATASETS.iter().enumerate() {
        for (m, model) in MODELS.iter().enumerate() {
            let [map, pre, rec, f1] = TABLE[d * MODELS.len() + m];
            rows.push(ReferenceRow {
                dataset: dataset.to_string(),
                model: model.to_string(),
                metrics: ReferenceMetrics { map, pre, rec, f1 },
            });
        }
    }
    ReferenceTable {
        rows,
        provenance: "published CWT spectrogram + YOLO bearing-fault benchmark; \
                     percent values converted to fractions"
            .to_string(),
    }
}

impl ReferenceTable {
    pub fn get(&self, dataset: &str, model: &str) -> Result<&ReferenceMetrics, ReportError> {
        self.rows
            .iter()
            .find(|r| r.dataset.eq_ignore_ascii_case(dataset) && r.model.eq_ignore_ascii_case(model))
            .map(|r| &r.metrics)
            .ok_or_else(|| ReportError::UnknownKey {
                dataset: dataset.to_string(),
                model: model.to_string(),
                valid: self.valid_keys().join(", "),
            })
    }

    pub fn valid_keys(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| format!("({}, {})", r.dataset, r.model))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub metric: String,
    pub user: f64,
    pub reference: f64,
    /// `user − reference`.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub dataset: String,
    pub model: String,
    pub deltas: Vec<MetricDelta>,
    pub note: String,
}

pub fn compare(report: &EvalReport, dataset: &str, model: &str) -> Result<Comparison, ReportError> {
    compare_with(&load_reference_table(), report, dataset, model)
}

pub fn compare_with(
    table: &ReferenceTable,
    report: &EvalReport,
    dataset: &str,
    model: &str,
) -> Result<Comparison, ReportError> {
    let reference = table.get(dataset, model)?;
    let row = table
        .rows
        .iter()
        .find(|r| r.dataset.eq_ignore_ascii_case(dataset) && r.model.eq_ignore_ascii_case(model))
        .expect("key found above");
    let pairs = [
        ("mAP@0.5", report.map50, reference.map),
        ("precision", report.precision, reference.pre),
        ("recall", report.recall, reference.rec),
        ("f1", report.f1, reference.f1),
    ];
    Ok(Comparison {
        dataset: row.dataset.clone(),
        model: row.model.clone(),
        deltas: pairs
            .iter()
            .map(|&(metric, user, reference)| MetricDelta {
                metric: metric.to_string(),
                user,
                reference,
                delta: user - reference,
            })
            .collect(),
        note: "informational only: reference values come from GPU training on the real datasets"
            .to_string(),
    })
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "reference: {} / {}", self.dataset, self.model);
        let _ = writeln!(s, "{:<10} {:>8} {:>10} {:>8}", "metric", "yours", "reference", "delta");
        for d in &self.deltas {
            let _ = writeln!(
                s,
                "{:<10} {:>8.3} {:>10.3} {:>+8.3}",
                d.metric, d.user, d.reference, d.delta
            );
        }
        let _ = writeln!(s, "({})", self.note);
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serializes") + "\n"
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [(COMPARISON_JSON, self.to_json()), (COMPARISON_TEXT, self.to_text())] {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}
