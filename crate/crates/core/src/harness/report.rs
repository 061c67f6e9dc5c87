//! Experiment reports: one row per sweep cell, written as CSV or JSON.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detectors::DetectorKind;
use crate::error::{Error, Result};
use crate::metrics::METRIC_CONVENTIONS;

pub const CSV_HEADER: [&str; 13] = [
    "category",
    "detector",
    "strategy",
    "pollution",
    "refinement",
    "seed",
    "auc",
    "au_iou",
    "au_pro",
    "precision",
    "recall",
    "f1",
    "wall_time_s",
];

/// Strategy label of rows without refinement.
pub const NO_REFINEMENT: &str = "none";
pub const STATUS_OK: &str = "ok";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub category: String,
    pub detector: DetectorKind,
    pub strategy: String,
    pub pollution: f64,
    pub refinement: f64,
    pub seed: u64,
    pub auc: Option<f64>,
    pub au_iou: Option<f64>,
    pub au_pro: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub wall_time_s: f64,
    /// `ok`, or the reason the cell produced no metrics.
    #[serde(default = "ok")]
    pub status: String,
}

fn ok() -> String {
    STATUS_OK.to_string()
}

impl ReportRow {
    pub fn is_ok(&self) -> bool {
        self.status == STATUS_OK
    }

    fn csv_fields(&self) -> [String; 13] {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        [
            self.category.clone(),
            self.detector.to_string(),
            self.strategy.clone(),
            self.pollution.to_string(),
            self.refinement.to_string(),
            self.seed.to_string(),
            opt(self.auc),
            opt(self.au_iou),
            opt(self.au_pro),
            opt(self.precision),
            opt(self.recall),
            opt(self.f1),
            format!("{:.3}", self.wall_time_s),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub conventions: String,
    pub rows: Vec<ReportRow>,
}

/// Mean and sample standard deviation over the seeds of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub category: String,
    pub detector: DetectorKind,
    pub strategy: String,
    pub pollution: f64,
    pub refinement: f64,
    pub runs: usize,
    pub auc_mean: Option<f64>,
    pub auc_std: Option<f64>,
    pub au_iou_mean: Option<f64>,
    pub au_pro_mean: Option<f64>,
    pub precision_mean: Option<f64>,
    pub recall_mean: Option<f64>,
    pub f1_mean: Option<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn std_dev(v: &[f64]) -> Option<f64> {
    let m = mean(v)?;
    if v.len() < 2 {
        return Some(0.0);
    }
    Some((v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt())
}

impl ExperimentReport {
    pub fn new(rows: Vec<ReportRow>) -> Self {
        ExperimentReport {
            conventions: METRIC_CONVENTIONS.to_string(),
            rows,
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER)?;
        for row in &self.rows {
            w.write_record(row.csv_fields())?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes JSON for a `.json` path and CSV otherwise.
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = if path.extension().is_some_and(|e| e == "json") {
            self.to_json()?
        } else {
            self.to_csv_string()?
        };
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Reads a report saved by [`save`](Self::save). CSV input has no status
    /// column; rows with an empty `auc` are marked as failed.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            return Ok(serde_json::from_str(&text)?);
        }
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if header != CSV_HEADER {
            return Err(Error::InvalidInput(format!("{}: unexpected report header", path.display())));
        }
        let bad = |field: &str| Error::InvalidInput(format!("{}: bad field `{field}`", path.display()));
        let mut rows = Vec::new();
        for record in reader.records() {
            let r = record?;
            let num = |i: usize| r[i].parse::<f64>().map_err(|_| bad(&r[i]));
            let opt = |i: usize| -> Result<Option<f64>> {
                if r[i].is_empty() {
                    Ok(None)
                } else {
                    num(i).map(Some)
                }
            };
            let auc = opt(6)?;
            rows.push(ReportRow {
                category: r[0].to_string(),
                detector: r[1].parse()?,
                strategy: r[2].to_string(),
                pollution: num(3)?,
                refinement: num(4)?,
                seed: r[5].parse().map_err(|_| bad(&r[5]))?,
                auc,
                au_iou: opt(7)?,
                au_pro: opt(8)?,
                precision: opt(9)?,
                recall: opt(10)?,
                f1: opt(11)?,
                wall_time_s: num(12)?,
                status: if auc.is_some() { ok() } else { "failed".to_string() },
            });
        }
        Ok(ExperimentReport::new(rows))
    }

    /// Seed-aggregated rows, keyed by everything except the seed.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut groups: BTreeMap<(String, DetectorKind, String, u64, u64), Vec<&ReportRow>> = BTreeMap::new();
        for row in self.rows.iter().filter(|r| r.is_ok()) {
            let key = (
                row.category.clone(),
                row.detector,
                row.strategy.clone(),
                row.pollution.to_bits(),
                row.refinement.to_bits(),
            );
            groups.entry(key).or_default().push(row);
        }
        groups
            .into_iter()
            .map(|((category, detector, strategy, p, r), rows)| {
                let col = |f: fn(&ReportRow) -> Option<f64>| rows.iter().filter_map(|r| f(r)).collect::<Vec<_>>();
                let auc = col(|r| r.auc);
                SummaryRow {
                    category,
                    detector,
                    strategy,
                    pollution: f64::from_bits(p),
                    refinement: f64::from_bits(r),
                    runs: rows.len(),
                    auc_mean: mean(&auc),
                    auc_std: std_dev(&auc),
                    au_iou_mean: mean(&col(|r| r.au_iou)),
                    au_pro_mean: mean(&col(|r| r.au_pro)),
                    precision_mean: mean(&col(|r| r.precision)),
                    recall_mean: mean(&col(|r| r.recall)),
                    f1_mean: mean(&col(|r| r.f1)),
                }
            })
            .collect()
    }

    pub fn write_summary_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in self.summary() {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }
}
