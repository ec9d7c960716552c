use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::Method;
use crate::gcn::Layer;
use crate::graph::Task;
use crate::metrics::PairedTTest;
use crate::util::write_atomic;

use super::config::{Evaluation, ExperimentConfig};

pub const REPORT_FORMAT: &str = "advgnn-report";
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub epsilon: f64,
    pub val_accuracy: Option<f64>,
    /// Validation correlation or precision.
    pub val_metric: Option<f64>,
    pub selected: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateReport {
    pub replicate: usize,
    pub epsilon: f64,
    pub best_epoch: usize,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    /// Mean Spearman correlation or mean precision on the test split.
    pub metric: f64,
    pub pearson: Option<f64>,
    pub degenerate: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub id: String,
    pub adversarial: bool,
    pub layer: Option<Layer>,
    pub method: Method,
    pub metric: String,
    pub chosen_epsilon: Option<f64>,
    pub sweep: Vec<SweepPoint>,
    pub replicates: Vec<ReplicateReport>,
    /// Mean and sample standard deviation across replicates.
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub mean_pearson: Option<f64>,
    pub mean_test_accuracy: Option<f64>,
    /// Precision of uniformly random scores on the same instances.
    pub random_baseline: Option<f64>,
    pub samples: usize,
    pub failed: Option<String>,
}

impl CellReport {
    pub(crate) fn new(id: String, layer: Option<Layer>, method: Method, eval: Evaluation) -> Self {
        Self {
            id,
            adversarial: layer.is_some(),
            layer,
            method,
            metric: eval.metric_name().into(),
            chosen_epsilon: None,
            sweep: Vec::new(),
            replicates: Vec::new(),
            mean: None,
            std: None,
            mean_pearson: None,
            mean_test_accuracy: None,
            random_baseline: None,
            samples: 0,
            failed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub method: Method,
    pub layer: Option<Layer>,
    pub baseline_mean: f64,
    pub adversarial_mean: f64,
    /// One-sided paired t-test of `baseline > adversarial` over replicates.
    pub baseline_greater: Option<PairedTTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub format: String,
    pub version: u32,
    pub name: String,
    pub evaluation: Evaluation,
    pub metric: String,
    pub task: Task,
    pub dataset_fingerprint: String,
    pub rng_algorithm: String,
    /// Train, validation and test sizes.
    pub split_sizes: [usize; 3],
    pub dataset_warnings: Vec<String>,
    /// Some cell failed.
    pub partial: bool,
    /// Test-split scorings per cell; each cell is scored exactly once.
    pub test_evaluations: BTreeMap<String, usize>,
    pub cells: Vec<CellReport>,
    pub comparisons: Vec<Comparison>,
    /// Resolved configuration; enough to rerun the experiment.
    pub config: ExperimentConfig,
}

impl ExperimentReport {
    pub fn cell(&self, id: &str) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.id == id)
    }
}

/// One long-format result line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model_id: String,
    pub trial: Option<usize>,
    pub instance_id: usize,
    pub metric: String,
    pub value: f64,
}

impl ResultRow {
    pub(crate) fn new(model_id: &str, trial: Option<usize>, instance_id: usize, metric: &str, value: f64) -> Self {
        Self { model_id: model_id.into(), trial, instance_id, metric: metric.into(), value }
    }
}

/// Everything an experiment produces before it touches the disk.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub results: Vec<ResultRow>,
    /// `(file name, DOT source)` pairs.
    pub dots: Vec<(String, String)>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

impl ExperimentOutput {
    /// Table with one row per cell.
    pub fn summary_csv(&self) -> Result<String> {
        let r = &self.report;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "adversarial_training",
            "perturbation_layer",
            "explanation_type",
            r.metric.as_str(),
            "std",
            "replicates",
            "chosen_epsilon",
            "mean_test_accuracy",
            "status",
        ])?;
        for c in &r.cells {
            w.write_record([
                c.adversarial.to_string(),
                c.layer.map(|l| l.label().to_string()).unwrap_or_else(|| "-".into()),
                c.method.id().to_string(),
                opt(c.mean),
                opt(c.std),
                c.replicates.len().to_string(),
                opt(c.chosen_epsilon),
                opt(c.mean_test_accuracy),
                if c.failed.is_some() { "failed".into() } else { "ok".into() },
            ])?;
        }
        finish(w)
    }

    /// `model_id,trial,instance_id,metric,value`.
    pub fn results_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["model_id", "trial", "instance_id", "metric", "value"])?;
        for row in &self.results {
            w.write_record([
                row.model_id.clone(),
                row.trial.map(|t| t.to_string()).unwrap_or_default(),
                row.instance_id.to_string(),
                row.metric.clone(),
                row.value.to_string(),
            ])?;
        }
        finish(w)
    }

    /// Per-replicate distribution data.
    pub fn replicates_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["cell_id", "replicate", "epsilon", "val_accuracy", "test_accuracy", "metric", "pearson", "degenerate"])?;
        for c in &self.report.cells {
            for r in &c.replicates {
                w.write_record([
                    c.id.clone(),
                    r.replicate.to_string(),
                    r.epsilon.to_string(),
                    r.val_accuracy.to_string(),
                    r.test_accuracy.to_string(),
                    r.metric.to_string(),
                    opt(r.pearson),
                    r.degenerate.to_string(),
                ])?;
            }
        }
        finish(w)
    }

    pub fn sweep_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["cell_id", "epsilon", "val_accuracy", "val_metric", "selected", "error"])?;
        for c in &self.report.cells {
            for p in &c.sweep {
                w.write_record([
                    c.id.clone(),
                    p.epsilon.to_string(),
                    opt(p.val_accuracy),
                    opt(p.val_metric),
                    p.selected.to_string(),
                    p.error.clone().unwrap_or_default(),
                ])?;
            }
        }
        finish(w)
    }

    /// Writes `report.json`, the CSV files and `dot/*.dot` under `dir`,
    /// each file atomically.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut report = serde_json::to_string_pretty(&self.report)?;
        report.push('\n');
        write_atomic(&dir.join("report.json"), report.as_bytes())?;
        write_atomic(&dir.join("summary.csv"), self.summary_csv()?.as_bytes())?;
        write_atomic(&dir.join("results.csv"), self.results_csv()?.as_bytes())?;
        write_atomic(&dir.join("replicates.csv"), self.replicates_csv()?.as_bytes())?;
        write_atomic(&dir.join("sweep.csv"), self.sweep_csv()?.as_bytes())?;
        for (name, text) in &self.dots {
            write_atomic(&dir.join("dot").join(name), text.as_bytes())?;
        }
        Ok(())
    }
}
