//! Machine-readable run report (JSON) plus a flat CSV of per-query
//! predictions. No timestamps: identical runs emit identical bytes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{ItemCatalog, SplitSpec};
use crate::error::{Error, Result};
use crate::pipeline::PipelineOutcome;
use crate::retrieval::MuEvaluation;

const REPORT_FORMAT: &str = "fusecal-report";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub calibration_method: String,
    pub split: SplitSummary,
    /// Per-score test accuracy; the "fused" entry is always present.
    pub scores: Vec<ScoreReport>,
    pub fused_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget_curve: Option<Vec<BudgetPoint>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub mu_tuning: BTreeMap<String, Vec<MuEvaluation>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSummary {
    pub n_validation: usize,
    pub n_test: usize,
    pub n_calibration_items: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreReport {
    pub name: String,
    pub test_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen_mu: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BudgetPoint {
    pub budget: usize,
    pub accuracy: f64,
}

/// Paths written by [`emit_report`].
#[derive(Debug, Clone)]
pub struct ReportPaths {
    pub report: PathBuf,
    pub predictions: PathBuf,
}

pub fn build_report(
    outcome: &PipelineOutcome,
    split: &SplitSpec,
    seed: u64,
    calibration_method: &str,
    budget_curve: Option<Vec<BudgetPoint>>,
) -> Report {
    let mut scores: Vec<ScoreReport> = outcome
        .diagnostics
        .per_score_accuracy
        .iter()
        .map(|(name, &accuracy)| ScoreReport {
            name: name.clone(),
            test_accuracy: accuracy,
            chosen_mu: outcome.diagnostics.chosen_mu.get(name).copied(),
        })
        .collect();
    scores.push(ScoreReport {
        name: "fused".to_string(),
        test_accuracy: outcome.fused_accuracy,
        chosen_mu: None,
    });
    Report {
        format: REPORT_FORMAT.to_string(),
        version: 1,
        seed,
        calibration_method: calibration_method.to_string(),
        split: SplitSummary {
            n_validation: split.validation().len(),
            n_test: split.test().len(),
            n_calibration_items: outcome.diagnostics.calibration_items.len(),
        },
        scores,
        fused_accuracy: outcome.fused_accuracy,
        budget: outcome.diagnostics.budget,
        budget_curve,
        warnings: outcome.diagnostics.warnings.clone(),
        mu_tuning: outcome
            .diagnostics
            .mu_tuning
            .iter()
            .map(|(k, v)| (k.clone(), v.evaluations.clone()))
            .collect(),
    }
}

/// Write `report.json` and `predictions.csv` into `out_dir`.
pub fn emit_report(
    report: &Report,
    outcome: &PipelineOutcome,
    query_catalog: &ItemCatalog,
    db_catalog: &ItemCatalog,
    out_dir: &Path,
) -> Result<ReportPaths> {
    std::fs::create_dir_all(out_dir)?;
    let paths = ReportPaths {
        report: out_dir.join("report.json"),
        predictions: out_dir.join("predictions.csv"),
    };
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::Format {
        what: "report",
        message: e.to_string(),
    })?;
    std::fs::write(&paths.report, json + "\n")?;

    let mut csv = String::from(
        "query_id,query_identity,predicted_item_id,predicted_identity,fused_score,correct\n",
    );
    for p in &outcome.result.predictions {
        let true_identity = query_catalog.identity(p.query_index);
        let correct = true_identity == p.identity;
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            query_catalog.item_id(p.query_index),
            true_identity,
            db_catalog.item_id(p.db_index),
            p.identity,
            p.score,
            u8::from(correct)
        ));
    }
    std::fs::write(&paths.predictions, csv)?;
    Ok(paths)
}

pub fn read_report(path: &Path) -> Result<Report> {
    let text = std::fs::read_to_string(path)?;
    let report: Report = serde_json::from_str(&text).map_err(|e| Error::Format {
        what: "report",
        message: e.to_string(),
    })?;
    if report.format != REPORT_FORMAT {
        return Err(Error::Format {
            what: "report",
            message: format!("unexpected document format '{}'", report.format),
        });
    }
    Ok(report)
}
