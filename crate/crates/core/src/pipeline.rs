//! End-to-end retrieval pipeline: raw scoring, validation-only calibration,
//! fusion, optional budgeted shortlist, and test-split evaluation.

use std::collections::BTreeMap;

use crate::calibration::{
    apply_calibrator, fit_calibrator, CalibrationMethod, Calibrator,
};
use crate::data::{
    build_pair_labels_with, ItemCatalog, MatchRecordSet, EmbeddingMatrix, Role, ScoreMatrix,
    SplitSpec,
};
use crate::error::{Error, Result};
use crate::fusion::{default_config, fuse, FusionConfig, FusionInput};
use crate::retrieval::{
    rank_top1, shortlist_rerank, subsample_calibration_set, subset_accuracy, tune_mu, Budget,
    MuTuneOutcome, Prediction, RetrievalResult,
};
use crate::seeds::derive_seed;
use crate::similarity::{global_score_matrix, local_score_matrix, MatchThreshold};

/// How the local-match threshold is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum MuPolicy {
    Fixed(f64),
    /// Grid search on the validation split; `None` uses the default grid.
    Tuned { grid: Option<Vec<f64>> },
}

/// A named global score source: query and database embeddings.
#[derive(Debug, Clone)]
pub struct GlobalSource {
    pub name: String,
    pub query: EmbeddingMatrix,
    pub database: EmbeddingMatrix,
}

/// A named local score source: per-pair match confidences.
#[derive(Debug, Clone)]
pub struct LocalSource {
    pub name: String,
    pub records: MatchRecordSet,
}

/// Everything the pipeline consumes.
#[derive(Debug, Clone)]
pub struct PipelineInputs {
    pub query_catalog: ItemCatalog,
    pub db_catalog: ItemCatalog,
    pub globals: Vec<GlobalSource>,
    pub locals: Vec<LocalSource>,
    pub split: SplitSpec,
}

/// Pipeline knobs.
#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub calibration: CalibrationMethod,
    pub mu: MuPolicy,
    /// Fusion weights; equal weights over all sources when absent.
    pub fusion: Option<FusionConfig>,
    /// Budgeted shortlist re-ranking of the fused score.
    pub budget: Option<Budget>,
    /// Pre-fitted calibrators keyed by score name. When set, nothing is
    /// fitted on this dataset and mu must be fixed.
    pub zero_shot: Option<BTreeMap<String, Calibrator>>,
    /// Calibrate on a seeded subsample of this many validation items.
    pub subsample_items: Option<usize>,
    pub seed: u64,
}

impl PipelineOptions {
    pub fn new(calibration: CalibrationMethod, mu: MuPolicy, seed: u64) -> Self {
        Self {
            calibration,
            mu,
            fusion: None,
            budget: None,
            zero_shot: None,
            subsample_items: None,
            seed,
        }
    }
}

/// Per-run diagnostics next to the headline result.
#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    /// Test-split top-1 accuracy per single calibrated score.
    pub per_score_accuracy: BTreeMap<String, f64>,
    /// Chosen mu per local score.
    pub chosen_mu: BTreeMap<String, f64>,
    /// Full grid evaluations per tuned local score.
    pub mu_tuning: BTreeMap<String, MuTuneOutcome>,
    pub warnings: Vec<String>,
    /// Validation items actually used for calibration.
    pub calibration_items: Vec<usize>,
    pub budget: Option<usize>,
    /// Expensive evaluations per query when a budget was set.
    pub expensive_evaluations_per_query: Option<usize>,
}

/// Result bundle of a pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub result: RetrievalResult,
    pub fused_accuracy: f64,
    pub diagnostics: Diagnostics,
    pub calibrators: BTreeMap<String, Calibrator>,
}

/// Staged access to query identities. Test-split labels are unreadable
/// until `unlock`; reading one earlier is a programming error and panics.
struct SplitGuard<'a> {
    catalog: &'a ItemCatalog,
    allowed: Vec<bool>,
    unlocked: bool,
}

impl<'a> SplitGuard<'a> {
    fn new(catalog: &'a ItemCatalog, validation: &[usize]) -> Self {
        let mut allowed = vec![false; catalog.len()];
        for &i in validation {
            allowed[i] = true;
        }
        Self {
            catalog,
            allowed,
            unlocked: false,
        }
    }

    fn identity(&self, index: usize) -> &str {
        assert!(
            self.unlocked || self.allowed[index],
            "split guard violation: test-split identity {index} read before final evaluation"
        );
        self.catalog.identity(index)
    }

    /// Catalog clone whose test-split identities are replaced by opaque
    /// sentinels, so phase-one code cannot read them even by accident.
    fn masked_catalog(&self) -> ItemCatalog {
        let entries = self
            .catalog
            .items()
            .iter()
            .enumerate()
            .map(|(i, item)| {
                let identity = if self.allowed[i] {
                    item.identity_id.clone()
                } else {
                    format!("\u{1}locked:{i}")
                };
                (item.item_id.clone(), identity)
            })
            .collect();
        ItemCatalog::new(self.catalog.role(), entries)
            .expect("masking preserves catalog invariants")
    }

    fn unlock(&mut self) {
        self.unlocked = true;
    }
}

fn validate_inputs(inputs: &PipelineInputs) -> Result<()> {
    if inputs.query_catalog.role() != Role::Query || inputs.db_catalog.role() != Role::Database {
        return Err(Error::Config(
            "catalog roles must be query and database".into(),
        ));
    }
    if inputs.globals.is_empty() && inputs.locals.is_empty() {
        return Err(Error::Config("pipeline needs at least one score source".into()));
    }
    let mut names: Vec<&str> = Vec::new();
    for name in inputs
        .globals
        .iter()
        .map(|g| g.name.as_str())
        .chain(inputs.locals.iter().map(|l| l.name.as_str()))
    {
        if name.is_empty() {
            return Err(Error::Config("score source with empty name".into()));
        }
        if names.contains(&name) {
            return Err(Error::Config(format!("duplicate score source name '{name}'")));
        }
        names.push(name);
    }
    for g in &inputs.globals {
        g.query.aligned_to(&inputs.query_catalog)?;
        g.database.aligned_to(&inputs.db_catalog)?;
    }
    for l in &inputs.locals {
        let (nq, nd) = l.records.bounds();
        if nq > inputs.query_catalog.len() || nd > inputs.db_catalog.len() {
            return Err(Error::Shape(format!(
                "record set '{}' is bounded {}x{} but catalogs are {}x{}",
                l.name,
                nq,
                nd,
                inputs.query_catalog.len(),
                inputs.db_catalog.len()
            )));
        }
    }
    let split_total = inputs.split.validation().len() + inputs.split.test().len();
    if split_total != inputs.query_catalog.len() {
        return Err(Error::Shape(format!(
            "split covers {split_total} queries, catalog has {}",
            inputs.query_catalog.len()
        )));
    }
    Ok(())
}

/// Run the full pipeline. Calibrators are fitted on validation-derived
/// pairs only; accuracy is measured on the test split only.
pub fn run_pipeline(inputs: &PipelineInputs, options: &PipelineOptions) -> Result<PipelineOutcome> {
    validate_inputs(inputs)?;
    let query_catalog = &inputs.query_catalog;
    let db_catalog = &inputs.db_catalog;
    let n_query = query_catalog.len();
    let n_database = db_catalog.len();

    let mut diagnostics = Diagnostics::default();
    let mut guard = SplitGuard::new(query_catalog, inputs.split.validation());
    let phase1_catalog = guard.masked_catalog();

    let zero_shot = options.zero_shot.as_ref();
    if zero_shot.is_some() {
        if !matches!(options.mu, MuPolicy::Fixed(_)) {
            return Err(Error::Config(
                "zero-shot mode requires a fixed mu; tuning would touch target labels".into(),
            ));
        }
        if options.subsample_items.is_some() {
            return Err(Error::Config(
                "zero-shot mode does not calibrate, so subsampling is meaningless".into(),
            ));
        }
    }

    // Validation items used for fitting; optionally a seeded subsample.
    let calibration_items: Vec<usize> = match (zero_shot, options.subsample_items) {
        (Some(_), _) => Vec::new(),
        (None, Some(n_items)) => subsample_calibration_set(
            &phase1_catalog,
            db_catalog,
            inputs.split.validation(),
            n_items,
            derive_seed(options.seed, "subsample"),
        )?,
        (None, None) => inputs.split.validation().to_vec(),
    };
    diagnostics.calibration_items = calibration_items.clone();

    // Resolve mu per local source.
    let mut chosen_mu: BTreeMap<String, f64> = BTreeMap::new();
    for local in &inputs.locals {
        let mu = match &options.mu {
            MuPolicy::Fixed(value) => *value,
            MuPolicy::Tuned { grid } => {
                let grid_values = grid.clone().unwrap_or_else(crate::retrieval::default_mu_grid);
                let outcome = tune_mu(
                    &local.records,
                    &phase1_catalog,
                    db_catalog,
                    &calibration_items,
                    &grid_values,
                    options.calibration,
                )
                .map_err(|e| e.with_stage(&format!("tune-mu {}", local.name)))?;
                let best = outcome.best_mu;
                diagnostics.mu_tuning.insert(local.name.clone(), outcome);
                best
            }
        };
        chosen_mu.insert(local.name.clone(), mu);
    }
    diagnostics.chosen_mu = chosen_mu.clone();

    // Raw score matrices per source.
    let mut raw: BTreeMap<String, ScoreMatrix> = BTreeMap::new();
    for g in &inputs.globals {
        let matrix = global_score_matrix(&g.query, &g.database)
            .map_err(|e| e.with_stage(&format!("score-global {}", g.name)))?;
        raw.insert(g.name.clone(), matrix);
    }
    for l in &inputs.locals {
        let threshold = MatchThreshold::new(chosen_mu[&l.name])?;
        let matrix = local_score_matrix(&l.records, threshold, n_query, n_database)
            .map_err(|e| e.with_stage(&format!("score-local {}", l.name)))?;
        raw.insert(l.name.clone(), matrix);
    }

    // Calibrators: imported in zero-shot mode, otherwise fitted on
    // validation pairs of each raw score.
    let mut calibrators: BTreeMap<String, Calibrator> = BTreeMap::new();
    for (name, matrix) in &raw {
        let calibrator = match zero_shot {
            Some(imported) => imported
                .get(name)
                .cloned()
                .ok_or_else(|| {
                    Error::Config(format!("zero-shot mode lacks a calibrator for '{name}'"))
                })?,
            None => {
                let pairs = build_pair_labels_with(
                    matrix,
                    |q| guard.identity(q),
                    db_catalog,
                    &calibration_items,
                )?;
                let fit = fit_calibrator(options.calibration, &pairs)
                    .map_err(|e| e.with_stage(&format!("calibrate {name}")))?;
                for w in fit.warnings {
                    diagnostics.warnings.push(format!("{name}: {w}"));
                }
                fit.calibrator
            }
        };
        calibrators.insert(name.clone(), calibrator);
    }

    let mut calibrated: BTreeMap<String, ScoreMatrix> = BTreeMap::new();
    for (name, matrix) in &raw {
        let applied = apply_calibrator(&calibrators[name], matrix)
            .map_err(|e| e.with_stage(&format!("calibrate {name}")))?;
        calibrated.insert(name.clone(), applied);
    }

    let names: Vec<String> = calibrated.keys().cloned().collect();
    let fusion_config = match &options.fusion {
        Some(cfg) => cfg.clone(),
        None => default_config(&names)?,
    };
    let fusion_inputs: Vec<FusionInput> = calibrated
        .iter()
        .map(|(name, matrix)| FusionInput {
            name,
            matrix,
            flagged_decreasing: calibrators[name].is_decreasing(),
        })
        .collect();
    let fused = fuse(&fusion_inputs, &fusion_config).map_err(|e| e.with_stage("fuse"))?;

    // Predictions over all queries, optionally through the shortlist.
    let predictions: Vec<Prediction> = match options.budget {
        None => rank_top1(&fused, db_catalog)?,
        Some(budget) => {
            let cheap_name = inputs
                .globals
                .iter()
                .map(|g| g.name.clone())
                .min()
                .ok_or_else(|| {
                    Error::Config("shortlist re-ranking needs a global score as the cheap stage".into())
                })?;
            let cheap = &calibrated[&cheap_name];
            let outcome =
                shortlist_rerank(cheap, |q, d| Ok(fused.get(q, d)), budget, db_catalog)?;
            diagnostics.budget = Some(budget.value());
            diagnostics.expensive_evaluations_per_query = Some(outcome.evaluations_per_query);
            outcome.predictions
        }
    };

    // Final evaluation: test labels unlock only here.
    guard.unlock();
    let test = inputs.split.test();
    for (name, matrix) in &calibrated {
        let per_score = rank_top1(matrix, db_catalog)?;
        diagnostics.per_score_accuracy.insert(
            name.clone(),
            subset_accuracy(&per_score, test, query_catalog, db_catalog),
        );
    }
    let fused_accuracy = subset_accuracy(&predictions, test, query_catalog, db_catalog);

    let test_predictions: Vec<Prediction> =
        test.iter().map(|&q| predictions[q].clone()).collect();
    Ok(PipelineOutcome {
        result: RetrievalResult {
            predictions: test_predictions,
            top1_accuracy: fused_accuracy,
        },
        fused_accuracy,
        diagnostics,
        calibrators,
    })
}
