//! Top-1 retrieval, accuracy evaluation, mu tuning, calibration-set
//! subsampling and budgeted shortlist re-ranking.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{apply_calibrator, fit_calibrator, CalibrationMethod};
use crate::data::{build_pair_labels, ItemCatalog, MatchRecordSet, ScoreMatrix};
use crate::error::{Error, Result};
use crate::seeds::derive_seed;
use crate::similarity::{local_score_matrix, MatchThreshold};

/// One query's prediction: the best database item and its identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub query_index: usize,
    pub db_index: usize,
    pub identity: String,
    pub score: f64,
}

/// Predictions over the evaluated queries plus aggregate top-1 accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub predictions: Vec<Prediction>,
    pub top1_accuracy: f64,
}

/// Number of expensive score evaluations allowed per query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget(usize);

impl Budget {
    pub fn new(b: usize) -> Result<Self> {
        if b == 0 {
            return Err(Error::Config("budget must be at least 1".into()));
        }
        Ok(Self(b))
    }

    pub fn value(&self) -> usize {
        self.0
    }
}

/// Per query, the database index with the maximal score; ties go to the
/// lowest database index.
pub fn rank_top1(scores: &ScoreMatrix, db_catalog: &ItemCatalog) -> Result<Vec<Prediction>> {
    if db_catalog.is_empty() || scores.n_database() == 0 {
        return Err(Error::EmptyDatabase);
    }
    if scores.n_database() != db_catalog.len() {
        return Err(Error::Shape(format!(
            "score matrix has {} database columns but catalog has {} items",
            scores.n_database(),
            db_catalog.len()
        )));
    }
    let predictions = (0..scores.n_query())
        .into_par_iter()
        .map(|q| {
            let row = scores.row(q);
            let mut best = 0usize;
            for (d, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = d;
                }
            }
            Prediction {
                query_index: q,
                db_index: best,
                identity: db_catalog.identity(best).to_string(),
                score: row[best],
            }
        })
        .collect();
    Ok(predictions)
}

/// Fraction of queries whose predicted identity matches their true one.
/// An empty prediction set scores 0.
pub fn top1_accuracy(
    predictions: &[Prediction],
    query_catalog: &ItemCatalog,
    db_catalog: &ItemCatalog,
) -> Result<f64> {
    if predictions.len() != query_catalog.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} queries",
            predictions.len(),
            query_catalog.len()
        )));
    }
    if predictions.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for p in predictions {
        if p.db_index >= db_catalog.len() {
            return Err(Error::Index(format!(
                "prediction references database index {} of {}",
                p.db_index,
                db_catalog.len()
            )));
        }
        if db_catalog.identity(p.db_index) == query_catalog.identity(p.query_index) {
            correct += 1;
        }
    }
    Ok(correct as f64 / predictions.len() as f64)
}

/// Accuracy over a subset of queries, used for per-split evaluation.
pub(crate) fn subset_accuracy(
    predictions: &[Prediction],
    subset: &[usize],
    query_catalog: &ItemCatalog,
    db_catalog: &ItemCatalog,
) -> f64 {
    if subset.is_empty() {
        return 0.0;
    }
    let correct = subset
        .iter()
        .filter(|&&q| {
            let p = &predictions[q];
            db_catalog.identity(p.db_index) == query_catalog.identity(q)
        })
        .count();
    correct as f64 / subset.len() as f64
}

/// Result of a budgeted shortlist pass.
#[derive(Debug, Clone)]
pub struct ShortlistOutcome {
    pub predictions: Vec<Prediction>,
    /// Full per-query ranking: shortlist members by expensive score, then
    /// the remainder by cheap score.
    pub rankings: Vec<Vec<usize>>,
    /// Expensive evaluations spent per query, always `min(budget, D)`.
    pub evaluations_per_query: usize,
}

/// Rank the cheap scores, evaluate the expensive scorer on the top
/// `min(budget, D)` candidates per query and predict the shortlist member
/// with the best expensive score.
pub fn shortlist_rerank<F>(
    cheap: &ScoreMatrix,
    expensive: F,
    budget: Budget,
    db_catalog: &ItemCatalog,
) -> Result<ShortlistOutcome>
where
    F: Fn(usize, usize) -> std::result::Result<f64, String> + Sync,
{
    if db_catalog.is_empty() || cheap.n_database() == 0 {
        return Err(Error::EmptyDatabase);
    }
    if cheap.n_database() != db_catalog.len() {
        return Err(Error::Shape(format!(
            "cheap matrix has {} database columns but catalog has {} items",
            cheap.n_database(),
            db_catalog.len()
        )));
    }
    let n_database = cheap.n_database();
    let k = budget.value().min(n_database);

    let per_query: Vec<Result<(Prediction, Vec<usize>)>> = (0..cheap.n_query())
        .into_par_iter()
        .map(|q| {
            let row = cheap.row(q);
            let mut order: Vec<usize> = (0..n_database).collect();
            order.sort_by(|&a, &b| {
                row[b]
                    .partial_cmp(&row[a])
                    .expect("scores are finite")
                    .then(a.cmp(&b))
            });
            let shortlist = &order[..k];
            let mut scored = Vec::with_capacity(k);
            for &d in shortlist {
                let value = expensive(q, d).map_err(|message| Error::Scorer {
                    query: q,
                    database: d,
                    message,
                })?;
                scored.push((d, value));
            }
            let mut ranked = scored.clone();
            ranked.sort_by(|a, b| {
                b.1.partial_cmp(&a.1)
                    .expect("scores are finite")
                    .then(a.0.cmp(&b.0))
            });
            let (best, best_score) = ranked[0];
            let mut ranking: Vec<usize> = ranked.iter().map(|&(d, _)| d).collect();
            ranking.extend_from_slice(&order[k..]);
            Ok((
                Prediction {
                    query_index: q,
                    db_index: best,
                    identity: db_catalog.identity(best).to_string(),
                    score: best_score,
                },
                ranking,
            ))
        })
        .collect();

    let mut predictions = Vec::with_capacity(per_query.len());
    let mut rankings = Vec::with_capacity(per_query.len());
    for item in per_query {
        let (p, r) = item?;
        predictions.push(p);
        rankings.push(r);
    }
    Ok(ShortlistOutcome {
        predictions,
        rankings,
        evaluations_per_query: k,
    })
}

/// Grid step 0.05 over (0, 1).
pub fn default_mu_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

/// One grid point of a mu sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MuEvaluation {
    pub mu: f64,
    /// Validation top-1 accuracy; `None` when the calibrator fit failed,
    /// which scores the grid point as negative infinity.
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Outcome of a mu grid search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MuTuneOutcome {
    pub best_mu: f64,
    pub evaluations: Vec<MuEvaluation>,
}

/// Pick the grid mu maximizing validation top-1 accuracy of the calibrated
/// local score; ties go to the smallest mu.
pub fn tune_mu(
    records: &MatchRecordSet,
    query_catalog: &ItemCatalog,
    db_catalog: &ItemCatalog,
    validation: &[usize],
    grid: &[f64],
    method: CalibrationMethod,
) -> Result<MuTuneOutcome> {
    if grid.is_empty() {
        return Err(Error::Config("mu grid is empty".into()));
    }
    if validation.is_empty() {
        return Err(Error::Config("mu tuning needs a non-empty validation set".into()));
    }
    let mut sorted_grid: Vec<f64> = grid.to_vec();
    sorted_grid.sort_by(|a, b| a.partial_cmp(b).expect("grid values are finite"));

    let mut evaluations = Vec::with_capacity(sorted_grid.len());
    let mut best: Option<(f64, f64)> = None;
    for &mu in &sorted_grid {
        let threshold = MatchThreshold::new(mu)?;
        let scores =
            local_score_matrix(records, threshold, query_catalog.len(), db_catalog.len())?;
        let pairs = build_pair_labels(&scores, query_catalog, db_catalog, validation)?;
        match fit_calibrator(method, &pairs) {
            // A decreasing calibrator would invert the ranking and make this
            // mu look spuriously good, and fusion rejects it anyway, so the
            // grid point counts as a failed fit.
            Ok(fit) if fit.calibrator.is_decreasing() => {
                evaluations.push(MuEvaluation {
                    mu,
                    accuracy: None,
                    error: Some("calibrator flagged decreasing".to_string()),
                });
            }
            Ok(fit) => {
                let calibrated = apply_calibrator(&fit.calibrator, &scores)?;
                let predictions = rank_top1(&calibrated, db_catalog)?;
                let accuracy =
                    subset_accuracy(&predictions, validation, query_catalog, db_catalog);
                evaluations.push(MuEvaluation {
                    mu,
                    accuracy: Some(accuracy),
                    error: None,
                });
                // Strictly-greater keeps the smallest mu on ties.
                if best.is_none_or(|(_, a)| accuracy > a) {
                    best = Some((mu, accuracy));
                }
            }
            Err(err) => {
                evaluations.push(MuEvaluation {
                    mu,
                    accuracy: None,
                    error: Some(err.to_string()),
                });
            }
        }
    }
    // Every grid point failing still resolves by the smallest-mu tie rule.
    let best_mu = best.map_or(sorted_grid[0], |(mu, _)| mu);
    Ok(MuTuneOutcome {
        best_mu,
        evaluations,
    })
}

/// Seeded uniform sample of `min(n_items, |validation|)` validation items
/// whose induced pair set holds at least 2 positive and 2 negative pairs.
/// Resamples from fresh sub-streams until the constraint holds.
pub fn subsample_calibration_set(
    query_catalog: &ItemCatalog,
    db_catalog: &ItemCatalog,
    validation: &[usize],
    n_items: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    const MAX_ATTEMPTS: usize = 1000;
    if n_items == 0 {
        return Err(Error::Config("subsample size must be at least 1".into()));
    }
    if validation.is_empty() {
        return Err(Error::Constraint("validation set is empty".into()));
    }

    let pair_counts = |subset: &[usize]| -> (usize, usize) {
        let mut positive = 0usize;
        let mut negative = 0usize;
        for &q in subset {
            let identity = query_catalog.identity(q);
            for d in 0..db_catalog.len() {
                if db_catalog.identity(d) == identity {
                    positive += 1;
                } else {
                    negative += 1;
                }
            }
        }
        (positive, negative)
    };

    let (full_pos, full_neg) = pair_counts(validation);
    if full_pos < 2 || full_neg < 2 {
        return Err(Error::Constraint(format!(
            "validation set induces only {full_pos} positive and {full_neg} negative pairs"
        )));
    }

    let k = n_items.min(validation.len());
    if k == validation.len() {
        let mut full = validation.to_vec();
        full.sort_unstable();
        return Ok(full);
    }

    for attempt in 0..MAX_ATTEMPTS {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("subsample:{attempt}")));
        let mut pool = validation.to_vec();
        pool.shuffle(&mut rng);
        let mut subset = pool[..k].to_vec();
        subset.sort_unstable();
        let (pos, neg) = pair_counts(&subset);
        if pos >= 2 && neg >= 2 {
            return Ok(subset);
        }
    }
    Err(Error::Constraint(format!(
        "no subset of {k} validation items with >=2 positive and >=2 negative pairs found in {MAX_ATTEMPTS} attempts"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Role, ScoreKind};
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn catalog(role: Role, entries: &[(&str, &str)]) -> ItemCatalog {
        ItemCatalog::new(
            role,
            entries
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
        )
        .unwrap()
    }

    fn fused(n_query: usize, n_database: usize, values: Vec<f64>) -> ScoreMatrix {
        ScoreMatrix::new(ScoreKind::Fused, n_query, n_database, values).unwrap()
    }

    #[test]
    fn rank_top1_argmax_and_tie_break() {
        let db = catalog(Role::Database, &[("d0", "A"), ("d1", "B")]);
        let p = rank_top1(&fused(1, 2, vec![0.9, 0.1]), &db).unwrap();
        assert_eq!(p[0].db_index, 0);
        let p = rank_top1(&fused(1, 2, vec![0.5, 0.5]), &db).unwrap();
        assert_eq!(p[0].db_index, 0);
    }

    #[test]
    fn rank_top1_matches_scan_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let entries: Vec<(String, String)> =
            (0..5).map(|i| (format!("d{i}"), format!("ID{i}"))).collect();
        let db = ItemCatalog::new(Role::Database, entries).unwrap();
        let values: Vec<f64> = (0..25).map(|_| rng.random_range(0.0..=1.0)).collect();
        let m = fused(5, 5, values);
        let predictions = rank_top1(&m, &db).unwrap();
        for (q, prediction) in predictions.iter().enumerate() {
            let row = m.row(q);
            let mut best = 0;
            for d in 0..5 {
                if row[d] > row[best] {
                    best = d;
                }
            }
            assert_eq!(prediction.db_index, best);
        }
    }

    #[test]
    fn rank_top1_empty_database() {
        let db = ItemCatalog::new(Role::Database, vec![]).unwrap();
        let m = ScoreMatrix::new(ScoreKind::Fused, 0, 0, vec![]).unwrap();
        assert!(matches!(rank_top1(&m, &db), Err(Error::EmptyDatabase)));
    }

    #[test]
    fn accuracy_counts() {
        let q = catalog(Role::Query, &[("q0", "A"), ("q1", "B"), ("q2", "C"), ("q3", "D")]);
        let db = catalog(Role::Database, &[("d0", "A"), ("d1", "B"), ("d2", "X"), ("d3", "Y")]);
        let mk = |indices: [usize; 4]| -> Vec<Prediction> {
            indices
                .iter()
                .enumerate()
                .map(|(qi, &di)| Prediction {
                    query_index: qi,
                    db_index: di,
                    identity: db.identity(di).to_string(),
                    score: 1.0,
                })
                .collect()
        };
        // d0..d3 identities are A, B, X, Y; queries are A, B, C, D.
        assert_eq!(top1_accuracy(&mk([0, 1, 2, 3]), &q, &db).unwrap(), 0.5);
        let all_wrong = mk([2, 3, 2, 3]);
        assert_eq!(top1_accuracy(&all_wrong, &q, &db).unwrap(), 0.0);
        let q2 = catalog(Role::Query, &[("q0", "A"), ("q1", "B"), ("q2", "X"), ("q3", "Y")]);
        assert_eq!(top1_accuracy(&mk([0, 1, 2, 3]), &q2, &db).unwrap(), 1.0);
        assert!(matches!(
            top1_accuracy(&mk([0, 1, 2, 3])[..2], &q, &db),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn accuracy_invariant_under_identity_relabeling() {
        let q = catalog(Role::Query, &[("q0", "A"), ("q1", "B")]);
        let db = catalog(Role::Database, &[("d0", "A"), ("d1", "C")]);
        let q_re = catalog(Role::Query, &[("q0", "zz"), ("q1", "yy")]);
        let db_re = catalog(Role::Database, &[("d0", "zz"), ("d1", "xx")]);
        let preds: Vec<Prediction> = (0..2)
            .map(|i| Prediction {
                query_index: i,
                db_index: i,
                identity: db.identity(i).to_string(),
                score: 1.0,
            })
            .collect();
        assert_eq!(
            top1_accuracy(&preds, &q, &db).unwrap(),
            top1_accuracy(&preds, &q_re, &db_re).unwrap()
        );
    }

    #[test]
    fn shortlist_full_budget_equals_full_ranking() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let entries: Vec<(String, String)> =
            (0..6).map(|i| (format!("d{i}"), format!("ID{}", i % 3))).collect();
        let db = ItemCatalog::new(Role::Database, entries).unwrap();
        let cheap_values: Vec<f64> = (0..18).map(|_| rng.random_range(0.0..=1.0)).collect();
        let exp_values: Vec<f64> = (0..18).map(|_| rng.random_range(0.0..=1.0)).collect();
        let cheap = fused(3, 6, cheap_values);
        let expensive_m = fused(3, 6, exp_values);
        let outcome = shortlist_rerank(
            &cheap,
            |q, d| Ok(expensive_m.get(q, d)),
            Budget::new(6).unwrap(),
            &db,
        )
        .unwrap();
        let full = rank_top1(&expensive_m, &db).unwrap();
        for (a, b) in outcome.predictions.iter().zip(full.iter()) {
            assert_eq!(a.db_index, b.db_index);
        }
    }

    #[test]
    fn shortlist_budget_one_keeps_cheap_winner() {
        let db = catalog(Role::Database, &[("d0", "A"), ("d1", "B")]);
        let cheap = fused(1, 2, vec![0.9, 0.2]);
        let outcome = shortlist_rerank(
            &cheap,
            // The expensive score disagrees, but with B=1 only the cheap
            // winner is ever evaluated.
            |_, d| Ok(if d == 1 { 1.0 } else { 0.0 }),
            Budget::new(1).unwrap(),
            &db,
        )
        .unwrap();
        assert_eq!(outcome.predictions[0].db_index, 0);
        assert_eq!(outcome.evaluations_per_query, 1);
    }

    #[test]
    fn shortlist_matches_exhaustive_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(29);
        let entries: Vec<(String, String)> =
            (0..5).map(|i| (format!("d{i}"), format!("ID{i}"))).collect();
        let db = ItemCatalog::new(Role::Database, entries).unwrap();
        for _ in 0..20 {
            let cheap_values: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..=1.0)).collect();
            let exp_values: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..=1.0)).collect();
            let cheap = fused(2, 5, cheap_values);
            let expensive_m = fused(2, 5, exp_values);
            let outcome = shortlist_rerank(
                &cheap,
                |q, d| Ok(expensive_m.get(q, d)),
                Budget::new(3).unwrap(),
                &db,
            )
            .unwrap();
            // Oracle: materialize the full expensive matrix and re-rank the
            // cheap top 3 by hand.
            for q in 0..2 {
                let row = cheap.row(q);
                let mut order: Vec<usize> = (0..5).collect();
                order.sort_by(|&a, &b| {
                    row[b].partial_cmp(&row[a]).unwrap().then(a.cmp(&b))
                });
                let top3 = &order[..3];
                let mut best = top3[0];
                for &d in top3 {
                    if expensive_m.get(q, d) > expensive_m.get(q, best)
                        || (expensive_m.get(q, d) == expensive_m.get(q, best) && d < best)
                    {
                        best = d;
                    }
                }
                assert_eq!(outcome.predictions[q].db_index, best);
            }
        }
    }

    #[test]
    fn shortlist_counts_expensive_evaluations() {
        let entries: Vec<(String, String)> =
            (0..4).map(|i| (format!("d{i}"), "X".to_string())).collect();
        let db = ItemCatalog::new(Role::Database, entries).unwrap();
        let cheap = fused(3, 4, vec![0.1; 12]);
        for b in [1usize, 2, 4, 9] {
            let counter = AtomicUsize::new(0);
            let outcome = shortlist_rerank(
                &cheap,
                |_, _| {
                    counter.fetch_add(1, Ordering::Relaxed);
                    Ok(0.5)
                },
                Budget::new(b).unwrap(),
                &db,
            )
            .unwrap();
            assert_eq!(outcome.evaluations_per_query, b.min(4));
            assert_eq!(counter.load(Ordering::Relaxed), 3 * b.min(4));
        }
    }

    #[test]
    fn shortlist_ranking_lists_every_candidate_shortlist_first() {
        let db = catalog(
            Role::Database,
            &[("d0", "A"), ("d1", "B"), ("d2", "C"), ("d3", "D")],
        );
        let cheap = fused(1, 4, vec![0.4, 0.9, 0.1, 0.6]);
        let expensive = fused(1, 4, vec![0.2, 0.3, 0.9, 0.8]);
        let outcome = shortlist_rerank(
            &cheap,
            |q, d| Ok(expensive.get(q, d)),
            Budget::new(2).unwrap(),
            &db,
        )
        .unwrap();
        // Cheap top-2 is {1, 3}; expensive prefers 3; remainder follows in
        // cheap order.
        assert_eq!(outcome.rankings[0], vec![3, 1, 0, 2]);
        let mut sorted = outcome.rankings[0].clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
    }

    #[test]
    fn shortlist_containment_queries_are_stable_across_budgets() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(37);
        let entries: Vec<(String, String)> =
            (0..12).map(|i| (format!("d{i}"), format!("ID{i}"))).collect();
        let db = ItemCatalog::new(Role::Database, entries).unwrap();
        let cheap_values: Vec<f64> = (0..6 * 12).map(|_| rng.random_range(0.0..=1.0)).collect();
        let exp_values: Vec<f64> = (0..6 * 12).map(|_| rng.random_range(0.0..=1.0)).collect();
        let cheap = fused(6, 12, cheap_values);
        let expensive = fused(6, 12, exp_values);
        let full = rank_top1(&expensive, &db).unwrap();
        let cheap_top = rank_top1(&cheap, &db).unwrap();
        // Queries whose cheap winner already is the full expensive winner
        // must be predicted identically at every budget.
        let stable: Vec<usize> = (0..6)
            .filter(|&q| cheap_top[q].db_index == full[q].db_index)
            .collect();
        for b in 1..=12 {
            let outcome = shortlist_rerank(
                &cheap,
                |q, d| Ok(expensive.get(q, d)),
                Budget::new(b).unwrap(),
                &db,
            )
            .unwrap();
            for &q in &stable {
                assert_eq!(outcome.predictions[q].db_index, full[q].db_index);
            }
        }
    }

    #[test]
    fn shortlist_propagates_scorer_error() {
        let db = catalog(Role::Database, &[("d0", "A"), ("d1", "B")]);
        let cheap = fused(1, 2, vec![0.9, 0.2]);
        let err = shortlist_rerank(
            &cheap,
            |_, _| Err("backend unavailable".to_string()),
            Budget::new(2).unwrap(),
            &db,
        )
        .unwrap_err();
        match err {
            Error::Scorer { query, message, .. } => {
                assert_eq!(query, 0);
                assert!(message.contains("backend"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    fn mu_test_records() -> (MatchRecordSet, ItemCatalog, ItemCatalog) {
        let q = catalog(Role::Query, &[("q0", "A"), ("q1", "B")]);
        let db = catalog(Role::Database, &[("d0", "A"), ("d1", "B")]);
        let mut records = MatchRecordSet::new(2, 2);
        // Same-identity confidences sit above 0.6, others below 0.4, with
        // enough low-confidence noise that small mu flips q1.
        for c in [0.61, 0.7, 0.8] {
            records.add(0, 0, c).unwrap();
        }
        for c in [0.1, 0.2, 0.3, 0.35, 0.39] {
            records.add(0, 1, c).unwrap();
        }
        for c in [0.65, 0.9] {
            records.add(1, 1, c).unwrap();
        }
        for c in [0.39, 0.39, 0.39, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3] {
            records.add(1, 0, c).unwrap();
        }
        (records, q, db)
    }

    #[test]
    fn tune_mu_single_grid_point() {
        let (records, q, db) = mu_test_records();
        let outcome = tune_mu(
            &records,
            &q,
            &db,
            &[0, 1],
            &[0.5],
            CalibrationMethod::IsotonicPchip,
        )
        .unwrap();
        assert_eq!(outcome.best_mu, 0.5);
    }

    #[test]
    fn tune_mu_tie_takes_smaller() {
        let (records, q, db) = mu_test_records();
        let outcome = tune_mu(
            &records,
            &q,
            &db,
            &[0, 1],
            &[0.6, 0.45],
            CalibrationMethod::IsotonicPchip,
        )
        .unwrap();
        assert_eq!(outcome.best_mu, 0.45);
    }

    #[test]
    fn tune_mu_matches_exhaustive_grid_oracle() {
        let (records, q, db) = mu_test_records();
        let grid = default_mu_grid();
        let outcome = tune_mu(
            &records,
            &q,
            &db,
            &[0, 1],
            &grid,
            CalibrationMethod::IsotonicPchip,
        )
        .unwrap();
        assert_eq!(outcome.best_mu, 0.4);

        // Exhaustive oracle on raw counts: the plateau of maximal accuracy
        // starts at 0.40, and low mu values lose q1 to noise matches.
        let mut oracle_best: Option<(f64, f64)> = None;
        for &mu in &grid {
            let m = local_score_matrix(
                &records,
                MatchThreshold::new(mu).unwrap(),
                2,
                2,
            )
            .unwrap();
            let mut correct = 0;
            for qi in 0..2 {
                let row = m.row(qi);
                let best = if row[1] > row[0] { 1 } else { 0 };
                if db.identity(best) == q.identity(qi) {
                    correct += 1;
                }
            }
            let acc = correct as f64 / 2.0;
            if oracle_best.is_none_or(|(_, a)| acc > a) {
                oracle_best = Some((mu, acc));
            }
        }
        assert_eq!(oracle_best.unwrap().0, 0.4);
    }

    #[test]
    fn tune_mu_rejects_empty_inputs() {
        let (records, q, db) = mu_test_records();
        assert!(matches!(
            tune_mu(&records, &q, &db, &[0], &[], CalibrationMethod::Platt),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            tune_mu(&records, &q, &db, &[], &[0.5], CalibrationMethod::Platt),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn subsample_saturates_to_full_validation() {
        let q = catalog(Role::Query, &[("q0", "A"), ("q1", "B"), ("q2", "A")]);
        let db = catalog(Role::Database, &[("d0", "A"), ("d1", "B")]);
        let subset = subsample_calibration_set(&q, &db, &[0, 1, 2], 10, 7).unwrap();
        assert_eq!(subset, vec![0, 1, 2]);
    }

    #[test]
    fn subsample_is_deterministic() {
        let entries: Vec<(String, String)> =
            (0..20).map(|i| (format!("q{i}"), format!("ID{}", i % 5))).collect();
        let q = ItemCatalog::new(Role::Query, entries).unwrap();
        let db_entries: Vec<(String, String)> =
            (0..10).map(|i| (format!("d{i}"), format!("ID{}", i % 5))).collect();
        let db = ItemCatalog::new(Role::Database, db_entries).unwrap();
        let validation: Vec<usize> = (0..20).collect();
        let a = subsample_calibration_set(&q, &db, &validation, 5, 99).unwrap();
        let b = subsample_calibration_set(&q, &db, &validation, 5, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
    }

    #[test]
    fn subsample_unsatisfiable_constraint() {
        let q = catalog(Role::Query, &[("q0", "A"), ("q1", "B")]);
        let db = catalog(Role::Database, &[("d0", "C"), ("d1", "D")]);
        assert!(matches!(
            subsample_calibration_set(&q, &db, &[0, 1], 2, 1),
            Err(Error::Constraint(_))
        ));
    }
}
