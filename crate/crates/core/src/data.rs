//! Domain data model: catalogs, embeddings, match records, score matrices,
//! splits and labeled pairs.
//!
//! Everything here is immutable after construction and safe to share across
//! threads; construction validates the type invariants once so downstream
//! numeric code can rely on them.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether a catalog holds database or query items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Database,
    Query,
}

/// One cataloged item: an opaque id plus the identity it belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Item {
    pub item_id: String,
    pub identity_id: String,
}

/// Ordered list of items; the position in the list is the index used by
/// every matrix and record set that references the catalog.
#[derive(Debug, Clone)]
pub struct ItemCatalog {
    role: Role,
    items: Vec<Item>,
    by_id: HashMap<String, usize>,
}

impl ItemCatalog {
    /// Build a catalog from `(item_id, identity_id)` pairs in index order.
    pub fn new(role: Role, entries: Vec<(String, String)>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(entries.len());
        let mut items = Vec::with_capacity(entries.len());
        for (idx, (item_id, identity_id)) in entries.into_iter().enumerate() {
            if item_id.is_empty() {
                return Err(Error::Config(format!("empty item id at index {idx}")));
            }
            if identity_id.is_empty() {
                return Err(Error::Config(format!(
                    "item '{item_id}' has an empty identity"
                )));
            }
            if by_id.insert(item_id.clone(), idx).is_some() {
                return Err(Error::Config(format!("duplicate item id '{item_id}'")));
            }
            items.push(Item {
                item_id,
                identity_id,
            });
        }
        Ok(Self { role, items, by_id })
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn item_id(&self, index: usize) -> &str {
        &self.items[index].item_id
    }

    pub fn identity(&self, index: usize) -> &str {
        &self.items[index].identity_id
    }

    pub fn index_of(&self, item_id: &str) -> Option<usize> {
        self.by_id.get(item_id).copied()
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }
}

/// Dense row-major embedding matrix; one row per catalog item.
///
/// Rows with zero norm or non-finite values are rejected at construction,
/// so cosine similarity downstream is always defined.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dims: usize,
    values: Vec<f64>,
    row_norm2: Vec<f64>,
    catalog_ref: String,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, dims: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * dims {
            return Err(Error::Shape(format!(
                "embedding payload holds {} values, expected {}x{}",
                values.len(),
                rows,
                dims
            )));
        }
        let mut row_norm2 = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &values[r * dims..(r + 1) * dims];
            let mut norm2 = 0.0f64;
            for &v in row {
                if !v.is_finite() {
                    return Err(Error::DegenerateInput(format!(
                        "non-finite embedding value in row {r}"
                    )));
                }
                norm2 += v * v;
            }
            if norm2 <= 0.0 {
                return Err(Error::DegenerateInput(format!(
                    "zero-norm embedding row {r}"
                )));
            }
            row_norm2.push(norm2);
        }
        Ok(Self {
            rows,
            dims,
            values,
            row_norm2,
            catalog_ref: String::new(),
        })
    }

    pub fn with_catalog_ref(mut self, catalog_ref: impl Into<String>) -> Self {
        self.catalog_ref = catalog_ref.into();
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.dims..(r + 1) * self.dims]
    }

    /// Squared Euclidean norm of a row, cached at construction.
    pub fn row_norm2(&self, r: usize) -> f64 {
        self.row_norm2[r]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn catalog_ref(&self) -> &str {
        &self.catalog_ref
    }

    /// Check that this matrix has one row per item of `catalog`.
    pub fn aligned_to(&self, catalog: &ItemCatalog) -> Result<()> {
        if self.rows != catalog.len() {
            return Err(Error::Shape(format!(
                "embedding matrix has {} rows but catalog has {} items",
                self.rows,
                catalog.len()
            )));
        }
        Ok(())
    }
}

/// Per-pair lists of match confidences in `[0, 1]`.
///
/// Absent pairs are equivalent to an empty list. Iteration order is
/// deterministic (sorted by `(query, database)` index).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchRecordSet {
    n_query: usize,
    n_database: usize,
    records: BTreeMap<(usize, usize), Vec<f64>>,
}

impl MatchRecordSet {
    pub fn new(n_query: usize, n_database: usize) -> Self {
        Self {
            n_query,
            n_database,
            records: BTreeMap::new(),
        }
    }

    /// Append one confidence to the pair's list.
    pub fn add(&mut self, query: usize, database: usize, confidence: f64) -> Result<()> {
        if query >= self.n_query || database >= self.n_database {
            return Err(Error::Index(format!(
                "match record pair ({query}, {database}) outside {}x{} bounds",
                self.n_query, self.n_database
            )));
        }
        if !confidence.is_finite() || !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Range(format!(
                "match confidence {confidence} outside [0, 1]"
            )));
        }
        self.records.entry((query, database)).or_default().push(confidence);
        Ok(())
    }

    pub fn bounds(&self) -> (usize, usize) {
        (self.n_query, self.n_database)
    }

    /// Confidence list for a pair; empty slice when the pair is absent.
    pub fn confidences(&self, query: usize, database: usize) -> &[f64] {
        self.records
            .get(&(query, database))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(usize, usize), &Vec<f64>)> {
        self.records.iter()
    }

    /// Number of pairs holding at least one confidence.
    pub fn n_pairs(&self) -> usize {
        self.records.len()
    }
}

/// What a score matrix holds; constrains the value range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    RawGlobal,
    RawLocal,
    Calibrated,
    Fused,
}

/// Dense query-by-database score matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    kind: ScoreKind,
    n_query: usize,
    n_database: usize,
    values: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(kind: ScoreKind, n_query: usize, n_database: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_query * n_database {
            return Err(Error::Shape(format!(
                "score matrix payload holds {} values, expected {}x{}",
                values.len(),
                n_query,
                n_database
            )));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Range(format!("non-finite score at flat index {i}")));
            }
            let ok = match kind {
                ScoreKind::RawGlobal => (-1.0..=1.0).contains(&v),
                ScoreKind::RawLocal => v >= 0.0 && v.fract() == 0.0,
                ScoreKind::Calibrated | ScoreKind::Fused => (0.0..=1.0).contains(&v),
            };
            if !ok {
                return Err(Error::Range(format!(
                    "score {v} at flat index {i} violates {kind:?} bounds"
                )));
            }
        }
        Ok(Self {
            kind,
            n_query,
            n_database,
            values,
        })
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    pub fn n_query(&self) -> usize {
        self.n_query
    }

    pub fn n_database(&self) -> usize {
        self.n_database
    }

    pub fn get(&self, query: usize, database: usize) -> f64 {
        self.values[query * self.n_database + database]
    }

    pub fn row(&self, query: usize) -> &[f64] {
        &self.values[query * self.n_database..(query + 1) * self.n_database]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Disjoint validation/test partition of the query index range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    validation: Vec<usize>,
    test: Vec<usize>,
    seed: u64,
}

impl SplitSpec {
    /// Build from explicit index sets; validates the partition property.
    pub fn new(validation: Vec<usize>, test: Vec<usize>, n_query: usize, seed: u64) -> Result<Self> {
        let mut seen = vec![false; n_query];
        for &i in validation.iter().chain(test.iter()) {
            if i >= n_query {
                return Err(Error::Index(format!(
                    "split index {i} outside query range {n_query}"
                )));
            }
            if seen[i] {
                return Err(Error::Config(format!("split index {i} assigned twice")));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Config(
                "split does not cover the query set".to_string(),
            ));
        }
        let mut validation = validation;
        let mut test = test;
        validation.sort_unstable();
        test.sort_unstable();
        Ok(Self {
            validation,
            test,
            seed,
        })
    }

    pub fn validation(&self) -> &[usize] {
        &self.validation
    }

    pub fn test(&self) -> &[usize] {
        &self.test
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Scored pairs with binary same-identity labels, the calibration input.
#[derive(Debug, Clone, PartialEq)]
pub struct PairLabelSet {
    pairs: Vec<(f64, bool)>,
}

impl PairLabelSet {
    pub fn new(pairs: Vec<(f64, bool)>) -> Result<Self> {
        for (i, &(score, _)) in pairs.iter().enumerate() {
            if !score.is_finite() {
                return Err(Error::Range(format!("non-finite pair score at index {i}")));
            }
        }
        Ok(Self { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(f64, bool)] {
        &self.pairs
    }

    pub fn n_positive(&self) -> usize {
        self.pairs.iter().filter(|&&(_, l)| l).count()
    }

    pub fn n_negative(&self) -> usize {
        self.pairs.len() - self.n_positive()
    }
}

/// Label every (subset query, database item) pair with identity equality.
///
/// Pair order is row-major: subset queries in the given order, database
/// items in index order within each query.
pub fn build_pair_labels(
    scores: &ScoreMatrix,
    query_catalog: &ItemCatalog,
    db_catalog: &ItemCatalog,
    subset: &[usize],
) -> Result<PairLabelSet> {
    build_pair_labels_with(scores, |q| query_catalog.identity(q), db_catalog, subset)
}

/// As [`build_pair_labels`] but with an injected query-identity accessor,
/// so staged pipelines can route label reads through an access guard.
pub fn build_pair_labels_with<'a, F>(
    scores: &ScoreMatrix,
    query_identity: F,
    db_catalog: &ItemCatalog,
    subset: &[usize],
) -> Result<PairLabelSet>
where
    F: Fn(usize) -> &'a str,
{
    if scores.n_database() != db_catalog.len() {
        return Err(Error::Shape(format!(
            "score matrix has {} database columns but catalog has {} items",
            scores.n_database(),
            db_catalog.len()
        )));
    }
    for &q in subset {
        if q >= scores.n_query() {
            return Err(Error::Index(format!(
                "pair-label subset index {q} outside {} queries",
                scores.n_query()
            )));
        }
    }
    let mut pairs = Vec::with_capacity(subset.len() * db_catalog.len());
    for &q in subset {
        let identity = query_identity(q);
        for d in 0..db_catalog.len() {
            pairs.push((scores.get(q, d), identity == db_catalog.identity(d)));
        }
    }
    Ok(PairLabelSet { pairs })
}

/// Uniformly random validation/test split with `|validation| =
/// round_half_up(ratio * N)`; deterministic given the seed.
pub fn make_split(query_catalog: &ItemCatalog, ratio: f64, seed: u64) -> Result<SplitSpec> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio {ratio} outside (0, 1)")));
    }
    if query_catalog.is_empty() {
        return Err(Error::Config("cannot split an empty query catalog".into()));
    }
    let n = query_catalog.len();
    let n_validation = ((ratio * n as f64) + 0.5).floor() as usize;
    let n_validation = n_validation.min(n);
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let validation = indices[..n_validation].to_vec();
    let test = indices[n_validation..].to_vec();
    SplitSpec::new(validation, test, n, seed)
}
