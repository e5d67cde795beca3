//! Weighted-average fusion of calibrated score matrices.

use crate::data::{ScoreKind, ScoreMatrix};
use crate::error::{Error, Result};

/// Named, normalized fusion weights. Weights are normalized to sum to one
/// at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    entries: Vec<(String, f64)>,
}

impl FusionConfig {
    pub fn new(entries: Vec<(String, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Config("fusion config needs at least one entry".into()));
        }
        let mut total = 0.0f64;
        for (i, (name, weight)) in entries.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::Config(format!("empty score name at entry {i}")));
            }
            if entries[..i].iter().any(|(n, _)| n == name) {
                return Err(Error::Config(format!("duplicate score name '{name}'")));
            }
            if !weight.is_finite() || *weight < 0.0 {
                return Err(Error::Config(format!(
                    "weight {weight} for '{name}' must be finite and non-negative"
                )));
            }
            total += weight;
        }
        if total <= 0.0 {
            return Err(Error::Config("at least one weight must be positive".into()));
        }
        let entries = entries
            .into_iter()
            .map(|(name, w)| (name, w / total))
            .collect();
        Ok(Self { entries })
    }

    /// Normalized weight for a score name, if configured.
    pub fn weight(&self, name: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, w)| w)
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Equal weights 1/K over the given names.
pub fn default_config(names: &[String]) -> Result<FusionConfig> {
    FusionConfig::new(names.iter().map(|n| (n.clone(), 1.0)).collect())
}

/// One fused input: a calibrated matrix plus the flag of the calibrator
/// that produced it.
#[derive(Debug, Clone, Copy)]
pub struct FusionInput<'a> {
    pub name: &'a str,
    pub matrix: &'a ScoreMatrix,
    pub flagged_decreasing: bool,
}

impl<'a> FusionInput<'a> {
    pub fn new(name: &'a str, matrix: &'a ScoreMatrix) -> Self {
        Self {
            name,
            matrix,
            flagged_decreasing: false,
        }
    }
}

/// Entry-wise weighted average of the calibrated inputs.
///
/// Summation runs in name-sorted order so the result is bit-identical no
/// matter how the caller orders the list.
pub fn fuse(inputs: &[FusionInput<'_>], config: &FusionConfig) -> Result<ScoreMatrix> {
    if inputs.is_empty() {
        return Err(Error::Config("fuse needs at least one input matrix".into()));
    }
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    order.sort_by(|&a, &b| inputs[a].name.cmp(inputs[b].name));

    for w in order.windows(2) {
        if inputs[w[0]].name == inputs[w[1]].name {
            return Err(Error::Config(format!(
                "duplicate input matrix name '{}'",
                inputs[w[0]].name
            )));
        }
    }
    if inputs.len() != config.len() {
        return Err(Error::Config(format!(
            "{} input matrices but {} configured weights",
            inputs.len(),
            config.len()
        )));
    }

    let first = &inputs[order[0]];
    let (n_query, n_database) = (first.matrix.n_query(), first.matrix.n_database());
    let mut values = vec![0.0f64; n_query * n_database];
    for &i in &order {
        let input = &inputs[i];
        if input.matrix.kind() != ScoreKind::Calibrated {
            return Err(Error::Kind(format!(
                "fusion input '{}' has kind {:?}, expected Calibrated",
                input.name,
                input.matrix.kind()
            )));
        }
        if input.flagged_decreasing {
            return Err(Error::FlaggedCalibrator(format!(
                "input '{}' comes from a decreasing calibrator",
                input.name
            )));
        }
        if input.matrix.n_query() != n_query || input.matrix.n_database() != n_database {
            return Err(Error::Shape(format!(
                "input '{}' is {}x{}, expected {}x{}",
                input.name,
                input.matrix.n_query(),
                input.matrix.n_database(),
                n_query,
                n_database
            )));
        }
        let weight = config.weight(input.name).ok_or_else(|| {
            Error::Config(format!("no fusion weight configured for '{}'", input.name))
        })?;
        for (out, &v) in values.iter_mut().zip(input.matrix.values()) {
            *out += weight * v;
        }
    }
    for v in &mut values {
        *v = v.clamp(0.0, 1.0);
    }
    ScoreMatrix::new(ScoreKind::Fused, n_query, n_database, values)
}
