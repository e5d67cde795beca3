//! Synthetic benchmark generator: identities with noisy unit-norm
//! embeddings plus per-pair match confidences separated around 0.5.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{EmbeddingMatrix, ItemCatalog, MatchRecordSet, Role};
use crate::error::{Error, Result};
use crate::seeds::derive_seed;

use super::embedding_file::write_embedding_file;
use super::label_file::write_label_file;
use super::match_file::write_match_file;

/// Fraction of same-identity pairs whose matcher "fails" and produces a
/// negative-looking confidence pattern, and of different-identity pairs
/// producing spurious high-confidence matches. These keep neither score
/// perfectly separable, so fusion has work to do.
const FAIL_RATE: f64 = 0.15;
const SPURIOUS_RATE: f64 = 0.02;
/// Fraction of queries whose local matching fails wholesale (the occluded
/// or badly posed image case); the embedding signal is unaffected, which
/// is what gives fusion queries to rescue.
const QUERY_FAIL_RATE: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct SynthParams {
    pub n_identities: usize,
    pub items_per_identity: usize,
    pub dims: usize,
    /// Gaussian noise added to the identity prototype before renormalizing.
    pub noise_sigma: f64,
    /// Width of the gap between positive and negative confidence bands.
    pub separation_delta: f64,
    pub seed: u64,
}

/// Generated dataset held in memory.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub query_catalog: ItemCatalog,
    pub db_catalog: ItemCatalog,
    pub query_embeddings: EmbeddingMatrix,
    pub db_embeddings: EmbeddingMatrix,
    pub records: MatchRecordSet,
}

/// Files written by [`generate_synthetic`].
#[derive(Debug, Clone)]
pub struct SynthPaths {
    pub query_labels: PathBuf,
    pub database_labels: PathBuf,
    pub query_embeddings: PathBuf,
    pub database_embeddings: PathBuf,
    pub matches: PathBuf,
    pub config: PathBuf,
}

fn validate(params: &SynthParams) -> Result<()> {
    if params.n_identities == 0 || params.items_per_identity == 0 || params.dims == 0 {
        return Err(Error::Config(
            "identity, item and dimension counts must be positive".into(),
        ));
    }
    if !(params.separation_delta > 0.0 && params.separation_delta < 1.0) {
        return Err(Error::Config(format!(
            "separation delta {} outside (0, 1)",
            params.separation_delta
        )));
    }
    if !params.noise_sigma.is_finite() || params.noise_sigma < 0.0 {
        return Err(Error::Config(format!(
            "noise sigma {} must be non-negative",
            params.noise_sigma
        )));
    }
    Ok(())
}

/// Draw an item embedding: prototype plus Gaussian noise, renormalized.
/// Values are rounded through f32 so in-memory data matches the files.
fn item_vector(prototype: &[f64], sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = prototype
        .iter()
        .map(|&p| {
            let noise: f64 = StandardNormal.sample(rng);
            p + sigma * noise
        })
        .collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut v {
        *x = (*x / norm) as f32 as f64;
    }
    v
}

/// Generate the dataset in memory; fully deterministic per seed.
pub fn generate_synthetic_in_memory(params: &SynthParams) -> Result<SynthDataset> {
    validate(params)?;
    let id_width = params.n_identities.to_string().len().max(3);

    let n_db_per_id = params.items_per_identity.div_ceil(2);
    let n_q_per_id = params.items_per_identity / 2;

    let mut proto_rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, "synth:prototypes"));
    let mut item_rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, "synth:items"));

    let mut db_entries = Vec::new();
    let mut query_entries = Vec::new();
    let mut db_values = Vec::new();
    let mut query_values = Vec::new();
    for id_idx in 0..params.n_identities {
        let identity = format!("id{id_idx:0id_width$}");
        let mut prototype: Vec<f64> = (0..params.dims)
            .map(|_| StandardNormal.sample(&mut proto_rng))
            .collect();
        let norm = prototype.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut prototype {
            *x /= norm;
        }
        for j in 0..n_db_per_id {
            db_entries.push((format!("{identity}_d{j}"), identity.clone()));
            db_values.extend(item_vector(&prototype, params.noise_sigma, &mut item_rng));
        }
        for j in 0..n_q_per_id {
            query_entries.push((format!("{identity}_q{j}"), identity.clone()));
            query_values.extend(item_vector(&prototype, params.noise_sigma, &mut item_rng));
        }
    }
    let db_catalog = ItemCatalog::new(Role::Database, db_entries)?;
    let query_catalog = ItemCatalog::new(Role::Query, query_entries)?;
    let db_embeddings = EmbeddingMatrix::new(db_catalog.len(), params.dims, db_values)?;
    let query_embeddings = EmbeddingMatrix::new(query_catalog.len(), params.dims, query_values)?;

    let mut match_rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, "synth:matches"));
    let mut records = MatchRecordSet::new(query_catalog.len(), db_catalog.len());
    let half_gap = params.separation_delta / 2.0;
    let pos_low = 0.5 + half_gap;
    let neg_high = 0.5 - half_gap;
    for q in 0..query_catalog.len() {
        let query_hard = match_rng.random_range(0.0..1.0) < QUERY_FAIL_RATE;
        for d in 0..db_catalog.len() {
            let same = query_catalog.identity(q) == db_catalog.identity(d);
            let positive_pattern = if same && !query_hard {
                match_rng.random_range(0.0..1.0) >= FAIL_RATE
            } else {
                false
            };
            let n_matches = if positive_pattern {
                match_rng.random_range(4..=8)
            } else {
                match_rng.random_range(2..=10)
            };
            for _ in 0..n_matches {
                let c = if positive_pattern {
                    match_rng.random_range(pos_low..1.0)
                } else {
                    match_rng.random_range(0.0..neg_high)
                };
                records.add(q, d, c)?;
            }
            if !same && match_rng.random_range(0.0..1.0) < SPURIOUS_RATE {
                let n_spurious = match_rng.random_range(1..=2);
                for _ in 0..n_spurious {
                    let c = match_rng.random_range(pos_low..(pos_low + 0.1).min(1.0));
                    records.add(q, d, c)?;
                }
            }
        }
    }

    Ok(SynthDataset {
        query_catalog,
        db_catalog,
        query_embeddings,
        db_embeddings,
        records,
    })
}

/// Generate the dataset and write labels, embeddings, matches and a
/// ready-to-run pipeline config into `out_dir`.
pub fn generate_synthetic(params: &SynthParams, out_dir: &Path) -> Result<SynthPaths> {
    let dataset = generate_synthetic_in_memory(params)?;
    std::fs::create_dir_all(out_dir)?;
    let paths = SynthPaths {
        query_labels: out_dir.join("query.labels"),
        database_labels: out_dir.join("database.labels"),
        query_embeddings: out_dir.join("query.femb"),
        database_embeddings: out_dir.join("database.femb"),
        matches: out_dir.join("local.matches"),
        config: out_dir.join("config.toml"),
    };
    write_label_file(&paths.query_labels, &dataset.query_catalog)?;
    write_label_file(&paths.database_labels, &dataset.db_catalog)?;
    write_embedding_file(&paths.query_embeddings, &dataset.query_embeddings)?;
    write_embedding_file(&paths.database_embeddings, &dataset.db_embeddings)?;
    write_match_file(
        &paths.matches,
        &dataset.records,
        &dataset.query_catalog,
        &dataset.db_catalog,
    )?;
    let config = format!(
        r#"[labels]
query = "query.labels"
database = "database.labels"

[[scores]]
name = "global_cos"
type = "global"
query_embeddings = "query.femb"
database_embeddings = "database.femb"

[[scores]]
name = "local_match"
type = "local"
matches = "local.matches"

[calibration]
method = "isotonic_pchip"

[mu]
policy = "tuned"

[split]
ratio = 0.5
seed = {seed}
"#,
        seed = params.seed
    );
    std::fs::write(&paths.config, config)?;
    Ok(paths)
}
