//! Raw similarity scores: global cosine similarity between embeddings and
//! thresholded local-match counts.

use rayon::prelude::*;

use crate::data::{EmbeddingMatrix, MatchRecordSet, ScoreKind, ScoreMatrix};
use crate::error::{Error, Result};

/// Confidence threshold for counting a local match as significant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchThreshold(f64);

impl MatchThreshold {
    /// Reasonable default in most scenarios.
    pub const DEFAULT: f64 = 0.5;

    pub fn new(mu: f64) -> Result<Self> {
        if !mu.is_finite() || !(0.0..=1.0).contains(&mu) {
            return Err(Error::Config(format!("threshold mu {mu} outside [0, 1]")));
        }
        Ok(Self(mu))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

impl Default for MatchThreshold {
    fn default() -> Self {
        Self(Self::DEFAULT)
    }
}

/// Cosine similarity `(a·b) / sqrt((a·a)(b·b))`.
///
/// Accumulation runs in index order in double precision, so the result is
/// bit-identical under argument swap and identical vectors score exactly 1.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "cosine of {}-dim and {}-dim vectors",
            a.len(),
            b.len()
        )));
    }
    let mut dot = 0.0f64;
    let mut na2 = 0.0f64;
    let mut nb2 = 0.0f64;
    for i in 0..a.len() {
        if !a[i].is_finite() || !b[i].is_finite() {
            return Err(Error::DegenerateInput(format!(
                "non-finite value at dimension {i}"
            )));
        }
        dot += a[i] * b[i];
        na2 += a[i] * a[i];
        nb2 += b[i] * b[i];
    }
    if na2 <= 0.0 || nb2 <= 0.0 {
        return Err(Error::DegenerateInput("zero-norm vector".into()));
    }
    Ok(dot / (na2 * nb2).sqrt())
}

/// Pairwise cosine similarity of every query row against every database row.
///
/// Entries are clamped to `[-1, 1]` to absorb rounding. Parallel over query
/// rows; each row is computed sequentially, so results do not depend on the
/// worker count.
pub fn global_score_matrix(query: &EmbeddingMatrix, db: &EmbeddingMatrix) -> Result<ScoreMatrix> {
    if query.dims() != db.dims() {
        return Err(Error::Shape(format!(
            "query embeddings have {} dims, database {}",
            query.dims(),
            db.dims()
        )));
    }
    let n_query = query.rows();
    let n_database = db.rows();
    let dims = query.dims();
    let mut values = vec![0.0f64; n_query * n_database];
    values
        .par_chunks_mut(n_database.max(1))
        .enumerate()
        .take(n_query)
        .for_each(|(q, out)| {
            let qrow = query.row(q);
            let qn2 = query.row_norm2(q);
            for (d, entry) in out.iter_mut().enumerate() {
                let drow = db.row(d);
                let mut dot = 0.0f64;
                for i in 0..dims {
                    dot += qrow[i] * drow[i];
                }
                let cos = dot / (qn2 * db.row_norm2(d)).sqrt();
                *entry = cos.clamp(-1.0, 1.0);
            }
        });
    ScoreMatrix::new(ScoreKind::RawGlobal, n_query, n_database, values)
}

/// Number of confidences strictly above the threshold.
pub fn local_match_count(confidences: &[f64], threshold: MatchThreshold) -> Result<usize> {
    let mu = threshold.value();
    let mut count = 0;
    for (i, &c) in confidences.iter().enumerate() {
        if !c.is_finite() || !(0.0..=1.0).contains(&c) {
            return Err(Error::Range(format!(
                "match confidence {c} at index {i} outside [0, 1]"
            )));
        }
        if c > mu {
            count += 1;
        }
    }
    Ok(count)
}

/// Thresholded match counts for every pair; absent pairs score 0.
pub fn local_score_matrix(
    records: &MatchRecordSet,
    threshold: MatchThreshold,
    n_query: usize,
    n_database: usize,
) -> Result<ScoreMatrix> {
    let mut values = vec![0.0f64; n_query * n_database];
    for (&(q, d), confidences) in records.iter() {
        if q >= n_query || d >= n_database {
            return Err(Error::Index(format!(
                "match record pair ({q}, {d}) outside {n_query}x{n_database} matrix"
            )));
        }
        values[q * n_database + d] = local_match_count(confidences, threshold)? as f64;
    }
    ScoreMatrix::new(ScoreKind::RawLocal, n_query, n_database, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_identical_unit_vectors() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn cosine_orthogonal() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn cosine_45_degrees() {
        let v = cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((v - 0.70710678).abs() < 1e-8);
        assert!((v - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(
            cosine_similarity(&[1.0], &[1.0, 0.0]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn global_matrix_self_similarity_diagonal() {
        let m = EmbeddingMatrix::new(3, 2, vec![1.0, 0.0, 0.3, 2.0, -0.7, 0.4]).unwrap();
        let scores = global_score_matrix(&m, &m).unwrap();
        for i in 0..3 {
            assert_eq!(scores.get(i, i), 1.0);
        }
    }

    #[test]
    fn global_matrix_orthogonal_single_entry() {
        let a = EmbeddingMatrix::new(1, 2, vec![1.0, 0.0]).unwrap();
        let b = EmbeddingMatrix::new(1, 2, vec![0.0, 1.0]).unwrap();
        let scores = global_score_matrix(&a, &b).unwrap();
        assert_eq!(scores.get(0, 0), 0.0);
    }

    #[test]
    fn global_matrix_matches_scalar_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let qv: Vec<f64> = (0..4 * 8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dv: Vec<f64> = (0..5 * 8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let q = EmbeddingMatrix::new(4, 8, qv).unwrap();
        let d = EmbeddingMatrix::new(5, 8, dv).unwrap();
        let scores = global_score_matrix(&q, &d).unwrap();
        for qi in 0..4 {
            for di in 0..5 {
                let oracle = cosine_similarity(q.row(qi), d.row(di)).unwrap();
                assert!((scores.get(qi, di) - oracle).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn global_matrix_dim_mismatch() {
        let a = EmbeddingMatrix::new(1, 2, vec![1.0, 0.0]).unwrap();
        let b = EmbeddingMatrix::new(1, 3, vec![0.0, 1.0, 0.0]).unwrap();
        assert!(matches!(global_score_matrix(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn match_count_basics() {
        let mu = MatchThreshold::new(0.5).unwrap();
        assert_eq!(local_match_count(&[0.9, 0.3, 0.6], mu).unwrap(), 2);
        assert_eq!(
            local_match_count(&[], MatchThreshold::new(0.0).unwrap()).unwrap(),
            0
        );
        // Strict inequality: the boundary value is excluded.
        assert_eq!(local_match_count(&[0.5], mu).unwrap(), 0);
        assert!(matches!(
            local_match_count(&[1.2], mu),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn local_matrix_absent_pairs_are_zero() {
        let records = MatchRecordSet::new(2, 2);
        let scores =
            local_score_matrix(&records, MatchThreshold::default(), 2, 2).unwrap();
        assert!(scores.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn local_matrix_counts_pair() {
        let mut records = MatchRecordSet::new(1, 2);
        records.add(0, 1, 0.8).unwrap();
        records.add(0, 1, 0.9).unwrap();
        let scores =
            local_score_matrix(&records, MatchThreshold::new(0.5).unwrap(), 1, 2).unwrap();
        assert_eq!(scores.row(0), &[0.0, 2.0]);
    }

    #[test]
    fn local_matrix_matches_scalar_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut records = MatchRecordSet::new(4, 6);
        for _ in 0..30 {
            let q = rng.random_range(0..4);
            let d = rng.random_range(0..6);
            records.add(q, d, rng.random_range(0.0..=1.0)).unwrap();
        }
        let mu = MatchThreshold::new(0.45).unwrap();
        let scores = local_score_matrix(&records, mu, 4, 6).unwrap();
        for q in 0..4 {
            for d in 0..6 {
                let oracle = local_match_count(records.confidences(q, d), mu).unwrap();
                assert_eq!(scores.get(q, d), oracle as f64);
            }
        }
    }

    #[test]
    fn local_matrix_out_of_bounds_index() {
        let mut records = MatchRecordSet::new(3, 3);
        records.add(2, 2, 0.7).unwrap();
        assert!(matches!(
            local_score_matrix(&records, MatchThreshold::default(), 2, 3),
            Err(Error::Index(_))
        ));
    }

    fn vec_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..16).prop_flat_map(|n| {
            (
                proptest::collection::vec(-10.0f64..10.0, n),
                proptest::collection::vec(-10.0f64..10.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn cosine_symmetry_bit_identical((a, b) in vec_pair()) {
            prop_assume!(a.iter().map(|v| v * v).sum::<f64>() > 1e-6);
            prop_assume!(b.iter().map(|v| v * v).sum::<f64>() > 1e-6);
            let ab = cosine_similarity(&a, &b).unwrap();
            let ba = cosine_similarity(&b, &a).unwrap();
            prop_assert_eq!(ab.to_bits(), ba.to_bits());
        }

        #[test]
        fn cosine_scale_invariance((a, b) in vec_pair(), lambda in 0.001f64..1000.0) {
            prop_assume!(a.iter().map(|v| v * v).sum::<f64>() > 1e-6);
            prop_assume!(b.iter().map(|v| v * v).sum::<f64>() > 1e-6);
            let scaled: Vec<f64> = a.iter().map(|&v| lambda * v).collect();
            let base = cosine_similarity(&a, &b).unwrap();
            let after = cosine_similarity(&scaled, &b).unwrap();
            prop_assert!((base - after).abs() < 1e-12);
        }

        #[test]
        fn mu_monotonicity(
            confs in proptest::collection::vec(0.0f64..=1.0, 0..20),
            mu1 in 0.0f64..=1.0,
            mu2 in 0.0f64..=1.0,
        ) {
            let (lo, hi) = if mu1 <= mu2 { (mu1, mu2) } else { (mu2, mu1) };
            let c_lo = local_match_count(&confs, MatchThreshold::new(lo).unwrap()).unwrap();
            let c_hi = local_match_count(&confs, MatchThreshold::new(hi).unwrap()).unwrap();
            prop_assert!(c_lo >= c_hi);
            prop_assert!(c_lo <= confs.len());
        }
    }
}
