//! Dense vector primitives: pooling, cosine similarity, and batched
//! similarity matrices.
//!
//! All similarity computation happens in `f64`; posterior ratios downstream
//! are sensitive to similarity rounding.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// A fixed-dimension embedding vector. Entries are always finite and the
/// vector is nonempty.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { context: "embedding", index: i });
            }
        }
        Ok(Embedding { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.values.iter().map(|v| v * v).sum())
    }
}

/// An ordered set of token vectors sharing one dimension, e.g. patch or word
/// features before pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSet {
    tokens: Vec<Vec<f64>>,
}

impl TokenSet {
    pub fn new(tokens: Vec<Vec<f64>>) -> Result<Self> {
        let dim = match tokens.first() {
            Some(t) => t.len(),
            None => return Err(Error::EmptyTokenSet),
        };
        if dim == 0 {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        for t in &tokens {
            if t.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: t.len() });
            }
        }
        Ok(TokenSet { tokens })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.tokens[0].len()
    }

    pub fn tokens(&self) -> &[Vec<f64>] {
        &self.tokens
    }
}

/// Elementwise mean of the token vectors.
pub fn average_pool(tokens: &TokenSet) -> Result<Embedding> {
    let dim = tokens.dim();
    let n = tokens.len() as f64;
    let mut mean = alloc::vec![0.0; dim];
    for t in tokens.tokens() {
        for (m, v) in mean.iter_mut().zip(t) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    Embedding::new(mean)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity of two nonzero embeddings, clamped to [-1, 1].
pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm { index: None });
    }
    let s = dot(a.values(), b.values()) / (na * nb);
    Ok(s.clamp(-1.0, 1.0))
}

/// Pairwise cosine similarities between a query set and a candidate set.
/// Entry (i, j) is the similarity of query i and candidate j.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

pub fn similarity_matrix(
    queries: &[Embedding],
    candidates: &[Embedding],
) -> Result<SimilarityMatrix> {
    let dim = queries
        .first()
        .or_else(|| candidates.first())
        .map(Embedding::dim);
    if let Some(dim) = dim {
        for e in queries.iter().chain(candidates) {
            if e.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: e.dim() });
            }
        }
    }
    // Reject degenerate vectors up front so the error names the index.
    let qnorms: Vec<f64> = queries.iter().map(Embedding::norm).collect();
    for (i, n) in qnorms.iter().enumerate() {
        if *n == 0.0 {
            return Err(Error::ZeroNorm { index: Some(i) });
        }
    }
    let cnorms: Vec<f64> = candidates.iter().map(Embedding::norm).collect();
    for (j, n) in cnorms.iter().enumerate() {
        if *n == 0.0 {
            return Err(Error::ZeroNorm { index: Some(j) });
        }
    }
    let mut data = Vec::with_capacity(queries.len() * candidates.len());
    for (q, nq) in queries.iter().zip(&qnorms) {
        for (c, nc) in candidates.iter().zip(&cnorms) {
            let s = dot(q.values(), c.values()) / (nq * nc);
            data.push(s.clamp(-1.0, 1.0));
        }
    }
    Ok(SimilarityMatrix { rows: queries.len(), cols: candidates.len(), data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn emb(v: &[f64]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    #[test]
    fn average_pool_two_vectors() {
        let ts = TokenSet::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(average_pool(&ts).unwrap().values(), &[0.5, 0.5]);
    }

    #[test]
    fn average_pool_singleton_identity() {
        let ts = TokenSet::new(vec![vec![2.0, 4.0]]).unwrap();
        assert_eq!(average_pool(&ts).unwrap().values(), &[2.0, 4.0]);
    }

    #[test]
    fn average_pool_column_means() {
        // Hand arithmetic: column means of {(1,1),(3,1),(2,4)} are (2,2).
        let ts =
            TokenSet::new(vec![vec![1.0, 1.0], vec![3.0, 1.0], vec![2.0, 4.0]]).unwrap();
        let pooled = average_pool(&ts).unwrap();
        assert_relative_eq!(pooled.values()[0], 2.0);
        assert_relative_eq!(pooled.values()[1], 2.0);
    }

    #[test]
    fn average_pool_rejects_empty() {
        assert_eq!(TokenSet::new(vec![]).unwrap_err(), Error::EmptyTokenSet);
    }

    #[test]
    fn cosine_orthogonal_and_self() {
        assert_relative_eq!(
            cosine_similarity(&emb(&[1.0, 0.0]), &emb(&[0.0, 1.0])).unwrap(),
            0.0
        );
        assert_relative_eq!(
            cosine_similarity(&emb(&[3.0, 4.0]), &emb(&[3.0, 4.0])).unwrap(),
            1.0
        );
    }

    #[test]
    fn cosine_45_degrees() {
        let s = cosine_similarity(&emb(&[1.0, 0.0]), &emb(&[1.0, 1.0])).unwrap();
        assert_relative_eq!(s, core::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn cosine_rejects_zero_norm() {
        let err = cosine_similarity(&emb(&[0.0, 0.0]), &emb(&[1.0, 0.0])).unwrap_err();
        assert_eq!(err, Error::ZeroNorm { index: None });
    }

    #[test]
    fn matrix_matches_spec_examples() {
        let m = similarity_matrix(
            &[emb(&[1.0, 0.0])],
            &[emb(&[1.0, 0.0]), emb(&[0.0, 1.0])],
        )
        .unwrap();
        assert_eq!((m.rows(), m.cols()), (1, 2));
        assert_relative_eq!(m.get(0, 0), 1.0);
        assert_relative_eq!(m.get(0, 1), 0.0);

        let empty = similarity_matrix(&[emb(&[1.0, 0.0])], &[]).unwrap();
        assert_eq!((empty.rows(), empty.cols()), (1, 0));

        let m = similarity_matrix(
            &[emb(&[1.0, 0.0]), emb(&[0.0, 1.0])],
            &[emb(&[1.0, 1.0])],
        )
        .unwrap();
        assert_relative_eq!(m.get(0, 0), 0.7071, epsilon = 1e-4);
        assert_relative_eq!(m.get(1, 0), 0.7071, epsilon = 1e-4);
    }

    #[test]
    fn matrix_errors_name_offending_candidate() {
        let err = similarity_matrix(
            &[emb(&[1.0, 0.0])],
            &[emb(&[1.0, 1.0]), emb(&[0.0, 0.0])],
        )
        .unwrap_err();
        assert_eq!(err, Error::ZeroNorm { index: Some(1) });

        let err =
            similarity_matrix(&[emb(&[1.0, 0.0])], &[emb(&[1.0, 1.0, 0.0])]).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { expected: 2, found: 3 });
    }

    fn vec_strategy(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-100.0f64..100.0, dim)
            .prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
    }

    proptest! {
        #[test]
        fn cosine_is_symmetric(a in vec_strategy(5), b in vec_strategy(5)) {
            let (ea, eb) = (emb(&a), emb(&b));
            let sab = cosine_similarity(&ea, &eb).unwrap();
            let sba = cosine_similarity(&eb, &ea).unwrap();
            prop_assert!((sab - sba).abs() <= 1e-12);
        }

        #[test]
        fn cosine_is_scale_invariant(a in vec_strategy(5), b in vec_strategy(5), c in 0.01f64..100.0) {
            let scaled: Vec<f64> = a.iter().map(|x| x * c).collect();
            let s1 = cosine_similarity(&emb(&a), &emb(&b)).unwrap();
            let s2 = cosine_similarity(&emb(&scaled), &emb(&b)).unwrap();
            prop_assert!((s1 - s2).abs() <= 1e-6);
        }

        #[test]
        fn matrix_entries_match_per_pair_calls(
            qs in proptest::collection::vec(vec_strategy(4), 1..5),
            cs in proptest::collection::vec(vec_strategy(4), 1..5),
        ) {
            let queries: Vec<Embedding> = qs.iter().map(|v| emb(v)).collect();
            let candidates: Vec<Embedding> = cs.iter().map(|v| emb(v)).collect();
            let m = similarity_matrix(&queries, &candidates).unwrap();
            for (i, q) in queries.iter().enumerate() {
                for (j, c) in candidates.iter().enumerate() {
                    prop_assert_eq!(m.get(i, j), cosine_similarity(q, c).unwrap());
                }
            }
        }

        #[test]
        fn pooling_is_permutation_invariant(
            tokens in proptest::collection::vec(vec_strategy(4), 1..6),
        ) {
            let pooled = average_pool(&TokenSet::new(tokens.clone()).unwrap()).unwrap();
            let mut reversed = tokens;
            reversed.reverse();
            let pooled_rev = average_pool(&TokenSet::new(reversed).unwrap()).unwrap();
            for (a, b) in pooled.values().iter().zip(pooled_rev.values()) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }
    }
}
