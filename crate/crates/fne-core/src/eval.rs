//! Retrieval metrics and false-negative sampling diagnostics.

use alloc::vec::Vec;

use crate::datagen::{ItemId, PairedDataset};
use crate::embedding::SimilarityMatrix;
use crate::error::{Error, Result};

/// Recall@K for one retrieval direction.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionReport {
    /// (K, recall) pairs in the order the Ks were requested.
    pub recall_at: Vec<(usize, f64)>,
    pub n_queries: usize,
}

impl DirectionReport {
    pub fn recall(&self, k: usize) -> Option<f64> {
        self.recall_at.iter().find(|(kk, _)| *kk == k).map(|(_, r)| *r)
    }
}

/// Recall@K over both retrieval directions.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalReport {
    pub image_to_text: DirectionReport,
    pub text_to_image: DirectionReport,
}

impl RetrievalReport {
    /// Mean of the two directions' Recall@K.
    pub fn mean_recall(&self, k: usize) -> Option<f64> {
        Some((self.image_to_text.recall(k)? + self.text_to_image.recall(k)?) / 2.0)
    }
}

/// Fraction of queries whose top-K candidates (descending similarity, ties
/// broken by lower candidate index) contain any ground-truth id.
pub fn recall_at_k(
    similarity: &SimilarityMatrix,
    ground_truth: &[Vec<usize>],
    ks: &[usize],
) -> Result<DirectionReport> {
    if ground_truth.len() != similarity.rows() {
        return Err(Error::DimensionMismatch {
            expected: similarity.rows(),
            found: ground_truth.len(),
        });
    }
    let n = similarity.rows();
    let mut hits = alloc::vec![0usize; ks.len()];
    for q in 0..n {
        let truth = &ground_truth[q];
        if truth.is_empty() {
            return Err(Error::EmptyGroundTruth { query: q });
        }
        let row = similarity.row(q);
        // Rank of a candidate = number of candidates strictly more similar,
        // plus equally similar ones with a lower index. The best ground
        // truth rank decides every K at once.
        let best_rank = truth
            .iter()
            .map(|&g| {
                let sg = row[g];
                row.iter()
                    .enumerate()
                    .filter(|(j, s)| **s > sg || (**s == sg && *j < g))
                    .count()
            })
            .min()
            .unwrap();
        for (slot, &k) in ks.iter().enumerate() {
            if best_rank < k {
                hits[slot] += 1;
            }
        }
    }
    Ok(DirectionReport {
        recall_at: ks
            .iter()
            .zip(&hits)
            .map(|(&k, &h)| (k, h as f64 / n as f64))
            .collect(),
        n_queries: n,
    })
}

/// Fraction of logged negative selections that are ground-truth false
/// negatives (same cluster as the anchor, not annotated). Zero for an empty
/// log.
pub fn fn_sampling_rate(
    sample_log: &[(ItemId, ItemId)],
    dataset: &PairedDataset,
) -> Result<f64> {
    if !dataset.has_clusters() {
        return Err(Error::MissingClusterLabels);
    }
    if sample_log.is_empty() {
        return Ok(0.0);
    }
    let mut qualifying = 0usize;
    for (anchor, negative) in sample_log {
        if dataset.is_false_negative(*anchor, *negative)? {
            qualifying += 1;
        }
    }
    Ok(qualifying as f64 / sample_log.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{ClusterLabels, PairedDataset};
    use crate::embedding::{similarity_matrix, Embedding};

    // SimilarityMatrix has no raw constructor, so fixtures realize arbitrary
    // scores geometrically: query q is the basis vector e_q and candidate j
    // is its score column padded to unit norm on a helper axis, making
    // cosine(q, j) equal the requested score exactly (columns need norm < 1).
    fn matrix(rows: &[&[f64]]) -> SimilarityMatrix {
        let n_q = rows.len();
        let n_c = rows[0].len();
        let dim = n_q + 1;
        let queries: Vec<Embedding> = (0..n_q)
            .map(|q| {
                let mut v = vec![0.0; dim];
                v[q] = 1.0;
                Embedding::new(v).unwrap()
            })
            .collect();
        let candidates: Vec<Embedding> = (0..n_c)
            .map(|j| {
                let mut v: Vec<f64> = (0..n_q).map(|q| rows[q][j]).collect();
                let norm2: f64 = v.iter().map(|x| x * x).sum();
                assert!(norm2 < 1.0, "test scores must have column norm < 1");
                v.push(libm::sqrt(1.0 - norm2));
                Embedding::new(v).unwrap()
            })
            .collect();
        similarity_matrix(&queries, &candidates).unwrap()
    }

    #[test]
    fn singleton_gallery() {
        let m = matrix(&[&[0.4]]);
        let report = recall_at_k(&m, &[vec![0]], &[1]).unwrap();
        assert_eq!(report.recall(1), Some(1.0));
    }

    #[test]
    fn boundary_rank() {
        // Ground truth ranked exactly 3rd (index 2): recall@2 = 0, @3 = 1.
        let m = matrix(&[&[0.1, 0.5, 0.4]]);
        let report = recall_at_k(&m, &[vec![0]], &[2, 3]).unwrap();
        assert_eq!(report.recall(2), Some(0.0));
        assert_eq!(report.recall(3), Some(1.0));
    }

    #[test]
    fn ties_break_by_lower_index() {
        let m = matrix(&[&[0.5, 0.5]]);
        // Candidate 1 ties candidate 0 but loses the tie-break.
        let report = recall_at_k(&m, &[vec![1]], &[1, 2]).unwrap();
        assert_eq!(report.recall(1), Some(0.0));
        assert_eq!(report.recall(2), Some(1.0));
    }

    #[test]
    fn recall_full_gallery_is_one() {
        let m = matrix(&[&[0.3, 0.2], &[0.1, 0.4]]);
        let report = recall_at_k(&m, &[vec![1], vec![0]], &[2]).unwrap();
        assert_eq!(report.recall(2), Some(1.0));
    }

    #[test]
    fn empty_ground_truth_names_query() {
        let m = matrix(&[&[0.3], &[0.1]]);
        let err = recall_at_k(&m, &[vec![0], vec![]], &[1]).unwrap_err();
        assert_eq!(err, Error::EmptyGroundTruth { query: 1 });
    }

    #[test]
    fn rank_only_dependence() {
        // A strictly increasing transform of all scores leaves recall
        // unchanged.
        let rows: &[&[f64]] = &[&[0.1, 0.6, 0.3], &[0.5, 0.2, 0.4]];
        let transformed: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().map(|s| 0.9 * (2.0 * s - 0.5).tanh()).collect())
            .collect();
        let t_refs: Vec<&[f64]> = transformed.iter().map(|r| r.as_slice()).collect();
        let gt = vec![vec![2], vec![0, 1]];
        let a = recall_at_k(&matrix(rows), &gt, &[1, 2, 3]).unwrap();
        let b = recall_at_k(&matrix(&t_refs), &gt, &[1, 2, 3]).unwrap();
        assert_eq!(a, b);
    }

    fn toy_dataset() -> PairedDataset {
        // Two images, two texts; pair (t0 -> i0), (t1 -> i1).
        // Clusters: i0, t0, t1 share cluster 0; i1 is cluster 1.
        PairedDataset::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![1.0, 0.1], vec![0.1, 1.0]],
            vec![0, 1],
            Some(ClusterLabels { image: vec![0, 1], text: vec![0, 0] }),
        )
        .unwrap()
    }

    #[test]
    fn fn_rate_counts_qualifying_selections() {
        let data = toy_dataset();
        // i0 -> t1: same cluster, not annotated: qualifies.
        // i0 -> t0: annotated positive: no.
        // t1 -> i1: annotated: no. (t1's cluster is 0, i1's is 1 anyway.)
        let log = vec![
            (ItemId::Image(0), ItemId::Text(1)),
            (ItemId::Image(0), ItemId::Text(0)),
            (ItemId::Text(1), ItemId::Image(1)),
        ];
        let rate = fn_sampling_rate(&log, &data).unwrap();
        assert!((rate - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn fn_rate_extremes() {
        let data = toy_dataset();
        let all_cross = vec![(ItemId::Image(1), ItemId::Text(0))];
        // i1 cluster 1 vs t0 cluster 0: cross-cluster.
        assert_eq!(fn_sampling_rate(&all_cross, &data).unwrap(), 0.0);
        let all_same = vec![(ItemId::Image(0), ItemId::Text(1)); 4];
        assert_eq!(fn_sampling_rate(&all_same, &data).unwrap(), 1.0);
    }

    #[test]
    fn fn_rate_requires_labels() {
        let data = PairedDataset::new(
            vec![vec![1.0]],
            vec![vec![1.0]],
            vec![0],
            None,
        )
        .unwrap();
        let log = vec![(ItemId::Image(0), ItemId::Text(0))];
        assert_eq!(
            fn_sampling_rate(&log, &data).unwrap_err(),
            Error::MissingClusterLabels
        );
    }
}
