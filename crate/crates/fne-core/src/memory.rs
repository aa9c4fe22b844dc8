//! Fixed-capacity FIFO feature banks and momentum parameter updates.
//!
//! Banks are filled by the momentum encoders and enlarge the negative
//! candidate pool beyond the current mini-batch. Entries carry item ids so
//! annotated positives can be excluded at pool-build time.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec::Vec;

use crate::embedding::Embedding;
use crate::error::{Error, Result};

/// A FIFO queue of (item id, embedding) entries with strict oldest-first
/// eviction.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    capacity: usize,
    entries: VecDeque<(u64, Embedding)>,
}

impl MemoryBank {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidConfig(String::from(
                "bank capacity must be positive",
            )));
        }
        Ok(MemoryBank { capacity, entries: VecDeque::new() })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries oldest-to-newest.
    pub fn iter(&self) -> impl Iterator<Item = &(u64, Embedding)> {
        self.entries.iter()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Append a batch in order, evicting exactly the oldest overflow.
    pub fn enqueue_batch(&mut self, batch: Vec<(u64, Embedding)>) -> Result<()> {
        if batch.len() > self.capacity {
            return Err(Error::BatchExceedsCapacity {
                batch: batch.len(),
                capacity: self.capacity,
            });
        }
        if let Some(dim) = self
            .entries
            .front()
            .map(|(_, e)| e.dim())
            .or_else(|| batch.first().map(|(_, e)| e.dim()))
        {
            for (_, e) in &batch {
                if e.dim() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, found: e.dim() });
                }
            }
        }
        for entry in batch {
            self.entries.push_back(entry);
        }
        while self.entries.len() > self.capacity {
            self.entries.pop_front();
        }
        Ok(())
    }

    /// The candidate source for one anchor: current-batch items first, then
    /// bank entries oldest-to-newest, minus excluded ids.
    pub fn candidates<'a>(
        &'a self,
        batch: &'a [(u64, Embedding)],
        exclude_ids: &BTreeSet<u64>,
    ) -> Vec<(u64, &'a Embedding)> {
        batch
            .iter()
            .chain(self.entries.iter())
            .filter(|(id, _)| !exclude_ids.contains(id))
            .map(|(id, e)| (*id, e))
            .collect()
    }
}

/// Momentum coefficient for the key-encoder update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumParams {
    pub m: f64,
}

impl MomentumParams {
    pub fn new(m: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&m) {
            return Err(Error::InvalidConfig(String::from("momentum must be in [0, 1)")));
        }
        Ok(MomentumParams { m })
    }
}

/// In-place `theta_k <- m * theta_k + (1 - m) * theta_q`.
pub fn momentum_update(key_params: &mut [f64], query_params: &[f64], m: f64) -> Result<()> {
    if key_params.len() != query_params.len() {
        return Err(Error::DimensionMismatch {
            expected: key_params.len(),
            found: query_params.len(),
        });
    }
    for (k, q) in key_params.iter_mut().zip(query_params) {
        *k = m * *k + (1.0 - m) * q;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn emb(id: u64) -> (u64, Embedding) {
        (id, Embedding::new(vec![id as f64, 1.0]).unwrap())
    }

    fn ids(bank: &MemoryBank) -> Vec<u64> {
        bank.iter().map(|(id, _)| *id).collect()
    }

    #[test]
    fn fifo_eviction() {
        let mut bank = MemoryBank::new(3).unwrap();
        bank.enqueue_batch(vec![emb(0), emb(1), emb(2)]).unwrap();
        bank.enqueue_batch(vec![emb(3)]).unwrap();
        assert_eq!(ids(&bank), vec![1, 2, 3]);
    }

    #[test]
    fn under_full_enqueue() {
        let mut bank = MemoryBank::new(3).unwrap();
        bank.enqueue_batch(vec![emb(0), emb(1)]).unwrap();
        assert_eq!(ids(&bank), vec![0, 1]);
    }

    #[test]
    fn fills_after_capacity_over_batch_steps() {
        // 8192 / 32 = 256 steps to fill.
        let mut bank = MemoryBank::new(8192).unwrap();
        for step in 1..=300u64 {
            let batch: Vec<_> = (0..32).map(|k| emb(step * 32 + k)).collect();
            bank.enqueue_batch(batch).unwrap();
            if step >= 256 {
                assert_eq!(bank.len(), 8192);
            } else {
                assert_eq!(bank.len(), 32 * step as usize);
            }
        }
    }

    #[test]
    fn oversized_batch_rejected() {
        let mut bank = MemoryBank::new(2).unwrap();
        let err = bank.enqueue_batch(vec![emb(0), emb(1), emb(2)]).unwrap_err();
        assert_eq!(err, Error::BatchExceedsCapacity { batch: 3, capacity: 2 });
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut bank = MemoryBank::new(4).unwrap();
        bank.enqueue_batch(vec![emb(0)]).unwrap();
        let odd = (1u64, Embedding::new(vec![1.0, 2.0, 3.0]).unwrap());
        let err = bank.enqueue_batch(vec![odd]).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { expected: 2, found: 3 });
    }

    #[test]
    fn candidates_concatenate_batch_then_bank() {
        let bank = MemoryBank::new(4).unwrap();
        let batch: Vec<_> = (0..32).map(emb).collect();
        let exclude: BTreeSet<u64> = [31].into_iter().collect();
        let pool = bank.candidates(&batch, &exclude);
        assert_eq!(pool.len(), 31);

        let mut bank = MemoryBank::new(8).unwrap();
        bank.enqueue_batch(vec![emb(100), emb(101)]).unwrap();
        let batch = vec![emb(0), emb(1)];
        let pool = bank.candidates(&batch, &BTreeSet::new());
        let got: Vec<u64> = pool.iter().map(|(id, _)| *id).collect();
        assert_eq!(got, vec![0, 1, 100, 101]);
    }

    #[test]
    fn counting_fixture_with_bank_occurrences() {
        // Bank of 8192 where the excluded id occurs 5 times, plus a batch of
        // 32 without it: 8224 - 5 = 8219 candidates.
        let mut bank = MemoryBank::new(8192).unwrap();
        let mut batch_buf = Vec::new();
        for i in 0..8192u64 {
            let id = if i % 1638 == 0 && i < 5 * 1638 { 999_999 } else { 1000 + i };
            batch_buf.push(emb(id));
            if batch_buf.len() == 1024 {
                bank.enqueue_batch(core::mem::take(&mut batch_buf)).unwrap();
            }
        }
        assert_eq!(bank.len(), 8192);
        assert_eq!(bank.iter().filter(|(id, _)| *id == 999_999).count(), 5);
        let batch: Vec<_> = (0..32).map(emb).collect();
        let exclude: BTreeSet<u64> = [999_999].into_iter().collect();
        assert_eq!(bank.candidates(&batch, &exclude).len(), 8219);
    }

    #[test]
    fn excluding_everything_yields_empty_pool() {
        let mut bank = MemoryBank::new(4).unwrap();
        bank.enqueue_batch(vec![emb(0), emb(1)]).unwrap();
        let batch = vec![emb(2)];
        let exclude: BTreeSet<u64> = [0, 1, 2].into_iter().collect();
        assert!(bank.candidates(&batch, &exclude).is_empty());
    }

    #[test]
    fn momentum_update_values() {
        let mut k = vec![1.0];
        momentum_update(&mut k, &[0.0], 0.995).unwrap();
        assert!((k[0] - 0.995).abs() < 1e-12);

        let mut k = vec![3.0, -2.0];
        momentum_update(&mut k, &[5.0, 7.0], 0.0).unwrap();
        assert_eq!(k, vec![5.0, 7.0]);

        let mut k = vec![1.5, 2.5];
        momentum_update(&mut k, &[1.5, 2.5], 0.7).unwrap();
        assert_eq!(k, vec![1.5, 2.5]);
    }

    #[test]
    fn momentum_update_shape_check() {
        let mut k = vec![1.0, 2.0];
        let err = momentum_update(&mut k, &[1.0], 0.5).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { expected: 2, found: 1 });
    }

    #[test]
    fn momentum_geometric_decay() {
        // With theta_q frozen, |theta_k^n - theta_q| = m^n |theta_k^0 - theta_q|.
        let q = [0.3, -0.7, 1.1];
        for m in [0.0, 0.5, 0.995] {
            let k0 = [1.0, 2.0, -1.0];
            let mut k = k0;
            let norm0: f64 = libm::sqrt(
                k0.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum(),
            );
            for n in 1..=100u32 {
                momentum_update(&mut k, &q, m).unwrap();
                if [1, 10, 100].contains(&n) {
                    let norm: f64 = libm::sqrt(
                        k.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum(),
                    );
                    let expect = libm::pow(m, n as f64) * norm0;
                    // Absolute floor: after many halvings the distance sits
                    // below the float rounding error of the fixed point.
                    assert!(
                        (norm - expect).abs() <= 1e-6 * expect + 1e-12,
                        "m={m} n={n}"
                    );
                }
            }
        }
    }

    proptest! {
        #[test]
        fn bank_length_and_contents_match_replay(
            capacity in 1usize..40,
            batches in proptest::collection::vec(
                proptest::collection::vec(0u64..1000, 0..32), 0..30),
        ) {
            let mut bank = MemoryBank::new(capacity).unwrap();
            let mut replay: Vec<u64> = Vec::new();
            for batch in batches {
                let sized: Vec<u64> =
                    batch.into_iter().take(capacity).collect();
                replay.extend(&sized);
                bank.enqueue_batch(sized.into_iter().map(emb).collect()).unwrap();
                prop_assert!(bank.len() <= capacity);
                let tail_start = replay.len().saturating_sub(capacity);
                prop_assert_eq!(ids(&bank), replay[tail_start..].to_vec());
            }
        }
    }
}
