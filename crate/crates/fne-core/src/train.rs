//! The SGD training loop: encode, pool candidates, track similarity
//! distributions, sample negatives, and step the encoders.
//!
//! Anchors are annotated image-text pairs; every mini-batch contributes two
//! triplet directions per anchor (a negative text for the image anchor, a
//! negative image for the text anchor). Candidate pools are the current
//! batch (query-encoder features, gradients flow) followed by the memory
//! bank (momentum features, treated as constants). Trainer code never reads
//! cluster labels; it only records which negatives were chosen so that
//! evaluation can score them afterwards.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::datagen::{ItemId, PairedDataset};
use crate::embedding::{cosine_similarity, Embedding};
use crate::error::{Error, Result};
use crate::memory::{MemoryBank, MomentumParams};
use crate::model::{loss_backward, EncoderGrads, LinearEncoder, TrainConfig};
use crate::sampler::{
    baseline_select, combined_weights, sample_negative, CandidatePool, FneConfig,
    SamplingMode, Selection,
};
use crate::stats::DistributionTracker;

/// Everything the trainer mutates across steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub encoder_image: LinearEncoder,
    pub encoder_text: LinearEncoder,
    pub momentum_image: LinearEncoder,
    pub momentum_text: LinearEncoder,
    pub bank_image: MemoryBank,
    pub bank_text: MemoryBank,
    pub tracker: DistributionTracker,
    pub momentum: MomentumParams,
}

impl TrainState {
    /// Fresh state: random query encoders, momentum encoders as exact
    /// copies, empty banks.
    #[allow(clippy::too_many_arguments)]
    pub fn init<R: Rng + ?Sized>(
        image_dim: usize,
        text_dim: usize,
        embed_dim: usize,
        bank_capacity: usize,
        min_ready_count: u64,
        sigma_floor: f64,
        momentum: MomentumParams,
        rng: &mut R,
    ) -> Result<Self> {
        let encoder_image = LinearEncoder::new_random(image_dim, embed_dim, rng);
        let encoder_text = LinearEncoder::new_random(text_dim, embed_dim, rng);
        Ok(TrainState {
            momentum_image: encoder_image.clone(),
            momentum_text: encoder_text.clone(),
            encoder_image,
            encoder_text,
            bank_image: MemoryBank::new(bank_capacity)?,
            bank_text: MemoryBank::new(bank_capacity)?,
            tracker: DistributionTracker::new(min_ready_count, sigma_floor),
            momentum,
        })
    }
}

/// One negative selection, kept for false-negative diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleRecord {
    pub anchor: ItemId,
    pub negative: ItemId,
}

/// Per-step training log row.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    pub epoch: u32,
    pub step: u32,
    /// Mean triplet loss over the batch.
    pub loss: f64,
    pub mu_pos: f64,
    pub sigma_pos: f64,
    pub mu_neg: f64,
    pub sigma_neg: f64,
    pub tracker_ready: bool,
    /// Whether posterior weighting (rather than the warm-up uniform
    /// fallback) drove this step's selections.
    pub used_fne: bool,
    pub samples: Vec<SampleRecord>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpochLog {
    pub steps: Vec<StepLog>,
}

/// Knobs of the loop itself, beyond optimizer hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoopOptions {
    /// Drop all tracker statistics at each epoch start so the Gaussian fits
    /// follow the evolving encoder rather than averaging over stale epochs.
    pub reset_tracker_each_epoch: bool,
    /// Empty both banks at each epoch start.
    pub clear_banks_each_epoch: bool,
    /// Feed the tracker bank similarities as well as in-batch ones.
    pub track_bank_candidates: bool,
}

impl Default for LoopOptions {
    fn default() -> Self {
        LoopOptions {
            reset_tracker_each_epoch: true,
            clear_banks_each_epoch: false,
            track_bank_candidates: true,
        }
    }
}

/// Where a pool entry's embedding lives.
#[derive(Debug, Clone, Copy)]
enum PoolSource {
    /// Index into the batch (query features; gradients flow back).
    Batch(usize),
    /// Unfiltered position in the memory bank (momentum features; constant).
    Bank(usize),
}

struct DirectionPool {
    ids: Vec<u64>,
    similarities: Vec<f64>,
    sources: Vec<PoolSource>,
    /// How many leading entries feed the distribution tracker.
    tracked: usize,
}

fn build_pool(
    anchor: &Embedding,
    batch: &[(u64, Embedding)],
    bank: &MemoryBank,
    exclude: &BTreeSet<u64>,
    track_bank: bool,
) -> Result<DirectionPool> {
    let mut ids = Vec::new();
    let mut similarities = Vec::new();
    let mut sources = Vec::new();
    for (slot, (id, emb)) in batch.iter().enumerate() {
        if exclude.contains(id) {
            continue;
        }
        ids.push(*id);
        similarities.push(cosine_similarity(anchor, emb)?);
        sources.push(PoolSource::Batch(slot));
    }
    let batch_count = ids.len();
    for (pos, (id, emb)) in bank.iter().enumerate() {
        if exclude.contains(id) {
            continue;
        }
        ids.push(*id);
        similarities.push(cosine_similarity(anchor, emb)?);
        sources.push(PoolSource::Bank(pos));
    }
    let tracked = if track_bank { ids.len() } else { batch_count };
    Ok(DirectionPool { ids, similarities, sources, tracked })
}

fn choose<R: Rng + ?Sized>(
    pool: &CandidatePool,
    tracker: &DistributionTracker,
    fne: &FneConfig,
    rng: &mut R,
) -> Result<(Selection, bool)> {
    match fne.mode {
        SamplingMode::Fne => {
            if tracker.ready() {
                let report = combined_weights(pool, &tracker.snapshot(), fne)?;
                Ok((sample_negative(&report, pool, rng)?, true))
            } else {
                // Hardest fallback during warm-up: strong early gradients,
                // and the weighting takes over once the fits are trusted.
                Ok((baseline_select(pool, SamplingMode::Hardest, rng)?, false))
            }
        }
        mode => Ok((baseline_select(pool, mode, rng)?, false)),
    }
}

/// Run one epoch of training. Deterministic for a fixed rng state.
pub fn train_epoch<R: Rng + ?Sized>(
    state: &mut TrainState,
    dataset: &PairedDataset,
    train: &TrainConfig,
    fne: &FneConfig,
    options: &LoopOptions,
    epoch: u32,
    rng: &mut R,
) -> Result<EpochLog> {
    train.validate()?;
    fne.validate()?;
    if dataset.n_texts() == 0 {
        return Err(Error::InvalidConfig(String::from("dataset is empty")));
    }
    if options.reset_tracker_each_epoch {
        state.tracker.reset();
    }
    if options.clear_banks_each_epoch {
        state.bank_image.clear();
        state.bank_text.clear();
    }

    let mut order: Vec<usize> = (0..dataset.n_texts()).collect();
    order.shuffle(rng);

    let lr = train.learning_rate_at(epoch);
    let mut log = EpochLog::default();

    for (step_idx, batch_texts) in order.chunks(train.batch_size).enumerate() {
        let batch_images: Vec<usize> =
            batch_texts.iter().map(|&t| dataset.pair_of(t)).collect();

        // Query and momentum features for the batch.
        let image_q: Vec<Embedding> = batch_images
            .iter()
            .map(|&i| state.encoder_image.encode(dataset.image_view(i)))
            .collect::<Result<_>>()?;
        let text_q: Vec<Embedding> = batch_texts
            .iter()
            .map(|&t| state.encoder_text.encode(dataset.text_view(t)))
            .collect::<Result<_>>()?;
        let image_k: Vec<(u64, Embedding)> = batch_images
            .iter()
            .map(|&i| {
                state
                    .momentum_image
                    .encode(dataset.image_view(i))
                    .map(|e| (i as u64, e))
            })
            .collect::<Result<_>>()?;
        let text_k: Vec<(u64, Embedding)> = batch_texts
            .iter()
            .map(|&t| {
                state
                    .momentum_text
                    .encode(dataset.text_view(t))
                    .map(|e| (t as u64, e))
            })
            .collect::<Result<_>>()?;

        let image_batch: Vec<(u64, Embedding)> = batch_images
            .iter()
            .zip(&image_q)
            .map(|(&i, e)| (i as u64, e.clone()))
            .collect();
        let text_batch: Vec<(u64, Embedding)> = batch_texts
            .iter()
            .zip(&text_q)
            .map(|(&t, e)| (t as u64, e.clone()))
            .collect();

        // Pools and tracker observations for all anchors before any
        // selection, so the whole batch sees one consistent snapshot.
        let mut positive_sims = Vec::with_capacity(batch_texts.len());
        let mut text_pools = Vec::with_capacity(batch_texts.len());
        let mut image_pools = Vec::with_capacity(batch_texts.len());
        let mut tracked_pos = Vec::new();
        let mut tracked_negs: Vec<Vec<f64>> = Vec::new();

        for (a, &i) in batch_images.iter().enumerate() {
            let s_pos = cosine_similarity(&image_q[a], &text_q[a])?;
            positive_sims.push(s_pos);

            // Image anchor vs candidate texts: exclude every annotated
            // caption of this image.
            let exclude_texts: BTreeSet<u64> =
                dataset.captions_of(i).iter().map(|&t| t as u64).collect();
            let text_pool = build_pool(
                &image_q[a],
                &text_batch,
                &state.bank_text,
                &exclude_texts,
                options.track_bank_candidates,
            )?;

            // Text anchor vs candidate images: exclude its annotated image.
            let exclude_images: BTreeSet<u64> = [i as u64].into_iter().collect();
            let image_pool = build_pool(
                &text_q[a],
                &image_batch,
                &state.bank_image,
                &exclude_images,
                options.track_bank_candidates,
            )?;

            tracked_pos.push(s_pos);
            tracked_negs.push(text_pool.similarities[..text_pool.tracked].to_vec());
            tracked_pos.push(s_pos);
            tracked_negs.push(image_pool.similarities[..image_pool.tracked].to_vec());

            text_pools.push(text_pool);
            image_pools.push(image_pool);
        }

        state.tracker.observe_batch(&tracked_pos, &tracked_negs)?;

        // Select negatives, then accumulate loss and gradients.
        let mut grads_image = EncoderGrads::zeros(&state.encoder_image);
        let mut grads_text = EncoderGrads::zeros(&state.encoder_text);
        let mut total_loss = 0.0;
        let mut samples = Vec::with_capacity(2 * batch_texts.len());
        let mut used_fne = false;

        for (a, (&t, &i)) in batch_texts.iter().zip(&batch_images).enumerate() {
            let tp = &text_pools[a];
            let ip = &image_pools[a];
            let text_candidates = CandidatePool::new(
                tp.ids.clone(),
                tp.similarities.clone(),
                positive_sims[a],
            )?;
            let image_candidates = CandidatePool::new(
                ip.ids.clone(),
                ip.similarities.clone(),
                positive_sims[a],
            )?;

            let (neg_text, fne_t) = choose(&text_candidates, &state.tracker, fne, rng)?;
            let (neg_image, fne_i) = choose(&image_candidates, &state.tracker, fne, rng)?;
            used_fne |= fne_t || fne_i;

            samples.push(SampleRecord {
                anchor: ItemId::Image(i),
                negative: ItemId::Text(neg_text.id as usize),
            });
            samples.push(SampleRecord {
                anchor: ItemId::Text(t),
                negative: ItemId::Image(neg_image.id as usize),
            });

            let text_source = tp.sources[neg_text.index];
            let image_source = ip.sources[neg_image.index];
            let neg_text_emb: &Embedding = match text_source {
                PoolSource::Batch(slot) => &text_batch[slot].1,
                PoolSource::Bank(pos) => {
                    &state.bank_text.iter().nth(pos).expect("bank position valid").1
                }
            };
            let neg_image_emb: &Embedding = match image_source {
                PoolSource::Batch(slot) => &image_batch[slot].1,
                PoolSource::Bank(pos) => {
                    &state.bank_image.iter().nth(pos).expect("bank position valid").1
                }
            };

            let out = loss_backward(
                &image_q[a],
                &text_q[a],
                neg_text_emb,
                neg_image_emb,
                train.margin,
            )?;
            total_loss += out.loss;

            grads_image.accumulate(&out.grad_anchor_image, dataset.image_view(i));
            grads_text.accumulate(&out.grad_positive_text, dataset.text_view(t));
            // Gradients reach a negative only when it came from the batch;
            // bank entries are momentum features and stay constant.
            if let (Some(g), PoolSource::Batch(slot)) = (&out.grad_neg_text, text_source) {
                grads_text.accumulate(g, dataset.text_view(batch_texts[slot]));
            }
            if let (Some(g), PoolSource::Batch(slot)) = (&out.grad_neg_image, image_source) {
                grads_image.accumulate(g, dataset.image_view(batch_images[slot]));
            }
        }

        // Mean reduction over anchors, then the SGD step.
        let scale = 1.0 / batch_texts.len() as f64;
        grads_image.scale(scale);
        grads_text.scale(scale);
        state.encoder_image.apply_gradients(&grads_image, lr);
        state.encoder_text.apply_gradients(&grads_text, lr);

        // Momentum update, then refresh the banks with momentum features.
        let m = state.momentum.m;
        state.momentum_image.momentum_update_from(&state.encoder_image, m)?;
        state.momentum_text.momentum_update_from(&state.encoder_text, m)?;
        state.bank_image.enqueue_batch(image_k)?;
        state.bank_text.enqueue_batch(text_k)?;

        let snap = state.tracker.snapshot();
        log.steps.push(StepLog {
            epoch,
            step: step_idx as u32,
            loss: total_loss * scale,
            mu_pos: snap.mu_pos,
            sigma_pos: snap.sigma_pos,
            mu_neg: snap.mu_neg,
            sigma_neg: snap.sigma_neg,
            tracker_ready: snap.ready,
            used_fne,
            samples,
        });
    }

    Ok(log)
}
