//! Orchestration shared by the CLI commands and the acceptance suite:
//! seeded training runs, retrieval evaluation, and sampling diagnostics.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use fne_core::datagen::PairedDataset;
use fne_core::embedding::{similarity_matrix, Embedding};
use fne_core::eval::{fn_sampling_rate, recall_at_k, RetrievalReport};
use fne_core::memory::MomentumParams;
use fne_core::train::{train_epoch, EpochLog, StepLog, TrainState};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

/// Derive an independent stream seed from the master seed, so adding or
/// reordering one consumer never perturbs the others. FNV-1a over the
/// purpose tag, folded with the master seed.
pub fn derive_seed(master: u64, purpose: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET ^ master.wrapping_mul(PRIME);
    for byte in purpose.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(PRIME);
    }
    hash
}

/// A finished training run.
pub struct TrainOutcome {
    pub state: TrainState,
    pub logs: Vec<EpochLog>,
}

/// Train from scratch per the resolved config. Bit-reproducible.
pub fn run_training(dataset: &PairedDataset, cfg: &RunConfig) -> Result<TrainOutcome> {
    let train = cfg.train_config();
    let fne = cfg.fne_config()?;
    let options = cfg.loop_options();
    let momentum = MomentumParams::new(cfg.train.momentum)?;

    let mut init_rng = ChaCha12Rng::seed_from_u64(derive_seed(cfg.seed, "init"));
    let mut state = TrainState::init(
        dataset.image_dim(),
        dataset.text_dim(),
        cfg.train.embed_dim,
        cfg.train.bank_capacity,
        cfg.train.min_ready_count,
        cfg.train.sigma_floor,
        momentum,
        &mut init_rng,
    )?;

    let mut epoch_rng = ChaCha12Rng::seed_from_u64(derive_seed(cfg.seed, "epochs"));
    let mut logs = Vec::with_capacity(train.epochs as usize);
    for epoch in 0..train.epochs {
        logs.push(train_epoch(
            &mut state, dataset, &train, &fne, &options, epoch, &mut epoch_rng,
        )?);
    }
    Ok(TrainOutcome { state, logs })
}

fn encode_all(
    encoder: &fne_core::model::LinearEncoder,
    views: &[Vec<f64>],
) -> Result<Vec<Embedding>> {
    views.iter().map(|v| encoder.encode(v).map_err(CliError::Core)).collect()
}

/// What counts as a correct retrieval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroundTruth {
    /// Only the annotated pairing counts (the conventional benchmark metric).
    Annotated,
    /// Any candidate sharing the query's semantic label counts. Requires
    /// label annotations; on labeled data this credits retrieving an
    /// unannotated-but-matching candidate instead of penalizing it.
    Semantic,
}

/// Encode everything with the query encoders and score Recall@K in both
/// directions under annotated ground truth.
pub fn evaluate(
    state: &TrainState,
    dataset: &PairedDataset,
    ks: &[usize],
) -> Result<RetrievalReport> {
    evaluate_with(state, dataset, ks, GroundTruth::Annotated)
}

/// Recall@K in both directions under the chosen ground-truth rule.
pub fn evaluate_with(
    state: &TrainState,
    dataset: &PairedDataset,
    ks: &[usize],
    ground_truth: GroundTruth,
) -> Result<RetrievalReport> {
    if state.encoder_image.d_in() != dataset.image_dim()
        || state.encoder_text.d_in() != dataset.text_dim()
    {
        return Err(CliError::Usage(format!(
            "checkpoint expects {}-dim image / {}-dim text views, dataset has {} / {}",
            state.encoder_image.d_in(),
            state.encoder_text.d_in(),
            dataset.image_dim(),
            dataset.text_dim(),
        )));
    }
    let images = encode_all(&state.encoder_image, dataset.image_views())?;
    let texts = encode_all(&state.encoder_text, dataset.text_views())?;

    let (gt_i2t, gt_t2i): (Vec<Vec<usize>>, Vec<Vec<usize>>) = match ground_truth {
        GroundTruth::Annotated => (
            (0..dataset.n_images()).map(|i| dataset.captions_of(i).to_vec()).collect(),
            (0..dataset.n_texts()).map(|t| vec![dataset.pair_of(t)]).collect(),
        ),
        GroundTruth::Semantic => {
            let labels = dataset.clusters().ok_or_else(|| {
                CliError::Usage(String::from(
                    "semantic ground truth requires a dataset with cluster labels",
                ))
            })?;
            (
                labels
                    .image
                    .iter()
                    .map(|l| {
                        (0..dataset.n_texts()).filter(|&t| labels.text[t] == *l).collect()
                    })
                    .collect(),
                labels
                    .text
                    .iter()
                    .map(|l| {
                        (0..dataset.n_images()).filter(|&i| labels.image[i] == *l).collect()
                    })
                    .collect(),
            )
        }
    };

    let i2t = similarity_matrix(&images, &texts)?;
    let image_to_text = recall_at_k(&i2t, &gt_i2t, ks)?;

    let t2i = similarity_matrix(&texts, &images)?;
    let text_to_image = recall_at_k(&t2i, &gt_t2i, ks)?;

    Ok(RetrievalReport { image_to_text, text_to_image })
}

/// False-negative rate of one step's selections; None without labels.
pub fn step_fn_rate(step: &StepLog, dataset: &PairedDataset) -> Option<f64> {
    if !dataset.has_clusters() {
        return None;
    }
    let log: Vec<_> = step.samples.iter().map(|r| (r.anchor, r.negative)).collect();
    fn_sampling_rate(&log, dataset).ok()
}

/// Pooled false-negative sampling rate over all steps where the tracker was
/// ready, i.e. after warm-up. None if no step qualified or labels are
/// missing.
pub fn warmed_fn_rate(logs: &[EpochLog], dataset: &PairedDataset) -> Option<f64> {
    if !dataset.has_clusters() {
        return None;
    }
    let log: Vec<_> = logs
        .iter()
        .flat_map(|e| &e.steps)
        .filter(|s| s.tracker_ready)
        .flat_map(|s| s.samples.iter().map(|r| (r.anchor, r.negative)))
        .collect();
    if log.is_empty() {
        return None;
    }
    fn_sampling_rate(&log, dataset).ok()
}
