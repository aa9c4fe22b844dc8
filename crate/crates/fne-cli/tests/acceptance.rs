//! Acceptance gate: one test per criterion, each printing a pass line.
//!
//! Oracle tests (posterior, gradients, momentum, FIFO, recall) verify the
//! numerics against independent reimplementations. The behavioral tests
//! (criteria 5-9) train on the default synthetic dataset over five pinned
//! seeds and compare sampling modes; they share one cached set of runs, so
//! the whole file stays inside the per-criterion runtime budgets.

use std::collections::{HashMap, VecDeque};
use std::sync::{LazyLock, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use fne_cli::config::RunConfig;
use fne_cli::runner::{evaluate_with, run_training, warmed_fn_rate, GroundTruth};
use fne_core::datagen::generate;
use fne_core::embedding::{similarity_matrix, Embedding};
use fne_core::eval::recall_at_k;
use fne_core::memory::MemoryBank;
use fne_core::model::{loss_backward, LinearEncoder};
use fne_core::sampler::{posterior, sample_negative, CandidatePool, WeightReport};

// ---------------------------------------------------------------------------
// Criterion 1: closed-form posterior vs a discretized-conditioning oracle.
// ---------------------------------------------------------------------------

fn normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Bayes by conditioning on the event S in [s - ds/2, s + ds/2], with each
/// class's probability mass integrated by Simpson's rule. As ds -> 0 this
/// converges to the closed-form density ratio.
fn oracle_posterior(
    s: f64,
    mu_pos: f64,
    sigma_pos: f64,
    mu_neg: f64,
    sigma_neg: f64,
    prior_p: f64,
    ds: f64,
) -> f64 {
    let mass = |mu: f64, sigma: f64| {
        let a = normal_pdf(s - ds / 2.0, mu, sigma);
        let m = normal_pdf(s, mu, sigma);
        let b = normal_pdf(s + ds / 2.0, mu, sigma);
        (ds / 6.0) * (a + 4.0 * m + b)
    };
    let pos = prior_p * mass(mu_pos, sigma_pos);
    let neg = (1.0 - prior_p) * mass(mu_neg, sigma_neg);
    pos / (pos + neg)
}

#[test]
fn criterion_01_posterior_matches_discretized_bayes_oracle() {
    let mut rng = ChaCha12Rng::seed_from_u64(101);
    let ds = 1e-6;
    for config in 0..20 {
        let mu_pos = rng.random_range(0.2..0.8);
        let mu_neg = rng.random_range(-0.4..0.2);
        // Sigmas bounded away from zero so no density underflows on the grid.
        let sigma_pos = rng.random_range(0.1..0.3);
        let sigma_neg = rng.random_range(0.1..0.3);
        let prior_p = 10f64.powf(rng.random_range(-5.0..-0.4));
        for k in 0..1000 {
            let s = -1.0 + 2.0 * k as f64 / 999.0;
            let closed =
                posterior(s, mu_pos, sigma_pos, mu_neg, sigma_neg, prior_p).unwrap();
            let oracle =
                oracle_posterior(s, mu_pos, sigma_pos, mu_neg, sigma_neg, prior_p, ds);
            assert!(
                (closed - oracle).abs() <= 1e-9,
                "config {config}, s={s}: closed {closed} vs oracle {oracle}"
            );
        }
    }
    println!("criterion 01 (posterior vs discretized Bayes oracle): pass");
}

// ---------------------------------------------------------------------------
// Criterion 2: analytic gradients vs central finite differences.
// ---------------------------------------------------------------------------

fn random_embedding(rng: &mut ChaCha12Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() > 0.25 {
            return v;
        }
    }
}

fn loss_value(vecs: &[Vec<f64>; 4], margin: f64) -> f64 {
    let e: Vec<Embedding> =
        vecs.iter().map(|v| Embedding::new(v.clone()).unwrap()).collect();
    loss_backward(&e[0], &e[1], &e[2], &e[3], margin).unwrap().loss
}

#[test]
fn criterion_02_gradients_match_central_finite_differences() {
    let mut rng = ChaCha12Rng::seed_from_u64(202);
    let (dim, margin, h) = (12, 0.2, 1e-6);
    let mut active = 0;
    let mut inactive = 0;
    let mut checked = 0;
    while checked < 100 {
        let vecs: [Vec<f64>; 4] = std::array::from_fn(|_| random_embedding(&mut rng, dim));
        let e: Vec<Embedding> =
            vecs.iter().map(|v| Embedding::new(v.clone()).unwrap()).collect();
        let out = loss_backward(&e[0], &e[1], &e[2], &e[3], margin).unwrap();

        // The hinge is non-differentiable at zero; keep a guard band so the
        // finite-difference stencil never straddles the kink.
        let s_pos = fne_core::embedding::cosine_similarity(&e[0], &e[1]).unwrap();
        let s_nt = fne_core::embedding::cosine_similarity(&e[0], &e[2]).unwrap();
        let s_ni = fne_core::embedding::cosine_similarity(&e[3], &e[1]).unwrap();
        let h1 = margin - s_pos + s_nt;
        let h2 = margin - s_pos + s_ni;
        if h1.abs() < 1e-4 || h2.abs() < 1e-4 {
            continue;
        }
        if h1 > 0.0 || h2 > 0.0 {
            active += 1;
        } else {
            inactive += 1;
        }

        let zero = vec![0.0; dim];
        let grads = [
            &out.grad_anchor_image,
            &out.grad_positive_text,
            out.grad_neg_text.as_ref().unwrap_or(&zero),
            out.grad_neg_image.as_ref().unwrap_or(&zero),
        ];
        for (slot, analytic) in grads.iter().enumerate() {
            let mut fd = vec![0.0; dim];
            for d in 0..dim {
                let mut plus = vecs.clone();
                plus[slot][d] += h;
                let mut minus = vecs.clone();
                minus[slot][d] -= h;
                fd[d] = (loss_value(&plus, margin) - loss_value(&minus, margin))
                    / (2.0 * h);
            }
            let err: f64 = fd
                .iter()
                .zip(analytic.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let scale: f64 =
                analytic.iter().map(|g| g * g).sum::<f64>().sqrt().max(1.0);
            assert!(
                err <= 1e-6 * scale,
                "triplet {checked}, input {slot}: |fd - analytic| = {err}"
            );
        }
        checked += 1;
    }
    assert!(active > 0 && inactive > 0, "suite must cover both hinge states");
    println!("criterion 02 (gradients vs central finite differences): pass");
}

// ---------------------------------------------------------------------------
// Criterion 3: geometric decay of the momentum encoder toward the query.
// ---------------------------------------------------------------------------

fn distance(a: &LinearEncoder, b: &LinearEncoder) -> f64 {
    let sq: f64 = a
        .weight()
        .iter()
        .chain(a.bias())
        .zip(b.weight().iter().chain(b.bias()))
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    sq.sqrt()
}

#[test]
fn criterion_03_momentum_distance_decays_geometrically() {
    let mut rng = ChaCha12Rng::seed_from_u64(303);
    let (d_in, d_out) = (16, 8);
    // A zero-parameter query target makes every update an exact per-element
    // rescaling by m, so the identity is testable at full float precision
    // even at m^100 scales.
    let query = LinearEncoder::from_parts(
        d_in,
        d_out,
        vec![0.0; d_in * d_out],
        vec![0.0; d_out],
    )
    .unwrap();
    for m in [0.0, 0.5, 0.995] {
        for n in [1u32, 10, 100] {
            let initial = LinearEncoder::new_random(d_in, d_out, &mut rng);
            let d0 = distance(&initial, &query);
            let mut key = initial.clone();
            for _ in 0..n {
                key.momentum_update_from(&query, m).unwrap();
            }
            let got = distance(&key, &query);
            let expect = m.powi(n as i32) * d0;
            assert!(
                (got - expect).abs() <= 1e-6 * expect.max(f64::MIN_POSITIVE),
                "m={m}, n={n}: got {got}, expected {expect}"
            );
        }
    }
    println!("criterion 03 (momentum geometric decay identity): pass");
}

// ---------------------------------------------------------------------------
// Criterion 4: FIFO eviction vs a replay oracle, and categorical sampling
// frequencies within 3 sigma.
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_fifo_replay_oracle_and_sampling_frequencies() {
    let mut rng = ChaCha12Rng::seed_from_u64(404);
    let mut interleavings = 0u32;
    while interleavings < 10_000 {
        let capacity = rng.random_range(1..=32);
        let mut bank = MemoryBank::new(capacity).unwrap();
        let mut oracle: VecDeque<(u64, Vec<f64>)> = VecDeque::new();
        let mut next_id = 0u64;
        for _ in 0..rng.random_range(1..=40) {
            if rng.random::<f64>() < 0.05 {
                bank.clear();
                oracle.clear();
            } else {
                let size = rng.random_range(0..=capacity);
                let mut batch = Vec::with_capacity(size);
                for _ in 0..size {
                    let values = vec![next_id as f64, rng.random::<f64>()];
                    batch.push((next_id, Embedding::new(values.clone()).unwrap()));
                    oracle.push_back((next_id, values));
                    next_id += 1;
                }
                bank.enqueue_batch(batch).unwrap();
                while oracle.len() > capacity {
                    oracle.pop_front();
                }
            }
            assert_eq!(bank.len(), oracle.len());
            assert!(bank.len() <= capacity);
            for (got, want) in bank.iter().zip(&oracle) {
                assert_eq!(got.0, want.0, "eviction order diverged from replay");
                assert_eq!(got.1.values(), want.1.as_slice());
            }
            interleavings += 1;
        }
    }

    // Weighted draws: empirical frequencies within 3 sigma of the multinomial.
    let pool =
        CandidatePool::new(vec![0, 1, 2], vec![0.1, 0.2, 0.3], 0.5).unwrap();
    let weights = [0.2, 0.3, 0.5];
    let report = WeightReport {
        posterior: vec![0.0; 3],
        weight: weights.to_vec(),
        cut_down_mask: vec![false; 3],
    };
    let n = 100_000;
    let mut counts = [0u64; 3];
    let mut rng = ChaCha12Rng::seed_from_u64(405);
    for _ in 0..n {
        counts[sample_negative(&report, &pool, &mut rng).unwrap().index] += 1;
    }
    for (count, expect) in counts.iter().zip(weights) {
        let freq = *count as f64 / n as f64;
        let sigma = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!(
            (freq - expect).abs() <= 3.0 * sigma,
            "frequency {freq} vs expected {expect}"
        );
    }
    println!("criterion 04 (FIFO replay oracle + sampling frequencies): pass");
}

// ---------------------------------------------------------------------------
// Shared training fixture for criteria 5-9.
//
// The comparison setup: default synthetic data (duplicate_rate 0.2), constant
// learning rate, momentum 0.9, cut-down sharpness alpha 10 (rescaled to the
// narrow similarity gaps of these low-dimensional embeddings), semantic
// ground truth so that retrieving an unannotated true match counts as a hit
// rather than a miss. Five pinned seeds; training is bit-reproducible.
// ---------------------------------------------------------------------------

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn acceptance_config(mode: &str, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.seed = seed;
    cfg.train.mode = mode.to_string();
    cfg.train.momentum = 0.9;
    cfg.train.lr_decay_epochs = vec![];
    cfg.fne.alpha = 10.0;
    cfg
}

struct Run {
    r1: f64,
    fn_rate: Option<f64>,
}

fn execute(cfg: &RunConfig) -> Run {
    let data = generate(&cfg.synthetic_spec()).unwrap();
    let outcome = run_training(&data, cfg).unwrap();
    let report =
        evaluate_with(&outcome.state, &data, &[1], GroundTruth::Semantic).unwrap();
    Run {
        r1: report.mean_recall(1).unwrap(),
        fn_rate: warmed_fn_rate(&outcome.logs, &data),
    }
}

static MODE_RUNS: LazyLock<HashMap<&'static str, Vec<Run>>> = LazyLock::new(|| {
    ["fne", "hardest"]
        .into_iter()
        .map(|mode| {
            (
                mode,
                SEEDS.iter().map(|&s| execute(&acceptance_config(mode, s))).collect(),
            )
        })
        .collect()
});

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// Five-seed mean Recall@1 for an fne run with one knob changed; cached so
/// the sweep criteria share their common center cell.
fn fne_mean_r1(adjust: impl Fn(&mut RunConfig), key: (u64, usize, usize)) -> f64 {
    static CACHE: LazyLock<Mutex<HashMap<(u64, usize, usize), f64>>> =
        LazyLock::new(|| Mutex::new(HashMap::new()));
    if let Some(r) = CACHE.lock().unwrap().get(&key) {
        return *r;
    }
    let base_key = (1e-4f64.to_bits(), 32, 8192);
    let r = if key == base_key {
        mean(MODE_RUNS["fne"].iter().map(|r| r.r1))
    } else {
        mean(SEEDS.iter().map(|&s| {
            let mut cfg = acceptance_config("fne", s);
            adjust(&mut cfg);
            execute(&cfg).r1
        }))
    };
    CACHE.lock().unwrap().insert(key, r);
    r
}

#[test]
fn criterion_05_fne_halves_false_negative_sampling_rate() {
    let rate = |mode: &str| {
        mean(MODE_RUNS[mode].iter().map(|r| {
            r.fn_rate.expect("labeled data and a warmed tracker are guaranteed")
        }))
    };
    let (fne, hardest) = (rate("fne"), rate("hardest"));
    assert!(
        fne <= 0.5 * hardest,
        "fn sampling rate {fne:.4} (fne) vs {hardest:.4} (hardest)"
    );
    println!(
        "criterion 05 (false-negative suppression, {fne:.4} <= 0.5 * {hardest:.4}): pass"
    );
}

#[test]
fn criterion_06_fne_beats_hardest_on_recall() {
    let fne = mean(MODE_RUNS["fne"].iter().map(|r| r.r1));
    let hardest = mean(MODE_RUNS["hardest"].iter().map(|r| r.r1));
    // duplicate_rate is 0.2 here, so the strict form of the criterion applies.
    assert!(
        fne > hardest,
        "mean Recall@1 {fne:.4} (fne) vs {hardest:.4} (hardest)"
    );
    println!(
        "criterion 06 (retrieval benefit, R@1 {fne:.4} > {hardest:.4}): pass"
    );
}

#[test]
fn criterion_07_recall_insensitive_to_prior() {
    let r1s: Vec<f64> = [1e-3f64, 1e-4, 1e-5]
        .into_iter()
        .map(|p| fne_mean_r1(|cfg| cfg.fne.prior_p = p, (p.to_bits(), 32, 8192)))
        .collect();
    let span = r1s.iter().cloned().fold(f64::MIN, f64::max)
        - r1s.iter().cloned().fold(f64::MAX, f64::min);
    assert!(span < 0.03, "prior sweep spans {span:.4}: {r1s:?}");
    println!("criterion 07 (prior insensitivity, span {span:.4} < 0.03): pass");
}

#[test]
fn criterion_08_recall_insensitive_to_batch_size() {
    let r1s: Vec<f64> = [8usize, 16, 32]
        .into_iter()
        .map(|b| {
            fne_mean_r1(|cfg| cfg.train.batch_size = b, (1e-4f64.to_bits(), b, 8192))
        })
        .collect();
    let span = r1s.iter().cloned().fold(f64::MIN, f64::max)
        - r1s.iter().cloned().fold(f64::MAX, f64::min);
    assert!(span < 0.03, "batch-size sweep spans {span:.4}: {r1s:?}");
    println!("criterion 08 (batch-size insensitivity, span {span:.4} < 0.03): pass");
}

#[test]
fn criterion_09_recall_nondecreasing_in_bank_capacity() {
    let r1s: Vec<f64> = [512usize, 2048, 8192]
        .into_iter()
        .map(|c| {
            fne_mean_r1(|cfg| cfg.train.bank_capacity = c, (1e-4f64.to_bits(), 32, c))
        })
        .collect();
    for pair in r1s.windows(2) {
        assert!(
            pair[1] >= pair[0] - 0.01,
            "capacity trend decreased beyond noise: {r1s:?}"
        );
    }
    println!("criterion 09 (memory-length trend {r1s:?}): pass");
}

// ---------------------------------------------------------------------------
// Criterion 10: recall vs an exhaustive sort oracle.
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_recall_matches_brute_force_oracle() {
    let mut rng = ChaCha12Rng::seed_from_u64(1010);
    for fixture in 0..50 {
        let queries = rng.random_range(1..=100);
        let gallery = rng.random_range(1..=100);
        let dim = rng.random_range(2..=8);
        let embed = |rng: &mut ChaCha12Rng, n: usize| -> Vec<Embedding> {
            (0..n).map(|_| Embedding::new(random_embedding(rng, dim)).unwrap()).collect()
        };
        let q = embed(&mut rng, queries);
        let g = embed(&mut rng, gallery);
        let matrix = similarity_matrix(&q, &g).unwrap();
        let truth: Vec<Vec<usize>> = (0..queries)
            .map(|_| {
                let n = rng.random_range(1..=3.min(gallery));
                (0..n).map(|_| rng.random_range(0..gallery)).collect()
            })
            .collect();
        let ks: Vec<usize> = vec![1, rng.random_range(1..=gallery), gallery];

        let report = recall_at_k(&matrix, &truth, &ks).unwrap();

        // Oracle: full stable sort per query, descending similarity with ties
        // broken by candidate index, then count hits per K.
        for (pos, &k) in ks.iter().enumerate() {
            let mut hits = 0usize;
            for (query, truth) in truth.iter().enumerate() {
                let mut order: Vec<usize> = (0..gallery).collect();
                order.sort_by(|&a, &b| {
                    matrix
                        .get(query, b)
                        .partial_cmp(&matrix.get(query, a))
                        .unwrap()
                        .then(a.cmp(&b))
                });
                if order[..k].iter().any(|c| truth.contains(c)) {
                    hits += 1;
                }
            }
            let oracle = hits as f64 / queries as f64;
            assert_eq!(
                report.recall_at[pos],
                (k, oracle),
                "fixture {fixture} ({queries}x{gallery})"
            );
        }
    }
    println!("criterion 10 (recall vs brute-force sort oracle): pass");
}
