//! Toy bi-encoder and the triplet loss with hand-derived gradients.
//!
//! The encoders are single linear layers, the smallest model that separates
//! the synthetic clusters while keeping analytic gradients tractable. The
//! loss is the two-direction triplet hinge over cosine similarities; the
//! gradient of `s(a, b)` with respect to `a` is
//! `b / (|a||b|) - s * a / |a|^2`.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::embedding::{cosine_similarity, dot, Embedding};
use crate::error::{Error, Result};
use crate::memory::momentum_update;

/// A dense affine map `y = W x + b` with row-major weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEncoder {
    d_in: usize,
    d_out: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl LinearEncoder {
    pub fn new_random<R: Rng + ?Sized>(d_in: usize, d_out: usize, rng: &mut R) -> Self {
        let scale = 1.0 / libm::sqrt(d_in as f64);
        let weight = (0..d_in * d_out)
            .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * scale)
            .collect();
        let bias = alloc::vec![0.0; d_out];
        LinearEncoder { d_in, d_out, weight, bias }
    }

    pub fn from_parts(d_in: usize, d_out: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weight.len() != d_in * d_out {
            return Err(Error::DimensionMismatch {
                expected: d_in * d_out,
                found: weight.len(),
            });
        }
        if bias.len() != d_out {
            return Err(Error::DimensionMismatch { expected: d_out, found: bias.len() });
        }
        if weight.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "encoder parameters", index: 0 });
        }
        Ok(LinearEncoder { d_in, d_out, weight, bias })
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn encode(&self, input: &[f64]) -> Result<Embedding> {
        if input.len() != self.d_in {
            return Err(Error::DimensionMismatch { expected: self.d_in, found: input.len() });
        }
        let mut out = Vec::with_capacity(self.d_out);
        for r in 0..self.d_out {
            let row = &self.weight[r * self.d_in..(r + 1) * self.d_in];
            out.push(dot(row, input) + self.bias[r]);
        }
        Embedding::new(out)
    }

    /// Pull the key encoder toward this query encoder: `k <- m k + (1-m) q`.
    pub fn momentum_update_from(&mut self, query: &LinearEncoder, m: f64) -> Result<()> {
        if self.d_in != query.d_in || self.d_out != query.d_out {
            return Err(Error::DimensionMismatch {
                expected: self.d_in * self.d_out,
                found: query.d_in * query.d_out,
            });
        }
        momentum_update(&mut self.weight, &query.weight, m)?;
        momentum_update(&mut self.bias, &query.bias, m)
    }

    pub fn apply_gradients(&mut self, grads: &EncoderGrads, learning_rate: f64) {
        for (w, g) in self.weight.iter_mut().zip(&grads.weight) {
            *w -= learning_rate * g;
        }
        for (b, g) in self.bias.iter_mut().zip(&grads.bias) {
            *b -= learning_rate * g;
        }
    }
}

/// Accumulated parameter gradients for one encoder.
#[derive(Debug, Clone)]
pub struct EncoderGrads {
    d_in: usize,
    d_out: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl EncoderGrads {
    pub fn zeros(encoder: &LinearEncoder) -> Self {
        EncoderGrads {
            d_in: encoder.d_in,
            d_out: encoder.d_out,
            weight: alloc::vec![0.0; encoder.weight.len()],
            bias: alloc::vec![0.0; encoder.bias.len()],
        }
    }

    /// Chain an output-space gradient through the affine map for one input.
    pub fn accumulate(&mut self, grad_output: &[f64], input: &[f64]) {
        debug_assert_eq!(grad_output.len(), self.d_out);
        debug_assert_eq!(input.len(), self.d_in);
        for (r, g) in grad_output.iter().enumerate() {
            if *g == 0.0 {
                continue;
            }
            let row = &mut self.weight[r * self.d_in..(r + 1) * self.d_in];
            for (w, x) in row.iter_mut().zip(input) {
                *w += g * x;
            }
            self.bias[r] += g;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weight {
            *w *= factor;
        }
        for b in &mut self.bias {
            *b *= factor;
        }
    }
}

/// Training-loop hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: u32,
    pub batch_size: usize,
    pub seed: u64,
    /// Epoch indices at which the learning rate is multiplied by the decay
    /// factor.
    pub lr_decay_epochs: Vec<u32>,
    pub lr_decay_factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            margin: 0.2,
            learning_rate: 0.5,
            epochs: 20,
            batch_size: 32,
            seed: 0,
            lr_decay_epochs: alloc::vec![12, 17],
            lr_decay_factor: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        fn check(ok: bool, msg: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidConfig(String::from(msg)))
            }
        }
        check(
            self.margin > 0.0 && self.margin < 2.0,
            "margin must be in (0, 2): cosine similarities cannot satisfy more",
        )?;
        check(
            self.learning_rate >= 0.0 && self.learning_rate.is_finite(),
            "learning_rate must be nonnegative",
        )?;
        check(self.batch_size > 0, "batch_size must be positive")?;
        check(
            self.lr_decay_factor > 0.0 && self.lr_decay_factor < 1.0,
            "lr_decay_factor must be in (0, 1)",
        )
    }

    /// Learning rate in effect at the given epoch.
    pub fn learning_rate_at(&self, epoch: u32) -> f64 {
        let decays = self.lr_decay_epochs.iter().filter(|e| **e <= epoch).count();
        self.learning_rate * libm::pow(self.lr_decay_factor, decays as f64)
    }
}

/// Loss value and the gradients with respect to each query-encoder output.
/// Negative-side gradients are absent exactly when their hinge is inactive.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub grad_anchor_image: Vec<f64>,
    pub grad_positive_text: Vec<f64>,
    pub grad_neg_text: Option<Vec<f64>>,
    pub grad_neg_image: Option<Vec<f64>>,
}

/// Two-direction triplet hinge over similarities:
/// `[margin - s_pos + s_neg_text]_+ + [margin - s_pos + s_neg_image]_+`.
pub fn triplet_loss_fne(s_pos: f64, s_neg_text: f64, s_neg_image: f64, margin: f64) -> f64 {
    let h1 = margin - s_pos + s_neg_text;
    let h2 = margin - s_pos + s_neg_image;
    h1.max(0.0) + h2.max(0.0)
}

fn cosine_grad(a: &Embedding, b: &Embedding, s: f64) -> Vec<f64> {
    let na = a.norm();
    let nb = b.norm();
    let inv = 1.0 / (na * nb);
    let self_term = s / (na * na);
    a.values()
        .iter()
        .zip(b.values())
        .map(|(ai, bi)| bi * inv - self_term * ai)
        .collect()
}

fn axpy(target: &mut [f64], factor: f64, source: &[f64]) {
    for (t, s) in target.iter_mut().zip(source) {
        *t += factor * s;
    }
}

/// Loss and exact gradients of the two-hinge triplet with respect to each
/// embedding. A hinge exactly at zero slack is treated as inactive.
pub fn loss_backward(
    anchor_image: &Embedding,
    positive_text: &Embedding,
    neg_text: &Embedding,
    neg_image: &Embedding,
    margin: f64,
) -> Result<LossOutput> {
    let s_pos = cosine_similarity(anchor_image, positive_text)?;
    let s_neg_text = cosine_similarity(anchor_image, neg_text)?;
    let s_neg_image = cosine_similarity(neg_image, positive_text)?;

    let h1 = margin - s_pos + s_neg_text;
    let h2 = margin - s_pos + s_neg_image;
    let active1 = h1 > 0.0;
    let active2 = h2 > 0.0;
    let loss = h1.max(0.0) + h2.max(0.0);

    let dim = anchor_image.dim();
    let mut grad_anchor = alloc::vec![0.0; dim];
    let mut grad_positive = alloc::vec![0.0; dim];

    // d s_pos / d v and d s_pos / d w appear in both hinges with weight -1.
    let ds_pos_dv = cosine_grad(anchor_image, positive_text, s_pos);
    let ds_pos_dw = cosine_grad(positive_text, anchor_image, s_pos);

    let grad_neg_text = if active1 {
        axpy(&mut grad_anchor, -1.0, &ds_pos_dv);
        axpy(&mut grad_positive, -1.0, &ds_pos_dw);
        let ds_nt_dv = cosine_grad(anchor_image, neg_text, s_neg_text);
        axpy(&mut grad_anchor, 1.0, &ds_nt_dv);
        Some(cosine_grad(neg_text, anchor_image, s_neg_text))
    } else {
        None
    };

    let grad_neg_image = if active2 {
        axpy(&mut grad_anchor, -1.0, &ds_pos_dv);
        axpy(&mut grad_positive, -1.0, &ds_pos_dw);
        let ds_ni_dw = cosine_grad(positive_text, neg_image, s_neg_image);
        axpy(&mut grad_positive, 1.0, &ds_ni_dw);
        Some(cosine_grad(neg_image, positive_text, s_neg_image))
    } else {
        None
    };

    Ok(LossOutput {
        loss,
        grad_anchor_image: grad_anchor,
        grad_positive_text: grad_positive,
        grad_neg_text,
        grad_neg_image,
    })
}
