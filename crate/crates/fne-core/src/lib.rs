//! Core algorithms for training bi-encoder retrieval models with a
//! false-negative-aware negative sampling strategy.
//!
//! The crate is organized around the training pipeline:
//!
//! - [`embedding`] — dense vector primitives (pooling, cosine similarity,
//!   batched similarity matrices),
//! - [`stats`] — streaming Gaussian models of matched / mismatched pair
//!   similarities,
//! - [`sampler`] — the Bayesian false-negative posterior, sampling weights
//!   with an easy-negative cut-down, and the categorical negative draw,
//! - [`memory`] — fixed-capacity FIFO feature banks and momentum parameter
//!   updates,
//! - [`model`] — toy linear bi-encoder, triplet loss, and hand-derived
//!   gradients,
//! - [`train`] — the SGD training loop wiring all of the above together,
//! - [`datagen`] — synthetic paired data with ground-truth semantic clusters,
//! - [`eval`] — Recall@K and false-negative sampling diagnostics.
//!
//! Everything here is pure computation over in-memory data; file formats and
//! the command-line frontend live in the companion `fne-cli` crate. The crate
//! is `no_std` (with `alloc`) so the algorithms can be reused in embedded or
//! wasm contexts.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod datagen;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod memory;
pub mod model;
pub mod sampler;
pub mod stats;
pub mod train;

pub use error::{Error, Result};
