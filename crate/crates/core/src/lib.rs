//! Sparsity-aware collapsed Gibbs sampling for Latent Dirichlet Allocation.
//!
//! The crate is organised around the training pipeline:
//!
//! - [`corpus`]: UCI bag-of-words ingestion, token-balanced chunking, the on-disk chunk store.
//! - [`model`]: the sparse document-topic rows, the dense topic-word counts and their rebuilds.
//! - [`ptree`]: F-ary partial-sum trees used to turn a multinomial draw into a search.
//! - [`sampler`]: the direct sampler and the decomposed sparse/dense sampler.
//! - [`engine`]: worker scheduling, deferred rebuilds and replica reduce/broadcast.
//! - [`eval`]: log-likelihood, throughput and the roofline calculator.

// `!(x > 0.0)` is the NaN-rejecting guard used throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod engine;
pub mod error;
pub mod eval;
pub mod model;
pub mod ptree;
pub mod real;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
