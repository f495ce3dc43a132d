//! Structure-aware edge classification on bipartite textual interaction networks.
//!
//! A textual interaction network (TIN) is a bipartite graph of users and items
//! where every edge carries a short text and a class label. This crate trains a
//! small transformer over per-edge token blocks, augmented with:
//!
//! - implicit line-graph transition operators applied in O(|E|·d) (never
//!   materialized) for message passing between edges sharing a user or item,
//! - spectral structural embeddings (resistance-distance and spanning-centrality
//!   preserving) computed with a seeded randomized SVD,
//! - weighted neighborhood samplers for mini-batch training,
//! - a self-contained reverse-mode autodiff tape in f64,
//! - dense brute-force oracles used by the test suite and the `verify` command.
//!
//! Everything is deterministic under a fixed seed: RNG is ChaCha8 throughout,
//! numeric loops are single-threaded, and no iteration order depends on hashing.

pub mod checkpoint;
pub mod embed;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod mat;
pub mod mp;
pub mod oracle;
pub mod pipeline;
pub mod sampling;
pub mod svd;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
