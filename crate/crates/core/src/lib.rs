//! Scenario graphs and self-supervised graph-level embeddings.
//!
//! The crate covers the full pipeline:
//!
//! 1. [`scenario`] — raw scenario records, JSONL ingestion, synthetic data.
//! 2. [`graph`] — heterogeneous spatio-temporal graph construction.
//! 3. [`augment`] — stochastic graph augmentations (two-view sampling).
//! 4. [`nn`] / [`encoder`] — reverse-mode autodiff and the edge-feature
//!    SAGE encoder producing 128-d graph embeddings.
//! 5. [`train`] — bootstrapped and contrastive self-supervised training.
//! 6. [`eval`] — embedding validity, downstream classification, density
//!    clustering, metrics and exact nearest-neighbor search.
//! 7. [`store`] / [`config`] / [`pipeline`] — persistence and orchestration.

pub mod augment;
pub mod config;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod graph;
pub mod nn;
pub mod pipeline;
pub mod scenario;
pub mod store;
pub mod train;

pub use error::{Error, Result};
