//! A desk-scale laboratory for unified multi-modal tracking.
//!
//! The crate has three legs:
//!
//! - **Evaluation** ([`metrics`], [`dataset`]): short-term (PR/NPR/SR) and
//!   long-term (Pr/Re/F-score) tracking metrics over annotation and result
//!   files, with benchmark-level aggregation and validation.
//! - **Benchmark assembly** ([`assembler`]): rank sequences by
//!   reference-tracker difficulty and keep the hardest fixed-size slice per
//!   task, emitting a unified manifest.
//! - **Continual-unification experiments** ([`model`], [`taskgen`],
//!   [`train`], [`analysis`]): a small dual-branch regressor over synthetic
//!   multi-modal tasks, trained separately, parallel-mixed, serially without
//!   replay, or serially with replay, plus the analysis harness that
//!   measures degradation, forgetting, capacity effects, and
//!   modality-distance effects.
//!
//! Everything is deterministic given its configuration and seeds; see
//! [`rng`] for the substream scheme.

pub mod analysis;
pub mod assembler;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod taskgen;
pub mod train;

pub use error::{Error, Result};
