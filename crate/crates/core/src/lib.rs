//! Decision layer for sentence-level human value detection.
//!
//! Everything here operates on prediction-score files from an arbitrary
//! upstream classifier: deriving the higher-order and Presence label spaces,
//! tuning per-label thresholds, hard hierarchical gating, voting ensembles
//! with bootstrap-gated forward selection, and paired significance tests.

pub mod calibration;
pub mod dataset;
pub mod ensembling;
pub mod error;
pub mod gating;
pub mod label_space;
pub mod llm_adapter;
pub mod matrix;
pub mod metrics;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
pub use label_space::{HoMapping, LabelSpace};
pub use matrix::{AnnotationMatrix, Keyed, LabelMatrix, ScoreMatrix, SentenceId};
