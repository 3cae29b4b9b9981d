//! Evaluation engine for brain-tumor segmentation robustness to a missing
//! T2-FLAIR sequence.
//!
//! The crate covers NIfTI-1 I/O ([`volume_io`]), the BraTS label/region
//! algebra ([`label_space`]), FLAIR zero-fill and targeted dropout
//! ([`scenario`]), per-patient metrics ([`metrics`]), cohort statistics
//! ([`stats`]) and the report/command layer ([`report`], [`cli`]).

pub mod cli;
pub mod label_space;
pub mod metrics;
pub mod par;
pub mod quantile;
pub mod report;
pub mod rng;
pub mod scenario;
pub mod stats;
pub mod volume_io;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
