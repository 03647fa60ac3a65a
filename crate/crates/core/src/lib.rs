//! Conformal uncertainty evaluation for six-option multiple-choice QA.
//!
//! The pipeline joins unified items with per-option logits, splits each
//! dataset into calibration and test halves, fits split-conformal thresholds
//! for the LAC and APS scores, and reports coverage, accuracy, set size,
//! uncertainty-aware accuracy, calibration error and E/F rates.

pub mod cli;
pub mod conformal;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod jsonl;
pub mod metrics;
pub mod report;
pub mod scoring;
pub mod synthetic;

pub use error::{Error, Result};
