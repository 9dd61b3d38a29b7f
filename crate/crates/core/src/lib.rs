//! Exponential-model multiple testing for segmented lifetime data.
//!
//! Per-segment likelihood-ratio tests, model-based bias-corrected estimates
//! of the proportion of true nulls (π₀), adaptive Benjamini–Hochberg
//! control, a Monte Carlo harness for comparing the estimators, and an
//! analysis pipeline for segmented failure data.

pub mod adaptive_bh;
pub mod analysis;
pub mod dist;
pub mod error;
pub mod estimators;
pub mod io;
pub mod lrt;
pub mod quadrature;
pub mod rng;
pub mod simulation;

pub use error::{Error, Result};
