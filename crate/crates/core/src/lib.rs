//! Evaluation engine for weakly-supervised object localization.
//!
//! Score maps are scored against ground truth without committing to a
//! single operating threshold: box metrics sweep thresholds and report the
//! best accuracy, the mask metric integrates the pixel precision-recall
//! curve. Alongside the metrics the crate ships the calibration and
//! thresholding primitives they rely on, a center-gaussian baseline, the
//! random hyperparameter search protocol and a checker for the
//! threshold/posterior-ratio equivalence in the multiple-instance view.

pub mod baselines;
pub mod box_metrics;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod hparam;
pub mod lemma;
pub mod mask_metrics;
pub mod pipeline;
pub mod scoremap;

pub use error::{Error, Result};
