//! Random hyperparameter search protocol: per-method search spaces, seeded
//! trial sampling, the non-convergence filter, best-trial selection and
//! ranking-transfer analysis.
//!
//! Training is external. This module emits trial configurations and consumes
//! `trial_id,final_loss,metric_value` result files.

mod kendall;
mod space;
mod trials;

pub use kendall::kendall_tau;
pub use space::{Dimension, Distribution, HparamSpace, Method, ParamValue, LEARNING_RATE, SCOREMAP_RESOLUTION};
pub use trials::{
    filter_converged, read_results, read_trials, sample_trials, select_best, trial_seed, write_trials, TrialConfig,
    TrialResult, MAX_CONVERGED_LOSS,
};

/// Number of trials per method used by the protocol.
pub const DEFAULT_TRIALS: usize = 30;

use crate::error::{Error, Result};

/// Kendall tau between the metric rankings of two result sets over the same
/// trial ids (e.g. the hyperparameter-search split against the test split).
///
/// With `converged_only`, trials that failed to converge in either set are
/// dropped first.
pub fn rank_transfer(a: &[TrialResult], b: &[TrialResult], converged_only: bool) -> Result<(f64, usize)> {
    let mut a: Vec<&TrialResult> = a.iter().collect();
    let mut b: Vec<&TrialResult> = b.iter().collect();
    a.sort_by_key(|r| r.trial_id());
    b.sort_by_key(|r| r.trial_id());
    let ids_a: Vec<u64> = a.iter().map(|r| r.trial_id()).collect();
    let ids_b: Vec<u64> = b.iter().map(|r| r.trial_id()).collect();
    if ids_a != ids_b {
        return Err(Error::InvalidArgument(
            "result files must cover the same trial ids".into(),
        ));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = a
        .iter()
        .zip(&b)
        .filter(|(ra, rb)| !converged_only || (ra.converged() && rb.converged()))
        .map(|(ra, rb)| (ra.metric_value(), rb.metric_value()))
        .unzip();
    Ok((kendall_tau(&xs, &ys)?, xs.len()))
}
