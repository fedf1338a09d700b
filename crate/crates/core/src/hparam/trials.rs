use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::space::{Distribution, HparamSpace, Method, ParamValue};
use crate::error::{Error, Result};

/// Training runs whose final loss exceeds this value are non-convergent.
pub const MAX_CONVERGED_LOSS: f64 = 2.0;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
fn splitmix64_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `trial_id`: the `(trial_id + 1)`-th output of a SplitMix64
/// generator started at `master`, i.e.
/// `mix(master + (trial_id + 1) * 0x9E3779B97F4A7C15)`.
///
/// Each trial then draws from `ChaCha8Rng::seed_from_u64(trial_seed)`, so any
/// single trial can be regenerated without replaying the others.
pub fn trial_seed(master: u64, trial_id: u64) -> u64 {
    splitmix64_mix(master.wrapping_add(trial_id.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub trial_id: u64,
    pub method: Method,
    pub values: BTreeMap<String, ParamValue>,
    pub seed: u64,
}

impl TrialConfig {
    pub fn get(&self, name: &str) -> Option<ParamValue> {
        self.values.get(name).copied()
    }
}

fn sample_one(space: &HparamSpace, trial_id: u64, seed: u64) -> TrialConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = BTreeMap::new();
    for dim in space.dimensions() {
        let value = match &dim.distribution {
            Distribution::LogUniform { lo, hi } => {
                let (a, b) = (lo.ln(), hi.ln());
                ParamValue::Real((a + (b - a) * rng.random::<f64>()).exp().clamp(*lo, *hi))
            }
            Distribution::Uniform { lo, hi } => {
                ParamValue::Real((lo + (hi - lo) * rng.random::<f64>()).clamp(*lo, *hi))
            }
            Distribution::Categorical(options) => ParamValue::Int(options[rng.random_range(0..options.len())]),
            Distribution::DependentUniform { lower, hi } => {
                let lo = values
                    .get(*lower)
                    .map(|v: &ParamValue| v.as_f64())
                    .expect("dependencies are declared before their dependents");
                ParamValue::Real((lo + (hi - lo) * rng.random::<f64>()).clamp(lo, *hi))
            }
            Distribution::ReciprocalUniform { scale, offset } => {
                // 1 - U[0, 1) lies in (0, 1].
                let u = scale * (1.0 - rng.random::<f64>());
                ParamValue::Real(1.0 / u - offset)
            }
        };
        values.insert(dim.name.to_string(), value);
    }
    TrialConfig {
        trial_id,
        method: space.method(),
        values,
        seed,
    }
}

/// `n` trials with ids `0..n`, reproducible from `(space, n, master_seed)`.
pub fn sample_trials(space: &HparamSpace, n: usize, master_seed: u64) -> Result<Vec<TrialConfig>> {
    if n == 0 {
        return Err(Error::InvalidArgument("number of trials must be at least 1".into()));
    }
    Ok((0..n as u64)
        .map(|id| sample_one(space, id, trial_seed(master_seed, id)))
        .collect())
}

/// One JSON object per line.
pub fn write_trials<W: Write>(trials: &[TrialConfig], mut out: W) -> std::io::Result<()> {
    for t in trials {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trials<R: BufRead>(input: R, path: &Path) -> Result<Vec<TrialConfig>> {
    let mut trials = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        trials.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(trials)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialResult {
    trial_id: u64,
    final_loss: f64,
    metric_value: f64,
    converged: bool,
}

impl TrialResult {
    /// A NaN or infinite loss is accepted and marks a diverged run.
    pub fn new(trial_id: u64, final_loss: f64, metric_value: f64) -> Result<Self> {
        if final_loss < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "trial {trial_id}: negative final loss {final_loss}"
            )));
        }
        if !metric_value.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "trial {trial_id}: metric value {metric_value} is not finite"
            )));
        }
        Ok(Self {
            trial_id,
            final_loss,
            metric_value,
            converged: final_loss <= MAX_CONVERGED_LOSS,
        })
    }

    pub fn trial_id(&self) -> u64 {
        self.trial_id
    }

    pub fn final_loss(&self) -> f64 {
        self.final_loss
    }

    pub fn metric_value(&self) -> f64 {
        self.metric_value
    }

    pub fn converged(&self) -> bool {
        self.converged
    }
}

#[derive(Deserialize)]
struct ResultRow {
    trial_id: u64,
    final_loss: f64,
    metric_value: f64,
}

/// Reads `trial_id,final_loss,metric_value` rows.
pub fn read_results(path: &Path) -> Result<Vec<TrialResult>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["trial_id", "final_loss", "metric_value"] {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "expected header 'trial_id,final_loss,metric_value'".into(),
        });
    }
    let mut seen = std::collections::HashSet::new();
    let mut results = Vec::new();
    for row in reader.deserialize::<ResultRow>() {
        let row = row.map_err(|e| csv_error(path, e))?;
        if !seen.insert(row.trial_id) {
            return Err(Error::InvalidArgument(format!(
                "{}: duplicate trial_id {}",
                path.display(),
                row.trial_id
            )));
        }
        results.push(TrialResult::new(row.trial_id, row.final_loss, row.metric_value)?);
    }
    Ok(results)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Converged trials and the fraction of trials that failed to converge.
pub fn filter_converged(results: &[TrialResult]) -> Result<(Vec<TrialResult>, f64)> {
    if results.is_empty() {
        return Err(Error::EmptyInput("trial results"));
    }
    let converged: Vec<TrialResult> = results.iter().filter(|r| r.converged).copied().collect();
    let failures = results.len() - converged.len();
    Ok((converged, failures as f64 / results.len() as f64))
}

/// Best converged trial; ties go to the smallest trial id.
pub fn select_best(results: &[TrialResult], higher_is_better: bool) -> Result<TrialResult> {
    results
        .iter()
        .filter(|r| r.converged)
        .copied()
        .reduce(|best, r| {
            let better = if higher_is_better {
                r.metric_value > best.metric_value
            } else {
                r.metric_value < best.metric_value
            };
            let tie = r.metric_value == best.metric_value && r.trial_id < best.trial_id;
            if better || tie {
                r
            } else {
                best
            }
        })
        .ok_or(Error::EmptyInput("converged trials"))
}
