//! The frequency-boosting wrapper: run a stable learner `k` times, count
//! output frequencies under extensional identity, and emit the plurality
//! function if its count reaches `ceil(eta * k / 2)`, otherwise Failure.
//!
//! Failure is a first-class outcome, never an error: a run of the wrapper
//! that produces no sufficiently frequent function is a legitimate result
//! with its own probability mass.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{Hypothesis, RandomSource};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoostError {
    #[error("boost configuration requires eta * k / 2 >= 2 (eta {eta}, k {k})")]
    ThresholdTooSmall { eta: f64, k: usize },
    #[error("eta must lie in (0, 1], got {0}")]
    InvalidEta(f64),
    #[error("delta must lie in (0, 1), got {0}")]
    InvalidDelta(f64),
    #[error("frequency table needs at least one output")]
    EmptyOutputs,
    #[error("stable learner failed on run {run}: {message}")]
    LearnerFailed { run: usize, message: String },
}

/// Occurrence counts of the `k` outputs, keyed by canonical function key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub k: usize,
    pub counts: BTreeMap<u64, usize>,
}

impl FrequencyTable {
    pub fn max_count(&self) -> usize {
        self.counts.values().copied().max().unwrap_or(0)
    }

    /// The key with the maximal count; ties break toward the smallest key.
    pub fn plurality_key(&self) -> Option<u64> {
        let max = self.max_count();
        self.counts
            .iter()
            .find(|&(_, &c)| c == max)
            .map(|(&key, _)| key)
    }
}

/// Exact multiset counts of a list of output functions.
pub fn frequency_table(outputs: &[Hypothesis]) -> Result<FrequencyTable, BoostError> {
    if outputs.is_empty() {
        return Err(BoostError::EmptyOutputs);
    }
    let mut counts = BTreeMap::new();
    for h in outputs {
        let key = h
            .function_key()
            .expect("frequency counting requires domain size <= 63");
        *counts.entry(key).or_insert(0) += 1;
    }
    Ok(FrequencyTable {
        k: outputs.len(),
        counts,
    })
}

/// Configuration of one boosted run: `k` inner runs, the stability
/// frequency `eta` the threshold is computed from, and the per-run sample
/// size `n` (bookkeeping: the inner learner draws its own examples).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub k: usize,
    pub eta: f64,
    pub n: u64,
}

impl BoostConfig {
    pub fn validate(&self) -> Result<(), BoostError> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(BoostError::InvalidEta(self.eta));
        }
        if self.eta * self.k as f64 / 2.0 < 2.0 {
            return Err(BoostError::ThresholdTooSmall {
                eta: self.eta,
                k: self.k,
            });
        }
        Ok(())
    }

    /// The count a function must reach: `ceil(eta * k / 2)`.
    pub fn threshold(&self) -> usize {
        (self.eta * self.k as f64 / 2.0).ceil() as usize
    }
}

/// The boosted output: either the plurality function or Failure, together
/// with the frequency table and the threshold that decided it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostOutcome {
    pub outcome: BoostResult,
    pub table: FrequencyTable,
    pub threshold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoostResult {
    Function { g_maj: Hypothesis },
    Failure,
}

impl BoostOutcome {
    pub fn is_failure(&self) -> bool {
        matches!(self.outcome, BoostResult::Failure)
    }

    pub fn function(&self) -> Option<&Hypothesis> {
        match &self.outcome {
            BoostResult::Function { g_maj } => Some(g_maj),
            BoostResult::Failure => None,
        }
    }

    /// The wire form: `{"outcome": ..., "g_maj_id": ..., "counts": ..., "threshold": ...}`.
    pub fn to_json(&self) -> serde_json::Value {
        let g_maj_id = self
            .function()
            .map(|h| h.function_key().expect("domain size <= 63"));
        serde_json::json!({
            "outcome": if self.is_failure() { "failure" } else { "function" },
            "g_maj_id": g_maj_id,
            "counts": self.table.counts.iter().map(|(k, v)| (k.to_string(), *v)).collect::<BTreeMap<_, _>>(),
            "threshold": self.threshold,
        })
    }
}

/// Run the stable learner `k` times on independent randomness and boost by
/// plurality. Ties among maximal counts break toward the smallest canonical
/// key. Inner runs execute in parallel on derived streams, so the outcome
/// is independent of scheduling.
pub fn run_boost<G, E>(
    learner: G,
    cfg: &BoostConfig,
    source: &RandomSource,
) -> Result<BoostOutcome, BoostError>
where
    G: Fn(RandomSource) -> Result<Hypothesis, E> + Sync,
    E: std::fmt::Display + Send,
{
    cfg.validate()?;
    let outputs: Vec<(usize, Result<Hypothesis, E>)> = (0..cfg.k)
        .into_par_iter()
        .map(|i| (i, learner(source.derive(i as u64))))
        .collect();
    let mut functions = Vec::with_capacity(cfg.k);
    for (run, outcome) in outputs {
        match outcome {
            Ok(h) => functions.push(h),
            Err(e) => {
                return Err(BoostError::LearnerFailed {
                    run,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(boost_outputs(&functions, cfg.threshold()))
}

/// The counting-and-threshold step on its own, for callers that already
/// hold the `k` outputs.
pub fn boost_outputs(outputs: &[Hypothesis], threshold: usize) -> BoostOutcome {
    let table = frequency_table(outputs).expect("boost requires at least one output");
    let outcome = match table.plurality_key() {
        Some(key) if table.counts[&key] >= threshold => {
            let g_maj = outputs
                .iter()
                .find(|h| h.function_key().unwrap() == key)
                .expect("plurality key came from outputs")
                .clone();
            BoostResult::Function { g_maj }
        }
        _ => BoostResult::Failure,
    };
    BoostOutcome {
        outcome,
        table,
        threshold,
    }
}

/// The run count `k = ceil(max(4 ln(1/delta) / eta, 10 / eta))`.
pub fn k_choice(delta: f64, eta: f64) -> Result<usize, BoostError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(BoostError::InvalidDelta(delta));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(BoostError::InvalidEta(eta));
    }
    let k = (4.0 * (1.0 / delta).ln() / eta).max(10.0 / eta).ceil();
    Ok(k as usize)
}
