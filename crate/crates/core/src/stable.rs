//! The globally stable learner `G`: exact stability parameters, the
//! recursive tournament that compares SOA outputs and hallucinates labels at
//! disagreement points, and empirical stability measurement.
//!
//! The tournament at level `t > 0` runs two independent level-`(t-1)`
//! tournaments. If their outputs agree it short-circuits; otherwise it picks
//! the smallest domain point where they disagree, flips a fair coin, and
//! appends the other side's label to one of the two sequences. A hallucinated
//! label can contradict every hypothesis that survived a sequence; that case
//! surfaces as [`StableError::HallucinationConflict`] and is tallied into the
//! failure remainder of a [`StabilityReport`] rather than swallowed.

use num::BigUint;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{
    CoreError, Hypothesis, HypothesisClass, LabeledExample, RandomSource, RealizableDistribution,
    Sample,
};
use crate::littlestone::{soa_run, LittlestoneError, Soa};

/// Largest dimension for which the exact parameter formulas are evaluated;
/// beyond it the bit-length of `n` stops being worth materializing.
pub const MAX_EXACT_D: u32 = 24;

/// `n` values above this are flagged as not executable at desk scale.
pub const DESK_SCALE_LIMIT: u64 = 1_000_000;

/// Two-sided 99% normal quantile, used for Wilson intervals.
pub const Z_99: f64 = 2.5758293035489004;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StableError {
    #[error("epsilon must lie in (0, 1), got {0}")]
    InvalidEpsilon(f64),
    #[error("dimension {0} exceeds the exact-evaluation maximum {MAX_EXACT_D}")]
    DimensionTooLarge(u32),
    #[error("leaf size and consistency prefix must both be at least 1")]
    BadConfig,
    #[error(
        "hallucinated label emptied the version space at level {level} after {prefix_len} entries"
    )]
    HallucinationConflict { level: u32, prefix_len: usize },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Littlestone(#[from] LittlestoneError),
}

/// Exact stability parameters for dimension `d` and accuracy `epsilon`:
///
/// - `n1 = ceil(2^(d+2) / epsilon)` (consistency-prefix size),
/// - `n  = 2^(2^(d+2)+1) * 4^(d+1) * n1` (sample size),
/// - `eta = 2^-(2^d+1) / (d+1)` (guaranteed output frequency).
///
/// `n` and the denominator of `eta` are kept as big integers so the defining
/// identities hold exactly; the `f64` mirror of `eta` underflows for large
/// `d` but the exact form never does.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityParams {
    pub d: u32,
    pub epsilon: f64,
    pub n: BigUint,
    pub n1: u64,
    pub eta: f64,
    /// `eta = 1 / eta_denominator` exactly.
    pub eta_denominator: BigUint,
}

impl StabilityParams {
    /// Whether the faithful sample size fits in a desk-scale run.
    pub fn executable_at_desk_scale(&self) -> bool {
        self.n <= BigUint::from(DESK_SCALE_LIMIT)
    }

    /// Decimal digit count of `n`, for reporting without materializing it.
    pub fn n_digits(&self) -> usize {
        self.n.to_string().len()
    }
}

/// Evaluate the stability parameter formulas exactly.
pub fn lemma1_params(d: u32, epsilon: f64) -> Result<StabilityParams, StableError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(StableError::InvalidEpsilon(epsilon));
    }
    if d > MAX_EXACT_D {
        return Err(StableError::DimensionTooLarge(d));
    }
    let pow = 2f64.powi(d as i32 + 2);
    let n1 = (pow / epsilon).ceil() as u64;
    let big_exp = (1u64 << (d + 2)) + 1;
    let n = (BigUint::from(1u32) << big_exp) * BigUint::from(4u32).pow(d + 1) * BigUint::from(n1);
    let eta_denominator = BigUint::from(d + 1) << ((1u64 << d) + 1);
    let eta_exp = -((1i64 << d) as i32 + 1);
    let eta = 2f64.powi(eta_exp) / f64::from(d + 1);
    Ok(StabilityParams {
        d,
        epsilon,
        n,
        n1,
        eta,
        eta_denominator,
    })
}

/// One entry of an augmented sequence: a labeled example flagged as drawn
/// from the distribution or hallucinated at a disagreement point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedEntry {
    pub example: LabeledExample,
    pub hallucinated: bool,
}

/// Real examples interleaved with hallucinated disagreement labels. The SOA
/// makes a mistake on every hallucinated entry by construction.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedSequence {
    pub entries: Vec<AugmentedEntry>,
}

impl AugmentedSequence {
    pub fn forced_mistakes(&self) -> usize {
        self.entries.iter().filter(|e| e.hallucinated).count()
    }

    /// The plain sample, flags stripped.
    pub fn sample(&self) -> Sample {
        self.entries.iter().map(|e| e.example).collect()
    }

    /// Only the entries drawn from the distribution.
    pub fn real_sample(&self) -> Sample {
        self.entries
            .iter()
            .filter(|e| !e.hallucinated)
            .map(|e| e.example)
            .collect()
    }
}

/// Desk-scale knobs for the tournament, kept separate from the faithful
/// [`StabilityParams`] values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TournamentConfig {
    /// Examples drawn at each level-0 leaf.
    pub leaf_size: usize,
    /// Consistency-prefix length appended after the tournament.
    pub n1: usize,
    /// The level is drawn uniformly from `{0, ..., max_level}`.
    pub max_level: u32,
}

impl TournamentConfig {
    pub fn validate(&self) -> Result<(), StableError> {
        if self.leaf_size == 0 || self.n1 == 0 {
            return Err(StableError::BadConfig);
        }
        Ok(())
    }
}

/// Result of one tournament: the (possibly augmented) sequence, the SOA
/// output over it, and whether the root level short-circuited on agreement.
#[derive(Debug, Clone)]
pub struct TournamentOutcome {
    pub sequence: AugmentedSequence,
    pub output: Hypothesis,
    pub agreed: bool,
}

/// Run a level-`t` tournament.
///
/// Level 0 draws `leaf_size` fresh examples and returns the SOA output.
/// Level `t > 0` runs two independent level-`(t-1)` tournaments; on
/// disagreement the smallest differing point gets the other output's label,
/// the branch is chosen by a fair coin, and the SOA is rerun on the
/// augmented sequence.
pub fn tournament(
    soa: &Soa,
    t: u32,
    class: &HypothesisClass,
    dist: &RealizableDistribution,
    leaf_size: usize,
    source: &RandomSource,
) -> Result<TournamentOutcome, StableError> {
    if t == 0 {
        let sample = dist.draw(leaf_size, &source.derive(0))?;
        let (output, _) = soa_run(soa, class, &sample)?;
        let entries = sample
            .iter()
            .map(|&example| AugmentedEntry {
                example,
                hallucinated: false,
            })
            .collect();
        return Ok(TournamentOutcome {
            sequence: AugmentedSequence { entries },
            output,
            agreed: false,
        });
    }
    let left = tournament(soa, t - 1, class, dist, leaf_size, &source.derive(1))?;
    let right = tournament(soa, t - 1, class, dist, leaf_size, &source.derive(2))?;
    if left.output == right.output {
        return Ok(TournamentOutcome {
            agreed: true,
            ..left
        });
    }
    let x = class
        .domain()
        .find(|&x| left.output.eval(x) != right.output.eval(x))
        .expect("unequal outputs must differ somewhere");
    let (base, label) = if source.derive(0).coin() {
        (&left, right.output.eval(x))
    } else {
        (&right, left.output.eval(x))
    };
    let mut entries = base.sequence.entries.clone();
    entries.push(AugmentedEntry {
        example: LabeledExample { x, y: label },
        hallucinated: true,
    });
    let sequence = AugmentedSequence { entries };
    let output = match soa_run(soa, class, &sequence.sample()) {
        Ok((output, _)) => output,
        Err(LittlestoneError::NonRealizable { prefix_len }) => {
            return Err(StableError::HallucinationConflict {
                level: t,
                prefix_len,
            })
        }
        Err(e) => return Err(e.into()),
    };
    Ok(TournamentOutcome {
        sequence,
        output,
        agreed: false,
    })
}

/// One run of the globally stable learner: the output function plus the
/// level, tournament sequence, and consistency prefix that produced it.
#[derive(Debug, Clone)]
pub struct GsRun {
    pub output: Hypothesis,
    pub level: u32,
    pub sequence: AugmentedSequence,
    pub prefix: Sample,
}

/// The globally stable learner `G`: draw a level uniformly, run the
/// tournament, then rerun the SOA on the tournament sequence followed by a
/// fresh consistency prefix of `n1` examples. The output has empirical
/// error 0 on that prefix.
pub fn globally_stable_learn(
    soa: &Soa,
    class: &HypothesisClass,
    dist: &RealizableDistribution,
    cfg: &TournamentConfig,
    source: &RandomSource,
) -> Result<GsRun, StableError> {
    cfg.validate()?;
    let level = source.derive(0).below(u64::from(cfg.max_level) + 1) as u32;
    let outcome = tournament(soa, level, class, dist, cfg.leaf_size, &source.derive(1))?;
    let prefix = dist.draw(cfg.n1, &source.derive(2))?;
    let mut full = outcome.sequence.sample();
    full.extend_from(&prefix);
    let output = match soa_run(soa, class, &full) {
        Ok((output, _)) => output,
        Err(LittlestoneError::NonRealizable { prefix_len }) => {
            return Err(StableError::HallucinationConflict { level, prefix_len })
        }
        Err(e) => return Err(e.into()),
    };
    debug_assert_eq!(output.empirical_error(&prefix).ok(), Some(0.0));
    Ok(GsRun {
        output,
        level,
        sequence: outcome.sequence,
        prefix,
    })
}

/// One row of a stability report: a hypothesis (by canonical function key
/// and bit string) with its observed count and frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityEntry {
    pub id: u64,
    pub labels: String,
    pub count: usize,
    pub freq: f64,
}

/// Empirical output frequencies of a learner over independent trials.
///
/// Frequencies sum to at most 1; the remainder is trials that returned an
/// error (hallucination conflicts). `eta_hat` is the heaviest frequency and
/// carries a 99% Wilson interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub trials: usize,
    pub failed_trials: usize,
    pub entries: Vec<StabilityEntry>,
    pub heaviest: Option<StabilityEntry>,
    pub eta_hat: f64,
    pub wilson_lower_99: f64,
    pub wilson_radius_99: f64,
}

/// Wilson score lower bound for a binomial proportion.
pub fn wilson_lower_bound(successes: usize, trials: usize, z: f64) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let center = p + z2 / (2.0 * n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half) / (1.0 + z2 / n)).max(0.0)
}

/// Run `trials` independent trials of a learner and tabulate output
/// frequencies. Trials run in parallel; each derives its own randomness
/// from `(source, trial index)`, so the report is independent of the
/// parallelism degree.
pub fn empirical_stability<F, E>(
    learner: F,
    trials: usize,
    source: &RandomSource,
) -> StabilityReport
where
    F: Fn(RandomSource) -> Result<Hypothesis, E> + Sync,
    E: Send,
{
    let outcomes: Vec<Result<Hypothesis, E>> = (0..trials)
        .into_par_iter()
        .map(|i| learner(source.derive(i as u64)))
        .collect();
    tabulate(outcomes, trials)
}

fn tabulate<E>(outcomes: Vec<Result<Hypothesis, E>>, trials: usize) -> StabilityReport {
    use std::collections::BTreeMap;
    let mut counts: BTreeMap<u64, (String, usize)> = BTreeMap::new();
    let mut failed = 0usize;
    for outcome in outcomes {
        match outcome {
            Ok(h) => {
                let key = h
                    .function_key()
                    .expect("stability tabulation requires domain size <= 63");
                counts
                    .entry(key)
                    .or_insert_with(|| (h.labels.to_string(), 0))
                    .1 += 1;
            }
            Err(_) => failed += 1,
        }
    }
    let entries: Vec<StabilityEntry> = counts
        .into_iter()
        .map(|(id, (labels, count))| StabilityEntry {
            id,
            labels,
            count,
            freq: count as f64 / trials as f64,
        })
        .collect();
    let heaviest = entries
        .iter()
        .max_by(|a, b| a.count.cmp(&b.count).then(b.id.cmp(&a.id)))
        .cloned();
    let (eta_hat, wilson_lower) = match &heaviest {
        Some(e) => (e.freq, wilson_lower_bound(e.count, trials, Z_99)),
        None => (0.0, 0.0),
    };
    StabilityReport {
        trials,
        failed_trials: failed,
        entries,
        eta_hat,
        wilson_lower_99: wilson_lower,
        wilson_radius_99: eta_hat - wilson_lower,
        heaviest,
    }
}

/// Tabulate pre-computed outcomes (for callers that already ran the trials).
pub fn stability_report_from_outcomes<E>(outcomes: Vec<Result<Hypothesis, E>>) -> StabilityReport {
    let trials = outcomes.len();
    tabulate(outcomes, trials)
}
