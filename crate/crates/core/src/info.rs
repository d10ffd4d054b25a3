//! Output-entropy and mutual-information measurement, plus every closed-form
//! bound attached to the boosted stable learner.
//!
//! Mutual information between the training data and the output is certified
//! through the entropy of the output distribution: exact joint enumeration
//! for instances under the guard, plug-in Monte Carlo estimation (with
//! Miller–Madow bias reporting) above it. The bound evaluators implement the
//! closed forms exactly as printed; where a printed claim is wrong (the
//! `eta/2 + log2(1 - eta/2)` margin is negative, so the `h1` term grows with
//! `k`), the report exposes the sign instead of silently correcting it.

use std::collections::BTreeMap;

use num::rational::{BigRational, Ratio};
use num::{BigInt, FromPrimitive, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boost::k_choice;
use crate::core::{
    CoreError, DomainPoint, HypothesisClass, LabeledExample, RandomSource, RealizableDistribution,
    Sample,
};
use crate::littlestone::{soa_run, LittlestoneError, Soa};
use crate::stable::{lemma1_params, StabilityReport, StableError};

/// Atom budget for exact joint enumeration.
pub const ENUMERATION_GUARD: u64 = 10_000_000;

/// `1/(e ln 2)`: the largest value `-p log2 p` can take.
pub fn h_failure_max() -> f64 {
    (std::f64::consts::E * std::f64::consts::LN_2).recip()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InfoError {
    #[error("exact enumeration needs {atoms} atoms, over the guard {limit}")]
    EnumerationGuard { atoms: u64, limit: u64 },
    #[error("bound requires eta * k / 2 >= 2 (eta {eta}, k {k})")]
    EtaKPrecondition { eta: f64, k: usize },
    #[error("eta must lie in (0, 1], got {0}")]
    InvalidEta(f64),
    #[error("Monte Carlo estimation needs at least {min} trials, got {trials}")]
    NotEnoughTrials { trials: usize, min: usize },
    #[error("distribution probabilities sum to {sum}, outside tolerance {tol}")]
    NotNormalized { sum: f64, tol: f64 },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Littlestone(#[from] LittlestoneError),
    #[error(transparent)]
    Stable(#[from] StableError),
}

/// An outcome of the boosted algorithm: a function (by canonical key) or
/// Failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "key", rename_all = "snake_case")]
pub enum OutputAtom {
    Function(u64),
    Failure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Exact,
    MonteCarlo { trials: usize },
}

/// A distribution over outcomes, from exact enumeration or Monte Carlo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDistribution {
    pub support: Vec<(OutputAtom, f64)>,
    pub provenance: Provenance,
}

impl OutputDistribution {
    pub fn total_mass(&self) -> f64 {
        self.support.iter().map(|&(_, p)| p).sum()
    }

    pub fn prob(&self, atom: OutputAtom) -> f64 {
        self.support
            .iter()
            .find(|&&(a, _)| a == atom)
            .map_or(0.0, |&(_, p)| p)
    }

    pub fn entropy_bits(&self) -> f64 {
        entropy_bits(self.support.iter().map(|&(_, p)| p))
    }

    pub fn validate(&self, tol: f64) -> Result<(), InfoError> {
        let sum = self.total_mass();
        if (sum - 1.0).abs() > tol {
            return Err(InfoError::NotNormalized { sum, tol });
        }
        Ok(())
    }

    /// View a stability report as a single-run output distribution; failed
    /// trials contribute their mass to the Failure atom.
    pub fn from_stability(report: &StabilityReport) -> Self {
        let mut support: Vec<(OutputAtom, f64)> = report
            .entries
            .iter()
            .map(|e| (OutputAtom::Function(e.id), e.freq))
            .collect();
        if report.failed_trials > 0 {
            support.push((
                OutputAtom::Failure,
                report.failed_trials as f64 / report.trials as f64,
            ));
        }
        OutputDistribution {
            support,
            provenance: Provenance::MonteCarlo {
                trials: report.trials,
            },
        }
    }

    /// Total variation distance to another distribution over the same atoms.
    pub fn total_variation(&self, other: &OutputDistribution) -> f64 {
        let mut atoms: Vec<OutputAtom> = self.support.iter().map(|&(a, _)| a).collect();
        atoms.extend(other.support.iter().map(|&(a, _)| a));
        atoms.sort_unstable();
        atoms.dedup();
        atoms
            .iter()
            .map(|&a| (self.prob(a) - other.prob(a)).abs())
            .sum::<f64>()
            / 2.0
    }
}

fn entropy_bits(probs: impl Iterator<Item = f64>) -> f64 {
    probs
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.log2())
        .sum::<f64>()
        .max(0.0)
}

/// Plug-in entropy of outcome counts, in bits, with `0 log 0 = 0`.
pub fn plugin_entropy(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    entropy_bits(counts.iter().map(|&c| c as f64 / total as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiMethod {
    Exact,
    PlugIn,
}

/// An entropy / mutual-information figure with its estimation metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    pub value_bits: f64,
    pub method: MiMethod,
    pub trials: Option<usize>,
    /// Miller–Madow bias correction `(support - 1) / (2 T ln 2)`; reported,
    /// never folded into `value_bits`.
    pub bias_correction_bits: f64,
    /// Delta-method standard error of the plug-in entropy; 0 for exact.
    pub std_error_bits: f64,
    pub note: String,
}

/// A learner whose exact per-sample output distribution (over its internal
/// coins) is computable.
pub trait StochasticLearner {
    fn conditional(&self, sample: &Sample) -> Result<Vec<(u64, f64)>, InfoError>;
}

/// The SOA applied to the whole sample: a deterministic learner.
pub struct SoaOnSample<'a> {
    pub soa: &'a Soa,
    pub class: &'a HypothesisClass,
}

impl StochasticLearner for SoaOnSample<'_> {
    fn conditional(&self, sample: &Sample) -> Result<Vec<(u64, f64)>, InfoError> {
        let (output, _) = soa_run(self.soa, self.class, sample)?;
        Ok(vec![(output.function_key()?, 1.0)])
    }
}

/// An algorithm over `k` samples whose conditional output distribution given
/// the data is exactly computable.
pub trait DiscreteAlgorithm {
    fn conditional(&self, samples: &[Sample]) -> Result<Vec<(OutputAtom, f64)>, InfoError>;
}

/// The boosting wrapper over an exactly-enumerable learner: convolves the
/// per-sample conditionals and applies the count threshold, ties toward the
/// smallest canonical key. The threshold is taken raw so that diagnostic
/// instances below the `eta k / 2 >= 2` regime stay enumerable.
pub struct ExactBoost<'a, L> {
    pub learner: &'a L,
    pub threshold: usize,
}

impl<L: StochasticLearner> DiscreteAlgorithm for ExactBoost<'_, L> {
    fn conditional(&self, samples: &[Sample]) -> Result<Vec<(OutputAtom, f64)>, InfoError> {
        let per_sample: Vec<Vec<(u64, f64)>> = samples
            .iter()
            .map(|s| self.learner.conditional(s))
            .collect::<Result<_, _>>()?;
        let mut acc: BTreeMap<OutputAtom, f64> = BTreeMap::new();
        let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
        convolve_outputs(&per_sample, 0, 1.0, &mut counts, &mut acc, self.threshold);
        Ok(acc.into_iter().collect())
    }
}

fn convolve_outputs(
    per_sample: &[Vec<(u64, f64)>],
    depth: usize,
    weight: f64,
    counts: &mut BTreeMap<u64, usize>,
    acc: &mut BTreeMap<OutputAtom, f64>,
    threshold: usize,
) {
    if depth == per_sample.len() {
        let best = counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&key, &count)| (key, count));
        let atom = match best {
            Some((key, count)) if count >= threshold => OutputAtom::Function(key),
            _ => OutputAtom::Failure,
        };
        *acc.entry(atom).or_insert(0.0) += weight;
        return;
    }
    for &(key, p) in &per_sample[depth] {
        if p == 0.0 {
            continue;
        }
        *counts.entry(key).or_insert(0) += 1;
        convolve_outputs(per_sample, depth + 1, weight * p, counts, acc, threshold);
        let c = counts.get_mut(&key).unwrap();
        *c -= 1;
        if *c == 0 {
            counts.remove(&key);
        }
    }
}

struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    fn new() -> Self {
        Kahan {
            sum: 0.0,
            carry: 0.0,
        }
    }

    fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}

struct JointEnumeration {
    marginal: Vec<(OutputAtom, f64)>,
    expected_conditional_entropy: f64,
    atoms: u64,
}

/// Enumerate every data tuple `S^k` in `(X^n)^k`, weighted by the product
/// pmf, and push it through the algorithm's exact conditional. When the
/// distribution carries rational weights the marginal accumulates in exact
/// rational arithmetic (every f64 coin probability is itself a rational).
fn enumerate_joint<A: DiscreteAlgorithm>(
    algorithm: &A,
    dist: &RealizableDistribution,
    n: usize,
    k: usize,
) -> Result<JointEnumeration, InfoError> {
    if n == 0 || k == 0 {
        return Err(InfoError::Core(CoreError::ZeroDraws));
    }
    let m = dist.domain_size() as u64;
    let draws = n * k;
    let atoms = m
        .checked_pow(draws as u32)
        .filter(|&a| a <= ENUMERATION_GUARD)
        .ok_or(InfoError::EnumerationGuard {
            atoms: u64::MAX,
            limit: ENUMERATION_GUARD,
        })?;

    let rational = dist.rational_pmf();
    let mut marginal_f: BTreeMap<OutputAtom, Kahan> = BTreeMap::new();
    let mut marginal_q: BTreeMap<OutputAtom, BigRational> = BTreeMap::new();
    let mut cond_entropy = Kahan::new();

    let mut indices = vec![0usize; draws];
    let mut samples: Vec<Sample> = Vec::with_capacity(k);
    for _ in 0..atoms {
        let weight_q: Option<BigRational> = rational.map(|pmf| {
            indices
                .iter()
                .map(|&i| ratio_to_big(pmf[i]))
                .fold(BigRational::from_integer(1.into()), |a, b| a * b)
        });
        let weight: f64 = match &weight_q {
            Some(q) => q.to_f64().unwrap_or(0.0),
            None => indices.iter().map(|&i| dist.pmf()[i]).product(),
        };
        if weight > 0.0 || weight_q.as_ref().is_some_and(|q| !q.is_zero()) {
            samples.clear();
            for chunk in indices.chunks(n) {
                samples.push(
                    chunk
                        .iter()
                        .map(|&i| LabeledExample {
                            x: DomainPoint(i),
                            y: dist.label(DomainPoint(i)),
                        })
                        .collect(),
                );
            }
            let conditional = algorithm.conditional(&samples)?;
            cond_entropy.add(weight * entropy_bits(conditional.iter().map(|&(_, p)| p)));
            for &(atom, p) in &conditional {
                if p == 0.0 {
                    continue;
                }
                match &weight_q {
                    Some(q) => {
                        let term = q * BigRational::from_float(p).expect("finite prob");
                        marginal_q
                            .entry(atom)
                            .and_modify(|acc| *acc += &term)
                            .or_insert(term);
                    }
                    None => marginal_f
                        .entry(atom)
                        .or_insert_with(Kahan::new)
                        .add(weight * p),
                }
            }
        }
        // odometer over X^(n k)
        for slot in indices.iter_mut().rev() {
            *slot += 1;
            if *slot < m as usize {
                break;
            }
            *slot = 0;
        }
    }

    let marginal: Vec<(OutputAtom, f64)> = if rational.is_some() {
        marginal_q
            .into_iter()
            .map(|(a, q)| (a, q.to_f64().unwrap_or(0.0)))
            .collect()
    } else {
        marginal_f.into_iter().map(|(a, k)| (a, k.sum)).collect()
    };
    Ok(JointEnumeration {
        marginal,
        expected_conditional_entropy: cond_entropy.sum,
        atoms,
    })
}

fn ratio_to_big(r: Ratio<u64>) -> BigRational {
    BigRational::new(
        BigInt::from_u64(*r.numer()).unwrap(),
        BigInt::from_u64(*r.denom()).unwrap(),
    )
}

/// Exact output distribution of the boosted algorithm by joint enumeration
/// over all data tuples and all internal coin outcomes.
pub fn exact_output_distribution<A: DiscreteAlgorithm>(
    algorithm: &A,
    dist: &RealizableDistribution,
    n: usize,
    k: usize,
) -> Result<OutputDistribution, InfoError> {
    let joint = enumerate_joint(algorithm, dist, n, k)?;
    let out = OutputDistribution {
        support: joint.marginal,
        provenance: Provenance::Exact,
    };
    out.validate(1e-9)?;
    Ok(out)
}

/// Exact mutual information between the data tuple and the output:
/// `H(marginal) - E_S[H(conditional | S)]`.
pub fn exact_mutual_information<A: DiscreteAlgorithm>(
    algorithm: &A,
    dist: &RealizableDistribution,
    n: usize,
    k: usize,
) -> Result<MiEstimate, InfoError> {
    let joint = enumerate_joint(algorithm, dist, n, k)?;
    let marginal_entropy = entropy_bits(joint.marginal.iter().map(|&(_, p)| p));
    let value = (marginal_entropy - joint.expected_conditional_entropy).max(0.0);
    Ok(MiEstimate {
        value_bits: value,
        method: MiMethod::Exact,
        trials: None,
        bias_correction_bits: 0.0,
        std_error_bits: 0.0,
        note: format!("exact enumeration over {} data atoms", joint.atoms),
    })
}

/// Sample one run of the boosted algorithm: draw the `k` samples and then
/// an outcome from the exact conditional. The Monte Carlo counterpart of
/// [`exact_output_distribution`] for cross-checks.
pub fn sample_boosted<A: DiscreteAlgorithm>(
    algorithm: &A,
    dist: &RealizableDistribution,
    n: usize,
    k: usize,
    source: &RandomSource,
) -> Result<OutputAtom, InfoError> {
    use rand::Rng;
    let mut rng = source.rng();
    let samples: Vec<Sample> = (0..k)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let x = dist.draw_point(&mut rng);
                    LabeledExample {
                        x,
                        y: dist.label(x),
                    }
                })
                .collect()
        })
        .collect();
    let conditional = algorithm.conditional(&samples)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(atom, p) in &conditional {
        acc += p;
        if u < acc {
            return Ok(atom);
        }
    }
    Ok(conditional.last().expect("nonempty conditional").0)
}

const MC_MIN_TRIALS: usize = 100;

/// Plug-in entropy of the outcome distribution of `run` over `trials`
/// independent trials, with Miller–Madow bias correction and delta-method
/// standard error reported alongside.
pub fn estimate_entropy_mc<F>(
    run: F,
    trials: usize,
    source: &RandomSource,
) -> Result<MiEstimate, InfoError>
where
    F: Fn(RandomSource) -> OutputAtom + Sync,
{
    if trials < MC_MIN_TRIALS {
        return Err(InfoError::NotEnoughTrials {
            trials,
            min: MC_MIN_TRIALS,
        });
    }
    let outcomes: Vec<OutputAtom> = (0..trials)
        .into_par_iter()
        .map(|i| run(source.derive(i as u64)))
        .collect();
    let mut counts: BTreeMap<OutputAtom, u64> = BTreeMap::new();
    for atom in outcomes {
        *counts.entry(atom).or_insert(0) += 1;
    }
    Ok(entropy_estimate_from_counts(
        &counts.values().copied().collect::<Vec<_>>(),
        trials,
    ))
}

/// The estimate itself, from raw outcome counts.
pub fn entropy_estimate_from_counts(counts: &[u64], trials: usize) -> MiEstimate {
    let t = trials as f64;
    let h = plugin_entropy(counts);
    let support = counts.iter().filter(|&&c| c > 0).count();
    let bias = (support.saturating_sub(1)) as f64 / (2.0 * t * std::f64::consts::LN_2);
    // delta-method variance of the plug-in entropy
    let variance: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / t;
            p * p.log2().powi(2)
        })
        .sum::<f64>()
        - h * h;
    let std_error = (variance.max(0.0) / t).sqrt();
    MiEstimate {
        value_bits: h,
        method: MiMethod::PlugIn,
        trials: Some(trials),
        bias_correction_bits: bias,
        std_error_bits: std_error,
        note: format!(
            "plug-in over {trials} trials, support {support}; Miller-Madow correction reported separately"
        ),
    }
}

/// The output-entropy bound for the boosted wrapper at run count `k` and
/// stability frequency `eta`, split into its three addends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Bound {
    pub k: usize,
    pub eta: f64,
    /// `2^(3 + log2 k - eta k / 2 - k log2(1 - eta/2))`
    pub h1_term: f64,
    /// `log2(4 / eta)`
    pub h2_term: f64,
    /// `3 / (e ln 2)`
    pub h_failure_cap: f64,
    /// `r = 2^(1 - eta k / 2)`
    pub r: f64,
    pub total: f64,
    /// `eta/2 + log2(1 - eta/2)`: negative throughout `(0, 1]`, so the
    /// `h1` term grows with `k`; exposed rather than corrected.
    pub eta_k_margin: f64,
}

/// Evaluate the output-entropy bound. Requires `eta k / 2 >= 2` so that
/// `r <= 1/2`.
pub fn bound_theorem1(k: usize, eta: f64) -> Result<Theorem1Bound, InfoError> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(InfoError::InvalidEta(eta));
    }
    if eta * k as f64 / 2.0 < 2.0 {
        return Err(InfoError::EtaKPrecondition { eta, k });
    }
    let kf = k as f64;
    let exponent = 3.0 + kf.log2() - eta * kf / 2.0 - kf * (1.0 - eta / 2.0).log2();
    let h1_term = exponent.exp2();
    let h2_term = (4.0 / eta).log2();
    let h_failure_cap = 3.0 * h_failure_max();
    Ok(Theorem1Bound {
        k,
        eta,
        h1_term,
        h2_term,
        h_failure_cap,
        r: (1.0 - eta * kf / 2.0).exp2(),
        total: h1_term + h2_term + h_failure_cap,
        eta_k_margin: eta / 2.0 + (1.0 - eta / 2.0).log2(),
    })
}

/// Information-complexity bound in the Littlestone dimension:
/// `2^d + log2(d+1) + 3 + 3/(e ln 2)`.
pub fn bound_theorem2(d: u32) -> f64 {
    2f64.powi(d as i32) + f64::from(d + 1).log2() + 3.0 + 3.0 * h_failure_max()
}

/// The sharper bound available to affine-subspace indicator classes:
/// `log2(d+1) + 2 + 3/(e ln 2)`.
pub fn proposition_affine_bound(d: u32) -> f64 {
    f64::from(d + 1).log2() + 2.0 + 3.0 * h_failure_max()
}

/// The failure-probability and loss bounds at `(k, eta, n1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureLemmaBounds {
    /// `exp(-k eta^2 / 2)`
    pub failure_bound: f64,
    /// `log2(1/eta) / n1`
    pub lemma2_bound: f64,
    /// `log2(4/eta) / n1`
    pub lemma3_loss: f64,
    /// `1/(e ln 2)`
    pub h_failure_max: f64,
}

pub fn failure_and_lemma_bounds(
    k: usize,
    eta: f64,
    n1: u64,
) -> Result<FailureLemmaBounds, InfoError> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(InfoError::InvalidEta(eta));
    }
    let n1f = n1 as f64;
    Ok(FailureLemmaBounds {
        failure_bound: (-(k as f64) * eta * eta / 2.0).exp(),
        lemma2_bound: (1.0 / eta).log2() / n1f,
        lemma3_loss: (4.0 / eta).log2() / n1f,
        h_failure_max: h_failure_max(),
    })
}

/// Every evaluated bound for one parameter point, with the inputs that
/// produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub d: u32,
    pub epsilon: f64,
    pub delta: f64,
    pub eta: f64,
    pub n1: u64,
    pub k: usize,
    /// Faithful sample size when it fits in a u64; its digit count always.
    pub n: Option<u64>,
    pub n_digits: usize,
    pub desk_scale_executable: bool,
    pub h_failure_cap: f64,
    pub h1_term: f64,
    pub h2_term: f64,
    pub r: f64,
    pub eta_k_margin: f64,
    pub theorem1_rhs: f64,
    pub theorem2_rhs: f64,
    pub proposition_rhs: f64,
    pub failure_bound: f64,
    pub lemma2_bound: f64,
    pub lemma3_loss: f64,
    pub h_failure_max: f64,
}

impl BoundReport {
    /// Assemble the full report from `(d, epsilon, delta)` using the faithful
    /// parameter formulas and run count.
    pub fn assemble(d: u32, epsilon: f64, delta: f64) -> Result<BoundReport, InfoError> {
        let params = lemma1_params(d, epsilon)?;
        let k = k_choice(delta, params.eta).map_err(|_| InfoError::InvalidEta(params.eta))?;
        let t1 = bound_theorem1(k, params.eta)?;
        let fl = failure_and_lemma_bounds(k, params.eta, params.n1)?;
        Ok(BoundReport {
            d,
            epsilon,
            delta,
            eta: params.eta,
            n1: params.n1,
            k,
            n: params.n.to_u64(),
            n_digits: params.n_digits(),
            desk_scale_executable: params.executable_at_desk_scale(),
            h_failure_cap: t1.h_failure_cap,
            h1_term: t1.h1_term,
            h2_term: t1.h2_term,
            r: t1.r,
            eta_k_margin: t1.eta_k_margin,
            theorem1_rhs: t1.total,
            theorem2_rhs: bound_theorem2(d),
            proposition_rhs: proposition_affine_bound(d),
            failure_bound: fl.failure_bound,
            lemma2_bound: fl.lemma2_bound,
            lemma3_loss: fl.lemma3_loss,
            h_failure_max: fl.h_failure_max,
        })
    }
}

/// The partition of a single-run output distribution by the `eta/4`
/// probability threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputPartition {
    pub eta: f64,
    pub failure_mass: f64,
    /// Functions with probability at most `eta/4`.
    pub f1: Vec<(u64, f64)>,
    /// Functions with probability above `eta/4`.
    pub f2: Vec<(u64, f64)>,
}

impl OutputPartition {
    /// `|F2| < 4/eta`: forced by total probability.
    pub fn f2_within_pigeonhole(&self) -> bool {
        (self.f2.len() as f64) < 4.0 / self.eta
    }
}

/// Classify each supported function of a single-run output distribution by
/// its probability against `eta/4`.
pub fn partition_outputs(
    dist: &OutputDistribution,
    eta: f64,
) -> Result<OutputPartition, InfoError> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(InfoError::InvalidEta(eta));
    }
    let mut partition = OutputPartition {
        eta,
        failure_mass: 0.0,
        f1: Vec::new(),
        f2: Vec::new(),
    };
    for &(atom, p) in &dist.support {
        match atom {
            OutputAtom::Failure => partition.failure_mass += p,
            OutputAtom::Function(key) => {
                if p > eta / 4.0 {
                    partition.f2.push((key, p));
                } else {
                    partition.f1.push((key, p));
                }
            }
        }
    }
    Ok(partition)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::BitRow;
    use proptest::prelude::*;

    #[test]
    fn plugin_entropy_cases() {
        assert_eq!(plugin_entropy(&[17]), 0.0);
        assert!((plugin_entropy(&[5, 5, 5, 5]) - 2.0).abs() < 1e-12);
        assert!((plugin_entropy(&[3, 1]) - 0.8112781244591329).abs() < 1e-12);
        assert_eq!(plugin_entropy(&[]), 0.0);
    }

    /// Deterministic learner under a point-mass distribution: one atom.
    #[test]
    fn exact_distribution_point_mass() {
        let class = HypothesisClass::from_strings(&["00", "11"]).unwrap();
        let dist = RealizableDistribution::new(&class, vec![1.0, 0.0], 1).unwrap();
        let soa = Soa::new();
        let learner = SoaOnSample {
            soa: &soa,
            class: &class,
        };
        let boost = ExactBoost {
            learner: &learner,
            threshold: 2,
        };
        let out = exact_output_distribution(&boost, &dist, 1, 3).unwrap();
        assert_eq!(out.support.len(), 1);
        let (atom, p) = out.support[0];
        assert_eq!(atom, OutputAtom::Function(3)); // "11"
        assert!((p - 1.0).abs() < 1e-15);
    }

    /// Degenerate oracle: toy class with the all-ones target only ever
    /// produces the all-ones function, so MI is exactly zero.
    #[test]
    fn exact_mi_degenerate_toy() {
        let class = HypothesisClass::from_strings(&["00", "11"]).unwrap();
        let dist = RealizableDistribution::from_rational(&class, vec![(1, 2), (1, 2)], 1).unwrap();
        let soa = Soa::new();
        let learner = SoaOnSample {
            soa: &soa,
            class: &class,
        };
        let boost = ExactBoost {
            learner: &learner,
            threshold: 2,
        };
        let out = exact_output_distribution(&boost, &dist, 1, 3).unwrap();
        assert_eq!(out.support, vec![(OutputAtom::Function(3), 1.0)]);
        let mi = exact_mutual_information(&boost, &dist, 1, 3).unwrap();
        assert!(mi.value_bits.abs() < 1e-12);
    }

    /// Hand enumeration: class {"10","11"}, target "10", uniform data,
    /// n = 1, k = 3, threshold 2. A single example (x0, 1) leaves both
    /// hypotheses and the SOA tie rule outputs "11"; (x1, 0) pins "10".
    /// The boosted majority over three fair draws is "11" or "10" with
    /// probability 1/2 each, and the outcome is a deterministic function
    /// of the data, so I(S^k; A(S^k)) = 1 bit exactly.
    #[test]
    fn exact_mi_matches_hand_enumeration() {
        let class = HypothesisClass::from_strings(&["10", "11"]).unwrap();
        let dist = RealizableDistribution::from_rational(&class, vec![(1, 2), (1, 2)], 0).unwrap();
        let soa = Soa::new();
        let learner = SoaOnSample {
            soa: &soa,
            class: &class,
        };
        let boost = ExactBoost {
            learner: &learner,
            threshold: 2,
        };

        let out = exact_output_distribution(&boost, &dist, 1, 3).unwrap();
        let key10 = "10".parse::<BitRow>().unwrap().function_key().unwrap();
        let key11 = "11".parse::<BitRow>().unwrap().function_key().unwrap();
        assert!((out.prob(OutputAtom::Function(key10)) - 0.5).abs() < 1e-15);
        assert!((out.prob(OutputAtom::Function(key11)) - 0.5).abs() < 1e-15);
        assert!((out.entropy_bits() - 1.0).abs() < 1e-12);

        let mi = exact_mutual_information(&boost, &dist, 1, 3).unwrap();
        assert!((mi.value_bits - 1.0).abs() < 1e-9);
        // MI is bounded by the output entropy, with equality for a
        // deterministic algorithm.
        assert!(mi.value_bits <= out.entropy_bits() + 1e-12);
    }

    /// An algorithm that copies the first label of the first sample.
    struct FirstLabel;

    impl DiscreteAlgorithm for FirstLabel {
        fn conditional(&self, samples: &[Sample]) -> Result<Vec<(OutputAtom, f64)>, InfoError> {
            let y = samples[0].examples()[0].y;
            Ok(vec![(OutputAtom::Function(u64::from(y)), 1.0)])
        }
    }

    #[test]
    fn exact_mi_copies_one_fair_bit() {
        let class = HypothesisClass::from_strings(&["01"]).unwrap();
        let dist = RealizableDistribution::from_rational(&class, vec![(1, 2), (1, 2)], 0).unwrap();
        let mi = exact_mutual_information(&FirstLabel, &dist, 1, 1).unwrap();
        assert!((mi.value_bits - 1.0).abs() < 1e-12);
    }

    #[test]
    fn enumeration_guard_trips() {
        let class = HypothesisClass::full_cube(4).unwrap();
        let dist = RealizableDistribution::uniform(&class, 0).unwrap();
        let soa = Soa::new();
        let learner = SoaOnSample {
            soa: &soa,
            class: &class,
        };
        let boost = ExactBoost {
            learner: &learner,
            threshold: 2,
        };
        // 4^(4*4) = 4 billion atoms
        assert!(matches!(
            exact_output_distribution(&boost, &dist, 4, 4),
            Err(InfoError::EnumerationGuard { .. })
        ));
    }

    #[test]
    fn monte_carlo_matches_exact_distribution() {
        let class = HypothesisClass::from_strings(&["10", "11"]).unwrap();
        let dist = RealizableDistribution::from_rational(&class, vec![(1, 2), (1, 2)], 0).unwrap();
        let soa = Soa::new();
        let learner = SoaOnSample {
            soa: &soa,
            class: &class,
        };
        let boost = ExactBoost {
            learner: &learner,
            threshold: 2,
        };
        let exact = exact_output_distribution(&boost, &dist, 1, 3).unwrap();

        let trials = 100_000;
        let master = RandomSource::new(1234);
        let mut counts: BTreeMap<OutputAtom, f64> = BTreeMap::new();
        for i in 0..trials {
            let atom = sample_boosted(&boost, &dist, 1, 3, &master.derive(i)).unwrap();
            *counts.entry(atom).or_insert(0.0) += 1.0 / trials as f64;
        }
        let mc = OutputDistribution {
            support: counts.into_iter().collect(),
            provenance: Provenance::MonteCarlo {
                trials: trials as usize,
            },
        };
        let tv = exact.total_variation(&mc);
        assert!(tv <= 0.01, "total variation {tv}");
    }

    #[test]
    fn mc_entropy_deterministic_is_zero() {
        let est =
            estimate_entropy_mc(|_| OutputAtom::Function(7), 1_000, &RandomSource::new(0)).unwrap();
        assert_eq!(est.value_bits, 0.0);
        assert_eq!(est.bias_correction_bits, 0.0);
    }

    #[test]
    fn mc_entropy_fair_coin_near_one_bit() {
        let est = estimate_entropy_mc(
            |src| OutputAtom::Function(u64::from(src.coin())),
            100_000,
            &RandomSource::new(5),
        )
        .unwrap();
        assert!((est.value_bits - 1.0).abs() < 0.01, "H {}", est.value_bits);
        assert!(est.bias_correction_bits > 0.0);
    }

    #[test]
    fn mc_entropy_matches_exact_marginal() {
        let class = HypothesisClass::from_strings(&["10", "11"]).unwrap();
        let dist = RealizableDistribution::from_rational(&class, vec![(1, 2), (1, 2)], 0).unwrap();
        let soa = Soa::new();
        let learner = SoaOnSample {
            soa: &soa,
            class: &class,
        };
        let boost = ExactBoost {
            learner: &learner,
            threshold: 2,
        };
        let exact = exact_output_distribution(&boost, &dist, 1, 3).unwrap();
        let est = estimate_entropy_mc(
            |src| sample_boosted(&boost, &dist, 1, 3, &src).unwrap(),
            100_000,
            &RandomSource::new(6),
        )
        .unwrap();
        assert!((est.value_bits - exact.entropy_bits()).abs() < 0.05);
    }

    #[test]
    fn mc_minimum_trials_enforced() {
        assert!(matches!(
            estimate_entropy_mc(|_| OutputAtom::Failure, 50, &RandomSource::new(0)),
            Err(InfoError::NotEnoughTrials { .. })
        ));
    }

    #[test]
    fn theorem1_bound_frozen_values() {
        let b = bound_theorem1(64, 1.0 / 16.0).unwrap();
        // independently: 8k 2^(-eta k/2) (1 - eta/2)^(-k)
        let route2 = 8.0 * 64.0 * 2f64.powf(-2.0) * (31f64 / 32.0).powi(-64);
        assert!((b.h1_term - route2).abs() / route2 < 1e-12);
        assert!((b.h1_term - 976.4728592784062).abs() < 1e-6);
        assert_eq!(b.h2_term, 6.0);
        assert!((b.h_failure_cap - 1.592_213_536_269_129).abs() < 1e-12);
        assert!((b.total - 984.0650728146753).abs() < 1e-6);
        assert!((b.r - 0.5).abs() < 1e-15);
        assert!(b.eta_k_margin < 0.0);

        let b = bound_theorem1(192, 1.0 / 16.0).unwrap();
        assert!((b.h1_term - 10_655.206_306_394_32).abs() < 1e-5);
        assert!((b.total - 10_662.798_519_930_59).abs() < 1e-5);
    }

    #[test]
    fn theorem1_requires_eta_k() {
        assert!(matches!(
            bound_theorem1(3, 1.0),
            Err(InfoError::EtaKPrecondition { .. })
        ));
        assert!(bound_theorem1(4, 1.0).is_ok());
    }

    #[test]
    fn theorem2_and_proposition_frozen_values() {
        assert!((bound_theorem2(1) - 7.592_213_536_269_129).abs() < 1e-9);
        assert!((bound_theorem2(2) - 10.177_176_036_990_286).abs() < 1e-9);
        assert!((proposition_affine_bound(1) - 4.592_213_536_269_129).abs() < 1e-9);
    }

    #[test]
    fn failure_lemma_frozen_values() {
        let b = failure_and_lemma_bounds(192, 1.0 / 16.0, 16).unwrap();
        assert!((b.failure_bound - 0.6872892787909722).abs() < 1e-9);
        assert_eq!(b.lemma2_bound, 0.25);
        assert_eq!(b.lemma3_loss, 0.375);
        assert!((b.h_failure_max - 0.530_737_845_423_043).abs() < 1e-12);
    }

    #[test]
    fn bound_report_components_sum() {
        let r = BoundReport::assemble(1, 0.5, 0.05).unwrap();
        assert_eq!(r.k, 192);
        assert_eq!(r.n1, 16);
        assert_eq!(r.eta, 0.0625);
        assert_eq!(r.n, Some(131072));
        assert!((r.theorem1_rhs - (r.h1_term + r.h2_term + r.h_failure_cap)).abs() < 1e-12);
        assert!((r.theorem2_rhs - 7.592_213_536_269_129).abs() < 1e-9);
        assert!((r.proposition_rhs - 4.592_213_536_269_129).abs() < 1e-9);
        assert!(r.desk_scale_executable);
    }

    #[test]
    fn partition_cases() {
        let deterministic = OutputDistribution {
            support: vec![(OutputAtom::Function(9), 1.0)],
            provenance: Provenance::Exact,
        };
        let p = partition_outputs(&deterministic, 1.0).unwrap();
        assert!(p.f1.is_empty());
        assert_eq!(p.f2.len(), 1);
        assert!(p.f2_within_pigeonhole());

        // uniform over 8 functions at eta = 1/2: each probability equals
        // eta/4, which lands in F1 (the threshold is strict for F2)
        let uniform = OutputDistribution {
            support: (0..8).map(|i| (OutputAtom::Function(i), 0.125)).collect(),
            provenance: Provenance::Exact,
        };
        let p = partition_outputs(&uniform, 0.5).unwrap();
        assert_eq!(p.f1.len(), 8);
        assert!(p.f2.is_empty());
    }

    proptest! {
        #[test]
        fn f2_pigeonhole_always_holds(
            raw in proptest::collection::vec(0.0f64..1.0, 1..20),
            eta in 0.01f64..1.0,
        ) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 0.0);
            let support: Vec<(OutputAtom, f64)> = raw
                .iter()
                .enumerate()
                .map(|(i, &w)| (OutputAtom::Function(i as u64), w / total))
                .collect();
            let dist = OutputDistribution { support, provenance: Provenance::Exact };
            let p = partition_outputs(&dist, eta).unwrap();
            prop_assert!(p.f2_within_pigeonhole());
        }

        #[test]
        fn eta_k_margin_is_negative(eta in 0.001f64..=1.0) {
            let margin = eta / 2.0 + (1.0 - eta / 2.0).log2();
            prop_assert!(margin < 0.0);
        }

        #[test]
        fn plugin_entropy_nonnegative_and_bounded(counts in proptest::collection::vec(1u64..100, 1..16)) {
            let h = plugin_entropy(&counts);
            prop_assert!(h >= 0.0);
            prop_assert!(h <= (counts.len() as f64).log2() + 1e-12);
        }
    }
}
