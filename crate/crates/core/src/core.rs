//! Finite domains, hypothesis classes, samples, and realizable distributions.
//!
//! Everything downstream works over an explicitly finite input set
//! `X = {0, 1, ..., domain_size - 1}`. Hypotheses are extensional: a
//! hypothesis is its bit-row over `X`, and two hypotheses are equal iff
//! their bit-rows are equal.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use num::rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("hypothesis class must contain at least one row")]
    EmptyClass,
    #[error("all rows must have the same nonzero length (row {row} has length {len}, expected {expected})")]
    RaggedRows {
        row: usize,
        len: usize,
        expected: usize,
    },
    #[error("sample is empty")]
    EmptySample,
    #[error("domain size mismatch: {left} vs {right}")]
    DomainMismatch { left: usize, right: usize },
    #[error(
        "pmf must have {expected} nonnegative entries summing to 1 within {tol} (got sum {sum})"
    )]
    InvalidPmf { expected: usize, sum: f64, tol: f64 },
    #[error("target id {id} out of range for class of size {size}")]
    BadTargetId { id: usize, size: usize },
    #[error("sample size must be at least 1")]
    ZeroDraws,
    #[error("domain point {index} out of range (domain size {size})")]
    BadPoint { index: usize, size: usize },
    #[error("bit string must consist of '0'/'1' characters: {0:?}")]
    BadBitString(String),
    #[error("canonical function keys require domain size <= 63 (got {0})")]
    DomainTooLargeForKey(usize),
    #[error("domain size {size} exceeds the supported maximum {max}")]
    DomainTooLarge { size: usize, max: usize },
}

/// An element of the finite domain, identified by its index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DomainPoint(pub usize);

impl DomainPoint {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A 0/1 labeling of the whole domain, ordered lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BitRow(Vec<bool>);

impl BitRow {
    pub fn new(bits: Vec<bool>) -> Self {
        BitRow(bits)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, x: DomainPoint) -> bool {
        self.0[x.0]
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    /// Lexicographic rank of this row among all rows of its length, i.e. the
    /// value of the bit string read as a binary number (index 0 most
    /// significant). Serves as the canonical identity of an arbitrary
    /// function, including ones outside any class.
    pub fn function_key(&self) -> Result<u64, CoreError> {
        if self.0.len() > 63 {
            return Err(CoreError::DomainTooLargeForKey(self.0.len()));
        }
        let mut key = 0u64;
        for &b in &self.0 {
            key = (key << 1) | u64::from(b);
        }
        Ok(key)
    }
}

impl fmt::Display for BitRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            write!(f, "{}", u8::from(b))?;
        }
        Ok(())
    }
}

impl FromStr for BitRow {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, CoreError> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(CoreError::BadBitString(s.to_string())),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(BitRow)
    }
}

impl Serialize for BitRow {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BitRow {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A hypothesis: an extensional 0/1 function over the domain.
///
/// `id` is the lexicographic rank of the bit-row within the owning class.
/// Equality, ordering, and hashing are extensional (bit-row only), so
/// hypotheses from different classes compare by what they compute.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hypothesis {
    pub id: u64,
    pub labels: BitRow,
}

impl Hypothesis {
    /// A free-standing function not attached to a class (id 0).
    pub fn from_labels(labels: BitRow) -> Self {
        Hypothesis { id: 0, labels }
    }

    pub fn domain_size(&self) -> usize {
        self.labels.len()
    }

    pub fn eval(&self, x: DomainPoint) -> bool {
        self.labels.get(x)
    }

    pub fn function_key(&self) -> Result<u64, CoreError> {
        self.labels.function_key()
    }

    /// Fraction of examples in `sample` this hypothesis mislabels.
    pub fn empirical_error(&self, sample: &Sample) -> Result<f64, CoreError> {
        let mistakes = self.empirical_mistakes(sample)?;
        Ok(mistakes as f64 / sample.len() as f64)
    }

    /// Number of examples in `sample` this hypothesis mislabels.
    pub fn empirical_mistakes(&self, sample: &Sample) -> Result<usize, CoreError> {
        if sample.is_empty() {
            return Err(CoreError::EmptySample);
        }
        Ok(sample.iter().filter(|ex| self.eval(ex.x) != ex.y).count())
    }
}

impl PartialEq for Hypothesis {
    fn eq(&self, other: &Self) -> bool {
        self.labels == other.labels
    }
}

impl Eq for Hypothesis {}

impl PartialOrd for Hypothesis {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Hypothesis {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.labels.cmp(&other.labels)
    }
}

impl std::hash::Hash for Hypothesis {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.labels.hash(state);
    }
}

/// On-disk form of a hypothesis class: `{"domain_size": n, "rows": ["0101", ...]}`.
#[derive(Serialize, Deserialize)]
struct ClassFile {
    domain_size: usize,
    rows: Vec<String>,
}

/// A finite hypothesis class: distinct bit-rows, lexicographically sorted,
/// ids assigned by sorted rank.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ClassFile", into = "ClassFile")]
pub struct HypothesisClass {
    domain_size: usize,
    rows: Vec<Hypothesis>,
}

impl TryFrom<ClassFile> for HypothesisClass {
    type Error = CoreError;

    fn try_from(file: ClassFile) -> Result<Self, CoreError> {
        let rows = file
            .rows
            .iter()
            .map(|s| s.parse::<BitRow>().map(|r| r.bits().to_vec()))
            .collect::<Result<Vec<_>, _>>()?;
        let class = HypothesisClass::from_rows(rows)?;
        if class.domain_size != file.domain_size {
            return Err(CoreError::DomainMismatch {
                left: file.domain_size,
                right: class.domain_size,
            });
        }
        Ok(class)
    }
}

impl From<HypothesisClass> for ClassFile {
    fn from(class: HypothesisClass) -> ClassFile {
        ClassFile {
            domain_size: class.domain_size,
            rows: class.rows.iter().map(|h| h.labels.to_string()).collect(),
        }
    }
}

impl HypothesisClass {
    /// Build a class from a label matrix. Rows are deduplicated and sorted;
    /// ids are the sorted ranks.
    pub fn from_rows(rows: Vec<Vec<bool>>) -> Result<Self, CoreError> {
        let first = rows.first().ok_or(CoreError::EmptyClass)?;
        let domain_size = first.len();
        if domain_size == 0 {
            return Err(CoreError::RaggedRows {
                row: 0,
                len: 0,
                expected: 1,
            });
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != domain_size {
                return Err(CoreError::RaggedRows {
                    row: i,
                    len: row.len(),
                    expected: domain_size,
                });
            }
        }
        let distinct: BTreeSet<BitRow> = rows.into_iter().map(BitRow::new).collect();
        let rows = distinct
            .into_iter()
            .enumerate()
            .map(|(id, labels)| Hypothesis {
                id: id as u64,
                labels,
            })
            .collect();
        Ok(HypothesisClass { domain_size, rows })
    }

    /// Parse rows given as "0101" strings.
    pub fn from_strings(rows: &[&str]) -> Result<Self, CoreError> {
        let rows = rows
            .iter()
            .map(|s| s.parse::<BitRow>().map(|r| r.bits().to_vec()))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_rows(rows)
    }

    /// The threshold family over the chain `{1, ..., n}`: all functions
    /// `x >= a` for `a in {1, ..., n+1}` (including all-ones and all-zeros).
    pub fn thresholds(n: usize) -> Result<Self, CoreError> {
        if n == 0 {
            return Err(CoreError::EmptyClass);
        }
        let rows = (1..=n + 1)
            .map(|a| (1..=n).map(|x| x >= a).collect())
            .collect();
        Self::from_rows(rows)
    }

    /// All `2^m` labelings of an `m`-point domain.
    pub fn full_cube(m: usize) -> Result<Self, CoreError> {
        if m == 0 {
            return Err(CoreError::EmptyClass);
        }
        if m > 20 {
            return Err(CoreError::DomainTooLarge { size: m, max: 20 });
        }
        let rows = (0..1usize << m)
            .map(|v| (0..m).map(|i| (v >> (m - 1 - i)) & 1 == 1).collect())
            .collect();
        Self::from_rows(rows)
    }

    pub fn domain_size(&self) -> usize {
        self.domain_size
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn hypotheses(&self) -> &[Hypothesis] {
        &self.rows
    }

    pub fn hypothesis(&self, id: usize) -> Option<&Hypothesis> {
        self.rows.get(id)
    }

    pub fn domain(&self) -> impl Iterator<Item = DomainPoint> {
        (0..self.domain_size).map(DomainPoint)
    }

    pub fn check_point(&self, x: DomainPoint) -> Result<(), CoreError> {
        if x.0 >= self.domain_size {
            return Err(CoreError::BadPoint {
                index: x.0,
                size: self.domain_size,
            });
        }
        Ok(())
    }

    /// The version space `{h in class : h(x) = y}`. May be empty; emptiness
    /// is reported through the returned class being empty, not as an error,
    /// so the result deliberately skips the nonemptiness invariant.
    pub fn restrict(&self, x: DomainPoint, y: bool) -> HypothesisClass {
        let rows: Vec<Hypothesis> = self
            .rows
            .iter()
            .filter(|h| h.eval(x) == y)
            .cloned()
            .collect();
        // Rows stay sorted; reassign ids by rank within the restriction.
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(id, h)| Hypothesis {
                id: id as u64,
                labels: h.labels,
            })
            .collect();
        HypothesisClass {
            domain_size: self.domain_size,
            rows,
        }
    }

    /// Restrict by every example of `sample` in order.
    pub fn restrict_by(&self, sample: &Sample) -> HypothesisClass {
        let mut class = self.clone();
        for ex in sample.iter() {
            class = class.restrict(ex.x, ex.y);
        }
        class
    }

    pub fn contains(&self, h: &Hypothesis) -> bool {
        self.rows
            .binary_search_by(|r| r.labels.cmp(&h.labels))
            .is_ok()
    }
}

/// A labeled example `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledExample {
    pub x: DomainPoint,
    pub y: bool,
}

/// An ordered sequence of labeled examples; duplicates allowed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample(Vec<LabeledExample>);

impl Sample {
    pub fn new(examples: Vec<LabeledExample>) -> Self {
        Sample(examples)
    }

    pub fn empty() -> Self {
        Sample(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LabeledExample> {
        self.0.iter()
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.0
    }

    pub fn push(&mut self, ex: LabeledExample) {
        self.0.push(ex);
    }

    pub fn extend_from(&mut self, other: &Sample) {
        self.0.extend_from_slice(&other.0);
    }

    /// The initial segment of length `n` (or the whole sample if shorter).
    pub fn prefix(&self, n: usize) -> Sample {
        Sample(self.0[..n.min(self.0.len())].to_vec())
    }
}

impl FromIterator<LabeledExample> for Sample {
    fn from_iter<T: IntoIterator<Item = LabeledExample>>(iter: T) -> Self {
        Sample(iter.into_iter().collect())
    }
}

const PMF_TOL: f64 = 1e-12;

/// On-disk form of a distribution: `{"pmf": [...], "target_id": k}`.
/// Needs the class it refers to before it can be used.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub pmf: Vec<f64>,
    pub target_id: usize,
}

impl DistributionSpec {
    pub fn realize(&self, class: &HypothesisClass) -> Result<RealizableDistribution, CoreError> {
        RealizableDistribution::new(class, self.pmf.clone(), self.target_id)
    }
}

/// A distribution over the domain together with the target hypothesis whose
/// labels it emits. Realizable by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizableDistribution {
    pmf: Vec<f64>,
    /// Exact weights, kept when the caller supplied rationals; exact
    /// enumeration paths use these to avoid floating-point drift.
    rational_pmf: Option<Vec<Ratio<u64>>>,
    target: Hypothesis,
}

impl RealizableDistribution {
    pub fn new(
        class: &HypothesisClass,
        pmf: Vec<f64>,
        target_id: usize,
    ) -> Result<Self, CoreError> {
        let target = class
            .hypothesis(target_id)
            .ok_or(CoreError::BadTargetId {
                id: target_id,
                size: class.len(),
            })?
            .clone();
        if pmf.len() != class.domain_size() {
            return Err(CoreError::DomainMismatch {
                left: pmf.len(),
                right: class.domain_size(),
            });
        }
        let sum: f64 = pmf.iter().sum();
        if pmf.iter().any(|&p| p.is_nan() || p < 0.0) || (sum - 1.0).abs() > PMF_TOL {
            return Err(CoreError::InvalidPmf {
                expected: pmf.len(),
                sum,
                tol: PMF_TOL,
            });
        }
        Ok(RealizableDistribution {
            pmf,
            rational_pmf: None,
            target,
        })
    }

    /// Exact construction from rational weights `(numerator, denominator)`.
    pub fn from_rational(
        class: &HypothesisClass,
        weights: Vec<(u64, u64)>,
        target_id: usize,
    ) -> Result<Self, CoreError> {
        if weights.iter().any(|&(_, d)| d == 0) {
            return Err(CoreError::InvalidPmf {
                expected: weights.len(),
                sum: f64::NAN,
                tol: 0.0,
            });
        }
        let ratios: Vec<Ratio<u64>> = weights.into_iter().map(|(n, d)| Ratio::new(n, d)).collect();
        let sum: Ratio<u64> = ratios.iter().sum();
        if sum != Ratio::new(1, 1) {
            return Err(CoreError::InvalidPmf {
                expected: ratios.len(),
                sum: ratio_to_f64(sum),
                tol: 0.0,
            });
        }
        let pmf = ratios.iter().map(|r| ratio_to_f64(*r)).collect();
        let mut dist = Self::new(class, pmf, target_id)?;
        dist.rational_pmf = Some(ratios);
        Ok(dist)
    }

    /// Uniform distribution over the whole domain.
    pub fn uniform(class: &HypothesisClass, target_id: usize) -> Result<Self, CoreError> {
        let m = class.domain_size() as u64;
        Self::from_rational(class, (0..m).map(|_| (1, m)).collect(), target_id)
    }

    pub fn domain_size(&self) -> usize {
        self.pmf.len()
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn rational_pmf(&self) -> Option<&[Ratio<u64>]> {
        self.rational_pmf.as_deref()
    }

    pub fn target(&self) -> &Hypothesis {
        &self.target
    }

    /// The true label of a point.
    pub fn label(&self, x: DomainPoint) -> bool {
        self.target.eval(x)
    }

    /// `Pr[h(x) != target(x)]`, summed exactly over the finite domain.
    pub fn true_error(&self, h: &Hypothesis) -> Result<f64, CoreError> {
        if h.domain_size() != self.pmf.len() {
            return Err(CoreError::DomainMismatch {
                left: h.domain_size(),
                right: self.pmf.len(),
            });
        }
        Ok(self
            .pmf
            .iter()
            .enumerate()
            .filter(|&(i, _)| h.eval(DomainPoint(i)) != self.target.eval(DomainPoint(i)))
            .map(|(_, &p)| p)
            .sum::<f64>()
            .max(0.0))
    }

    /// Draw one point according to the pmf.
    pub fn draw_point(&self, rng: &mut ChaCha8Rng) -> DomainPoint {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &p) in self.pmf.iter().enumerate() {
            acc += p;
            if u < acc {
                return DomainPoint(i);
            }
        }
        DomainPoint(self.pmf.len() - 1)
    }

    /// Draw an i.i.d. sample of size `n`, labeled by the target.
    pub fn draw(&self, n: usize, source: &RandomSource) -> Result<Sample, CoreError> {
        if n == 0 {
            return Err(CoreError::ZeroDraws);
        }
        let mut rng = source.rng();
        Ok((0..n)
            .map(|_| {
                let x = self.draw_point(&mut rng);
                LabeledExample {
                    x,
                    y: self.label(x),
                }
            })
            .collect())
    }
}

fn ratio_to_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn splitmix64(state: &mut u64) {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    *state = z ^ (z >> 31);
}

/// A splittable, counter-based randomness source keyed by `(seed, stream_id)`.
///
/// Identical `(seed, stream_id)` pairs yield identical draw sequences.
/// `stream` gives cheap flat fan-out (distinct cipher streams under the same
/// key); `derive` hashes `(seed, stream_id, tag)` into a fresh key for
/// hierarchical splitting. Parallel trials each take their own source, so
/// results never depend on scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomSource {
    pub seed: u64,
    pub stream_id: u64,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        RandomSource { seed, stream_id: 0 }
    }

    /// Same key, different stream.
    pub fn stream(&self, stream_id: u64) -> Self {
        RandomSource {
            seed: self.seed,
            stream_id,
        }
    }

    /// A fresh key mixed from `(seed, stream_id, tag)`.
    pub fn derive(&self, tag: u64) -> Self {
        let mut state = self.seed;
        splitmix64(&mut state);
        state ^= self.stream_id.wrapping_mul(0xa076_1d64_78bd_642f);
        splitmix64(&mut state);
        state ^= tag.wrapping_mul(0xe703_7ed1_a0b4_28db);
        splitmix64(&mut state);
        RandomSource {
            seed: state,
            stream_id: 0,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// One fair coin.
    pub fn coin(&self) -> bool {
        self.rng().random()
    }

    /// One uniform draw from `{0, ..., n - 1}`.
    pub fn below(&self, n: u64) -> u64 {
        self.rng().random_range(0..n)
    }
}
