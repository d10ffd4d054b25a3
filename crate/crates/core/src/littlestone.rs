//! Littlestone dimension, mistake-tree shattering, the standard optimal
//! algorithm (SOA), and the exhaustive worst-case online game.
//!
//! Two independent routes compute the dimension: [`ldim`] recurses on
//! version-space restrictions with memoization, while [`ldim_bruteforce`]
//! enumerates complete mistake trees of a given depth and checks that every
//! root-to-leaf path is realized. The brute-force route is the oracle the
//! recursive one is validated against.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use thiserror::Error;

use crate::core::{BitRow, DomainPoint, Hypothesis, HypothesisClass, Sample};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LittlestoneError {
    #[error("hypothesis class is empty")]
    EmptyClass,
    #[error("version space is empty (history is not realizable)")]
    EmptyVersionSpace,
    #[error("sequence is not realizable by the class: version space empties after {prefix_len} examples")]
    NonRealizable { prefix_len: usize },
    #[error("search guard exceeded: explored {explored} nodes (limit {limit})")]
    ResourceGuard { explored: u64, limit: u64 },
    #[error("game horizon {horizon} exceeds the exhaustive-search maximum {max}")]
    HorizonTooLarge { horizon: usize, max: usize },
}

/// Node budget for the exhaustive searches. Exceeding it is a loud error,
/// never a silent truncation.
const SEARCH_NODE_LIMIT: u64 = 200_000_000;
const GAME_HORIZON_MAX: usize = 6;

fn pack_fingerprint(class: &HypothesisClass) -> Box<[u64]> {
    let m = class.domain_size();
    let limbs = m.div_ceil(64);
    let mut key = Vec::with_capacity(1 + class.len() * limbs);
    key.push(m as u64);
    for h in class.hypotheses() {
        let mut acc = 0u64;
        let mut filled = 0;
        for &b in h.labels.bits() {
            acc = (acc << 1) | u64::from(b);
            filled += 1;
            if filled == 64 {
                key.push(acc);
                acc = 0;
                filled = 0;
            }
        }
        if filled > 0 {
            key.push(acc);
        }
    }
    key.into_boxed_slice()
}

/// Memo table for the recursive Littlestone dimension, keyed by the
/// canonical version-space fingerprint (domain size + sorted packed rows).
/// Reads take a shared lock; inserts are serialized.
#[derive(Debug, Default)]
pub struct LdimCache {
    map: RwLock<HashMap<Box<[u64]>, u32>>,
}

impl LdimCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Littlestone dimension of a nonempty class.
    pub fn ldim(&self, class: &HypothesisClass) -> Result<u32, LittlestoneError> {
        if class.is_empty() {
            return Err(LittlestoneError::EmptyClass);
        }
        Ok(self.ldim_nonempty(class))
    }

    fn ldim_nonempty(&self, class: &HypothesisClass) -> u32 {
        if class.len() == 1 {
            return 0;
        }
        let key = pack_fingerprint(class);
        if let Some(&v) = self.map.read().unwrap().get(&key) {
            return v;
        }
        let mut best = 0;
        for x in class.domain() {
            let zeros = class.restrict(x, false);
            // x splits the class only if both restrictions are nonempty
            if zeros.is_empty() || zeros.len() == class.len() {
                continue;
            }
            let ones = class.restrict(x, true);
            let candidate = 1 + self.ldim_nonempty(&zeros).min(self.ldim_nonempty(&ones));
            best = best.max(candidate);
        }
        self.map.write().unwrap().insert(key, best);
        best
    }
}

/// Littlestone dimension of a class, with a fresh memo table.
pub fn ldim(class: &HypothesisClass) -> Result<u32, LittlestoneError> {
    LdimCache::new().ldim(class)
}

/// True iff some complete mistake tree of depth `depth` is shattered by the
/// class, by exhaustive search over node assignments and paths.
///
/// A depth-`t` subtree whose path constraints leave fewer than `2^t`
/// consistent hypotheses cannot be shattered (each root-to-leaf path needs
/// its own hypothesis), so such assignments are pruned wholesale.
pub fn ldim_bruteforce(class: &HypothesisClass, depth: u32) -> Result<bool, LittlestoneError> {
    if class.is_empty() {
        return Err(LittlestoneError::EmptyClass);
    }
    if depth == 0 {
        return Ok(true);
    }
    let m = class.domain_size();
    let n = class.len();
    let limbs = n.div_ceil(64);
    // label_masks[x][y]: bitset over hypotheses with h(x) = y
    let mut label_masks = vec![[vec![0u64; limbs], vec![0u64; limbs]]; m];
    for (i, h) in class.hypotheses().iter().enumerate() {
        for (x, masks) in label_masks.iter_mut().enumerate() {
            let y = usize::from(h.eval(DomainPoint(x)));
            masks[y][i / 64] |= 1 << (i % 64);
        }
    }
    let mut alive = vec![0u64; limbs];
    for (i, limb) in alive.iter_mut().enumerate() {
        let remaining = n - i * 64;
        *limb = if remaining >= 64 {
            u64::MAX
        } else {
            (1u64 << remaining) - 1
        };
    }
    let mut explored = 0u64;
    search_shattered(&alive, depth, &label_masks, &mut explored)
}

fn popcount(mask: &[u64]) -> u64 {
    mask.iter().map(|l| u64::from(l.count_ones())).sum()
}

fn search_shattered(
    alive: &[u64],
    depth: u32,
    label_masks: &[[Vec<u64>; 2]],
    explored: &mut u64,
) -> Result<bool, LittlestoneError> {
    *explored += 1;
    if *explored > SEARCH_NODE_LIMIT {
        return Err(LittlestoneError::ResourceGuard {
            explored: *explored,
            limit: SEARCH_NODE_LIMIT,
        });
    }
    let live = popcount(alive);
    if depth == 0 {
        return Ok(live >= 1);
    }
    if depth >= 64 || live < (1u64 << depth) {
        return Ok(false);
    }
    for masks in label_masks {
        let zeros: Vec<u64> = alive.iter().zip(&masks[0]).map(|(a, m)| a & m).collect();
        let ones: Vec<u64> = alive.iter().zip(&masks[1]).map(|(a, m)| a & m).collect();
        if search_shattered(&zeros, depth - 1, label_masks, explored)?
            && search_shattered(&ones, depth - 1, label_masks, explored)?
        {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Littlestone dimension by repeated brute-force shattering checks; the
/// oracle counterpart of [`ldim`].
pub fn ldim_via_bruteforce(class: &HypothesisClass) -> Result<u32, LittlestoneError> {
    if class.is_empty() {
        return Err(LittlestoneError::EmptyClass);
    }
    // a shattered depth-t tree needs 2^t hypotheses
    let max_depth = 63 - (class.len() as u64).leading_zeros();
    let mut best = 0;
    for t in 1..=max_depth {
        if ldim_bruteforce(class, t)? {
            best = t;
        } else {
            break;
        }
    }
    Ok(best)
}

/// State of an SOA run: the version space, the mistake count, and the
/// processed history.
#[derive(Debug, Clone)]
pub struct SoaState {
    pub version_space: HypothesisClass,
    pub mistakes: usize,
    pub history: Sample,
}

/// An online learner that can be branched: the worst-case game explores
/// alternative futures by cloning states.
pub trait OnlineLearner {
    type State: Clone;

    fn start(&self, class: &HypothesisClass) -> Self::State;
    fn predict(&self, state: &Self::State, x: DomainPoint) -> Result<bool, LittlestoneError>;
    fn observe(&self, state: &Self::State, x: DomainPoint, y: bool) -> Self::State;
}

/// The standard optimal algorithm: predict the label whose version-space
/// restriction has the larger Littlestone dimension, ties toward 1.
#[derive(Debug, Clone, Default)]
pub struct Soa {
    cache: Arc<LdimCache>,
}

impl Soa {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_cache(cache: Arc<LdimCache>) -> Self {
        Soa { cache }
    }

    pub fn cache(&self) -> &Arc<LdimCache> {
        &self.cache
    }

    /// The output function: the SOA prediction at every domain point from
    /// the current state.
    pub fn output(&self, state: &SoaState) -> Result<Hypothesis, LittlestoneError> {
        let bits = state
            .version_space
            .domain()
            .map(|x| self.predict(state, x))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Hypothesis::from_labels(BitRow::new(bits)))
    }
}

impl OnlineLearner for Soa {
    type State = SoaState;

    fn start(&self, class: &HypothesisClass) -> SoaState {
        SoaState {
            version_space: class.clone(),
            mistakes: 0,
            history: Sample::empty(),
        }
    }

    fn predict(&self, state: &SoaState, x: DomainPoint) -> Result<bool, LittlestoneError> {
        let ones = state.version_space.restrict(x, true);
        let zeros = state.version_space.restrict(x, false);
        match (zeros.is_empty(), ones.is_empty()) {
            (true, true) => Err(LittlestoneError::EmptyVersionSpace),
            (true, false) => Ok(true),
            (false, true) => Ok(false),
            (false, false) => {
                let l1 = self.cache.ldim_nonempty(&ones);
                let l0 = self.cache.ldim_nonempty(&zeros);
                Ok(l1 >= l0)
            }
        }
    }

    fn observe(&self, state: &SoaState, x: DomainPoint, y: bool) -> SoaState {
        let mut history = state.history.clone();
        history.push(crate::core::LabeledExample { x, y });
        SoaState {
            version_space: state.version_space.restrict(x, y),
            mistakes: state.mistakes,
            history,
        }
    }
}

/// Run the SOA over a realizable sequence: predict, reveal, restrict.
///
/// Returns the output function (the SOA prediction at every domain point
/// after the whole sequence) and the mistake count. A sequence that empties
/// the version space is rejected with the violating prefix length.
pub fn soa_run(
    soa: &Soa,
    class: &HypothesisClass,
    sequence: &Sample,
) -> Result<(Hypothesis, usize), LittlestoneError> {
    if class.is_empty() {
        return Err(LittlestoneError::EmptyClass);
    }
    let mut state = soa.start(class);
    let mut mistakes = 0;
    for (i, ex) in sequence.iter().enumerate() {
        let prediction = soa.predict(&state, ex.x)?;
        let next = soa.observe(&state, ex.x, ex.y);
        if next.version_space.is_empty() {
            return Err(LittlestoneError::NonRealizable { prefix_len: i + 1 });
        }
        if prediction != ex.y {
            mistakes += 1;
        }
        state = next;
        state.mistakes = mistakes;
    }
    let output = soa.output(&state)?;
    Ok((output, mistakes))
}

/// Exact worst-case mistake count of a learner over all realizable
/// sequences of length at most `horizon`, by exhaustive game-tree search
/// over (point, consistent-label) moves.
pub fn worst_case_mistakes<L: OnlineLearner>(
    learner: &L,
    class: &HypothesisClass,
    horizon: usize,
) -> Result<usize, LittlestoneError> {
    if class.is_empty() {
        return Err(LittlestoneError::EmptyClass);
    }
    if horizon > GAME_HORIZON_MAX {
        return Err(LittlestoneError::HorizonTooLarge {
            horizon,
            max: GAME_HORIZON_MAX,
        });
    }
    let mut explored = 0u64;
    let state = learner.start(class);
    game_value(learner, &state, class, horizon, &mut explored)
}

fn game_value<L: OnlineLearner>(
    learner: &L,
    state: &L::State,
    version_space: &HypothesisClass,
    remaining: usize,
    explored: &mut u64,
) -> Result<usize, LittlestoneError> {
    if remaining == 0 {
        return Ok(0);
    }
    *explored += 1;
    if *explored > SEARCH_NODE_LIMIT {
        return Err(LittlestoneError::ResourceGuard {
            explored: *explored,
            limit: SEARCH_NODE_LIMIT,
        });
    }
    let mut best = 0;
    for x in version_space.domain() {
        let prediction = learner.predict(state, x)?;
        for y in [false, true] {
            let restricted = version_space.restrict(x, y);
            if restricted.is_empty() {
                continue;
            }
            let next = learner.observe(state, x, y);
            let mistake = usize::from(prediction != y);
            let value = mistake + game_value(learner, &next, &restricted, remaining - 1, explored)?;
            best = best.max(value);
        }
    }
    Ok(best)
}

/// A learner that ignores everything and always predicts the same label.
#[derive(Debug, Clone, Copy)]
pub struct ConstantLearner(pub bool);

impl OnlineLearner for ConstantLearner {
    type State = ();

    fn start(&self, _class: &HypothesisClass) {}

    fn predict(&self, _state: &(), _x: DomainPoint) -> Result<bool, LittlestoneError> {
        Ok(self.0)
    }

    fn observe(&self, _state: &(), _x: DomainPoint, _y: bool) {}
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::LabeledExample;
    use proptest::prelude::*;

    fn ex(x: usize, y: bool) -> LabeledExample {
        LabeledExample {
            x: DomainPoint(x),
            y,
        }
    }

    #[test]
    fn ldim_singleton_is_zero() {
        let c = HypothesisClass::from_strings(&["0101"]).unwrap();
        assert_eq!(ldim(&c).unwrap(), 0);
    }

    #[test]
    fn ldim_full_cube_two_points() {
        let c = HypothesisClass::full_cube(2).unwrap();
        assert_eq!(ldim(&c).unwrap(), 2);
        assert_eq!(ldim_via_bruteforce(&c).unwrap(), 2);
    }

    #[test]
    fn ldim_thresholds_eight() {
        let c = HypothesisClass::thresholds(8).unwrap();
        assert_eq!(ldim(&c).unwrap(), 3);
        assert_eq!(ldim_via_bruteforce(&c).unwrap(), 3);
    }

    #[test]
    fn bruteforce_singleton_depth_one() {
        let c = HypothesisClass::from_strings(&["01"]).unwrap();
        assert!(!ldim_bruteforce(&c, 1).unwrap());
    }

    #[test]
    fn bruteforce_cube_depths() {
        let c = HypothesisClass::full_cube(2).unwrap();
        assert!(ldim_bruteforce(&c, 2).unwrap());
        assert!(!ldim_bruteforce(&c, 3).unwrap());
    }

    #[test]
    fn soa_predicts_forced_label() {
        let c = HypothesisClass::from_strings(&["10", "11"]).unwrap();
        let soa = Soa::new();
        let state = soa.start(&c);
        assert!(soa.predict(&state, DomainPoint(0)).unwrap());
    }

    #[test]
    fn soa_breaks_tie_toward_one() {
        // thresholds over {1..8}: both restrictions at x=4 have ldim 2
        let c = HypothesisClass::thresholds(8).unwrap();
        let soa = Soa::new();
        let state = soa.start(&c);
        let x = DomainPoint(3);
        assert_eq!(soa.cache().ldim(&c.restrict(x, true)).unwrap(), 2);
        assert_eq!(soa.cache().ldim(&c.restrict(x, false)).unwrap(), 2);
        assert!(soa.predict(&state, x).unwrap());
    }

    #[test]
    fn soa_ldim_zero_collapse() {
        let c = HypothesisClass::from_strings(&["0110"]).unwrap();
        let soa = Soa::new();
        let state = soa.start(&c);
        let out = soa.output(&state).unwrap();
        assert_eq!(out.labels.to_string(), "0110");
    }

    #[test]
    fn soa_run_empty_sequence_singleton() {
        let c = HypothesisClass::from_strings(&["0110"]).unwrap();
        let (h, mistakes) = soa_run(&Soa::new(), &c, &Sample::empty()).unwrap();
        assert_eq!(h.labels.to_string(), "0110");
        assert_eq!(mistakes, 0);
    }

    #[test]
    fn soa_run_rejects_non_realizable() {
        let c = HypothesisClass::from_strings(&["00", "11"]).unwrap();
        let s = Sample::new(vec![ex(0, true), ex(1, false)]);
        match soa_run(&Soa::new(), &c, &s) {
            Err(LittlestoneError::NonRealizable { prefix_len }) => assert_eq!(prefix_len, 2),
            other => panic!("expected non-realizable error, got {other:?}"),
        }
    }

    #[test]
    fn adversarial_binary_search_forces_three_mistakes() {
        let c = HypothesisClass::thresholds(8).unwrap();
        let soa = Soa::new();
        assert_eq!(worst_case_mistakes(&soa, &c, 3).unwrap(), 3);
    }

    #[test]
    fn worst_case_singleton_is_zero() {
        let c = HypothesisClass::from_strings(&["000"]).unwrap();
        assert_eq!(worst_case_mistakes(&Soa::new(), &c, 4).unwrap(), 0);
        assert_eq!(
            worst_case_mistakes(&ConstantLearner(false), &c, 4).unwrap(),
            0
        );
    }

    #[test]
    fn worst_case_soa_on_cube() {
        let c = HypothesisClass::full_cube(2).unwrap();
        assert_eq!(worst_case_mistakes(&Soa::new(), &c, 4).unwrap(), 2);
    }

    #[test]
    fn worst_case_constant_learner_pays_horizon() {
        let c = HypothesisClass::from_strings(&["000", "111"]).unwrap();
        assert_eq!(
            worst_case_mistakes(&ConstantLearner(false), &c, 3).unwrap(),
            3
        );
    }

    #[test]
    fn horizon_guard_trips() {
        let c = HypothesisClass::full_cube(2).unwrap();
        assert!(matches!(
            worst_case_mistakes(&Soa::new(), &c, 7),
            Err(LittlestoneError::HorizonTooLarge { .. })
        ));
    }

    fn random_class(seed: u64, domain: usize, max_rows: usize) -> HypothesisClass {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows = rng.random_range(1..=max_rows);
        let rows = (0..rows)
            .map(|_| (0..domain).map(|_| rng.random()).collect())
            .collect();
        HypothesisClass::from_rows(rows).unwrap()
    }

    #[test]
    fn recursive_ldim_matches_bruteforce_on_random_classes() {
        for seed in 0..40 {
            let c = random_class(seed, 4, 10);
            assert_eq!(
                ldim(&c).unwrap(),
                ldim_via_bruteforce(&c).unwrap(),
                "class {:?}",
                c
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn restriction_never_raises_ldim(rows in proptest::collection::vec(proptest::collection::vec(any::<bool>(), 3), 1..10), x in 0usize..3, y in any::<bool>()) {
            let c = HypothesisClass::from_rows(rows).unwrap();
            let r = c.restrict(DomainPoint(x), y);
            if !r.is_empty() {
                prop_assert!(ldim(&r).unwrap() <= ldim(&c).unwrap());
            }
        }

        #[test]
        fn soa_mistakes_bounded_by_ldim(
            rows in proptest::collection::vec(proptest::collection::vec(any::<bool>(), 4), 1..12),
            target_pick in any::<u64>(),
            points in proptest::collection::vec(0usize..4, 0..10),
        ) {
            let c = HypothesisClass::from_rows(rows).unwrap();
            let target = &c.hypotheses()[(target_pick % c.len() as u64) as usize];
            let seq: Sample = points
                .into_iter()
                .map(|x| LabeledExample { x: DomainPoint(x), y: target.eval(DomainPoint(x)) })
                .collect();
            let soa = Soa::new();
            let (out, mistakes) = soa_run(&soa, &c, &seq).unwrap();
            prop_assert!(mistakes as u32 <= ldim(&c).unwrap());
            if !seq.is_empty() {
                prop_assert_eq!(out.empirical_error(&seq).unwrap(), 0.0);
            }
        }

        #[test]
        fn soa_mistake_strictly_shrinks_ldim(
            rows in proptest::collection::vec(proptest::collection::vec(any::<bool>(), 3), 2..8),
            x in 0usize..3,
        ) {
            let c = HypothesisClass::from_rows(rows).unwrap();
            let soa = Soa::new();
            let state = soa.start(&c);
            let x = DomainPoint(x);
            let prediction = soa.predict(&state, x).unwrap();
            let wrong = c.restrict(x, !prediction);
            // a mistake happens exactly when the adversary reveals !prediction
            if !wrong.is_empty() {
                prop_assert!(ldim(&wrong).unwrap() < ldim(&c).unwrap().max(1));
            }
        }
    }
}
