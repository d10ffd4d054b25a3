//! Indicator functions of affine subspaces of `F_q^l` (q prime): exact
//! hulls by row reduction, the hull-of-positives SOA, and the coin-free
//! stable learner this class admits.
//!
//! The structural facts the learner leans on: the SOA output for a
//! realizable sample is the affine hull of its positively labeled points,
//! and when two hull predictors disagree at a point, that point lies in one
//! of the hulls, hence in the target subspace, so its true label is 1. The
//! tournament therefore never needs a random label choice.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{BitRow, Hypothesis, HypothesisClass, RandomSource};
use crate::littlestone::LittlestoneError;
use crate::stable::TournamentConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AffineError {
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("coordinate {value} out of range for F_{q}")]
    BadCoordinate { value: u64, q: u64 },
    #[error("ambient dimension mismatch: {left} vs {right}")]
    AmbientMismatch { left: usize, right: usize },
    #[error("affine hull of an empty point set is undefined")]
    EmptyHull,
    #[error("sequence not realizable: {reason} at example {index}")]
    NonRealizable { index: usize, reason: String },
    #[error("grid size {size} exceeds the guard {limit}")]
    GridGuard { size: u64, limit: u64 },
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error(transparent)]
    Littlestone(#[from] LittlestoneError),
    #[error(transparent)]
    Core(#[from] crate::core::CoreError),
}

pub fn is_prime(q: u64) -> bool {
    if q < 2 {
        return false;
    }
    let mut f = 2;
    while f * f <= q {
        if q.is_multiple_of(f) {
            return false;
        }
        f += 1;
    }
    true
}

fn mod_inv(a: u64, q: u64) -> u64 {
    // Fermat: a^(q-2) mod q
    let mut base = a % q;
    let mut exp = q - 2;
    let mut acc = 1u64;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * base % q;
        }
        base = base * base % q;
        exp >>= 1;
    }
    acc
}

/// A point of `F_q^l`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FqVector {
    pub q: u64,
    pub coords: Vec<u64>,
}

impl FqVector {
    pub fn new(q: u64, coords: Vec<u64>) -> Result<Self, AffineError> {
        if !is_prime(q) {
            return Err(AffineError::NotPrime(q));
        }
        if let Some(&value) = coords.iter().find(|&&c| c >= q) {
            return Err(AffineError::BadCoordinate { value, q });
        }
        Ok(FqVector { q, coords })
    }

    pub fn zero(q: u64, l: usize) -> Self {
        FqVector {
            q,
            coords: vec![0; l],
        }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|&c| c == 0)
    }

    fn sub(&self, other: &FqVector) -> FqVector {
        let coords = self
            .coords
            .iter()
            .zip(&other.coords)
            .map(|(&a, &b)| (a + self.q - b) % self.q)
            .collect();
        FqVector { q: self.q, coords }
    }

    fn sub_scaled(&self, other: &FqVector, scale: u64) -> FqVector {
        let q = self.q;
        let coords = self
            .coords
            .iter()
            .zip(&other.coords)
            .map(|(&a, &b)| (a + (q - scale % q) * b) % q)
            .collect();
        FqVector { q, coords }
    }

    fn add_scaled(&self, other: &FqVector, scale: u64) -> FqVector {
        let q = self.q;
        let coords = self
            .coords
            .iter()
            .zip(&other.coords)
            .map(|(&a, &b)| (a + scale % q * b) % q)
            .collect();
        FqVector { q, coords }
    }

    /// Lexicographic rank within the grid (coordinate 0 most significant).
    pub fn grid_index(&self) -> usize {
        self.coords
            .iter()
            .fold(0usize, |acc, &c| acc * self.q as usize + c as usize)
    }

    pub fn from_grid_index(q: u64, l: usize, mut index: usize) -> Self {
        let mut coords = vec![0u64; l];
        for slot in coords.iter_mut().rev() {
            *slot = (index % q as usize) as u64;
            index /= q as usize;
        }
        FqVector { q, coords }
    }
}

/// Iterate the whole grid `F_q^l` in lexicographic order.
pub fn grid(q: u64, l: usize) -> impl Iterator<Item = FqVector> {
    let size = (q as usize).pow(l as u32);
    (0..size).map(move |i| FqVector::from_grid_index(q, l, i))
}

pub fn grid_size_checked(q: u64, l: usize, limit: u64) -> Result<u64, AffineError> {
    q.checked_pow(l as u32)
        .filter(|&s| s <= limit)
        .ok_or(AffineError::GridGuard {
            size: u64::MAX,
            limit,
        })
}

/// An affine subspace of `F_q^l` in canonical form: a reduced-row-echelon
/// basis of the direction space and the lexicographically minimal member as
/// basepoint (its coordinates vanish at every pivot column). `dim = -1`
/// encodes the empty subspace, whose indicator is the all-zero function.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "SubspaceFile", into = "SubspaceFile")]
pub struct AffineSubspace {
    q: u64,
    l: usize,
    basepoint: Option<FqVector>,
    basis: Vec<FqVector>,
}

/// Wire form: `{"q": .., "l": .., "basepoint": [..] | null, "basis": [[..]]}`.
#[derive(Serialize, Deserialize)]
struct SubspaceFile {
    q: u64,
    l: usize,
    basepoint: Option<Vec<u64>>,
    basis: Vec<Vec<u64>>,
}

impl From<AffineSubspace> for SubspaceFile {
    fn from(s: AffineSubspace) -> SubspaceFile {
        SubspaceFile {
            q: s.q,
            l: s.l,
            basepoint: s.basepoint.map(|b| b.coords),
            basis: s.basis.into_iter().map(|b| b.coords).collect(),
        }
    }
}

impl TryFrom<SubspaceFile> for AffineSubspace {
    type Error = AffineError;

    fn try_from(f: SubspaceFile) -> Result<Self, AffineError> {
        match f.basepoint {
            None => {
                if !f.basis.is_empty() {
                    return Err(AffineError::BadParams(
                        "empty subspace cannot carry basis vectors".into(),
                    ));
                }
                Ok(AffineSubspace::empty(f.q, f.l))
            }
            Some(base) => {
                let base = FqVector::new(f.q, base)?;
                if base.len() != f.l {
                    return Err(AffineError::AmbientMismatch {
                        left: base.len(),
                        right: f.l,
                    });
                }
                let mut points = vec![base.clone()];
                for row in f.basis {
                    let dir = FqVector::new(f.q, row)?;
                    if dir.len() != f.l {
                        return Err(AffineError::AmbientMismatch {
                            left: dir.len(),
                            right: f.l,
                        });
                    }
                    points.push(base.add_scaled(&dir, 1));
                }
                // re-canonicalize whatever came off the wire
                affine_hull(&points)
            }
        }
    }
}

/// Row-reduce `rows` to reduced echelon form over F_q; returns the nonzero
/// rows sorted by pivot column.
fn rref(mut rows: Vec<FqVector>, q: u64) -> Vec<FqVector> {
    let l = rows.first().map_or(0, FqVector::len);
    let mut reduced: Vec<FqVector> = Vec::new();
    for col in 0..l {
        let Some(pos) = rows.iter().position(|r| r.coords[col] != 0) else {
            continue;
        };
        let mut pivot = rows.swap_remove(pos);
        let inv = mod_inv(pivot.coords[col], q);
        pivot.coords = pivot.coords.iter().map(|&c| c * inv % q).collect();
        for r in rows.iter_mut() {
            if r.coords[col] != 0 {
                *r = r.sub_scaled(&pivot, r.coords[col]);
            }
        }
        for r in reduced.iter_mut() {
            if r.coords[col] != 0 {
                *r = r.sub_scaled(&pivot, r.coords[col]);
            }
        }
        reduced.push(pivot);
    }
    reduced.sort_by_key(|r| r.coords.iter().position(|&c| c != 0));
    reduced
}

impl AffineSubspace {
    /// The empty subspace (all-zero indicator).
    pub fn empty(q: u64, l: usize) -> Self {
        AffineSubspace {
            q,
            l,
            basepoint: None,
            basis: Vec::new(),
        }
    }

    /// The single-point subspace.
    pub fn point(p: FqVector) -> Self {
        AffineSubspace {
            q: p.q,
            l: p.len(),
            basepoint: Some(p),
            basis: Vec::new(),
        }
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn ambient_dim(&self) -> usize {
        self.l
    }

    /// Subspace dimension; -1 for the empty subspace.
    pub fn dim(&self) -> i32 {
        match &self.basepoint {
            None => -1,
            Some(_) => self.basis.len() as i32,
        }
    }

    pub fn basepoint(&self) -> Option<&FqVector> {
        self.basepoint.as_ref()
    }

    pub fn basis(&self) -> &[FqVector] {
        &self.basis
    }

    /// Membership: reduce `x - basepoint` against the basis and test for a
    /// zero remainder.
    pub fn contains(&self, x: &FqVector) -> Result<bool, AffineError> {
        if x.len() != self.l {
            return Err(AffineError::AmbientMismatch {
                left: x.len(),
                right: self.l,
            });
        }
        let Some(base) = &self.basepoint else {
            return Ok(false);
        };
        let mut rem = x.sub(base);
        for row in &self.basis {
            let pivot = row
                .coords
                .iter()
                .position(|&c| c != 0)
                .expect("nonzero basis row");
            if rem.coords[pivot] != 0 {
                rem = rem.sub_scaled(row, rem.coords[pivot]);
            }
        }
        Ok(rem.is_zero())
    }

    /// The smallest affine subspace containing this one and `x`.
    pub fn extend(&self, x: &FqVector) -> Result<AffineSubspace, AffineError> {
        if x.len() != self.l {
            return Err(AffineError::AmbientMismatch {
                left: x.len(),
                right: self.l,
            });
        }
        match &self.basepoint {
            None => Ok(AffineSubspace::point(x.clone())),
            Some(base) => {
                if self.contains(x)? {
                    return Ok(self.clone());
                }
                let mut rows = self.basis.clone();
                rows.push(x.sub(base));
                let basis = rref(rows, self.q);
                Ok(AffineSubspace {
                    q: self.q,
                    l: self.l,
                    basepoint: Some(canonical_basepoint(base, &basis)),
                    basis,
                })
            }
        }
    }

    /// All `q^dim` members, in no particular order.
    pub fn members(&self) -> Vec<FqVector> {
        let Some(base) = &self.basepoint else {
            return Vec::new();
        };
        let mut out = vec![base.clone()];
        for row in &self.basis {
            let mut next = Vec::with_capacity(out.len() * self.q as usize);
            for point in &out {
                for c in 0..self.q {
                    next.push(point.add_scaled(row, c));
                }
            }
            out = next;
        }
        out
    }

    /// The indicator bit-row over the grid, in lexicographic point order.
    pub fn indicator_row(&self) -> Result<Vec<bool>, AffineError> {
        let size = grid_size_checked(self.q, self.l, 1 << 20)?;
        let mut bits = vec![false; size as usize];
        for member in self.members() {
            bits[member.grid_index()] = true;
        }
        Ok(bits)
    }

    /// The indicator as a free-standing hypothesis over the grid domain.
    pub fn indicator_hypothesis(&self) -> Result<Hypothesis, AffineError> {
        Ok(Hypothesis::from_labels(BitRow::new(self.indicator_row()?)))
    }
}

/// Zero out the pivot coordinates of `base` using the echelon basis; the
/// result is the lexicographically minimal member of the coset.
fn canonical_basepoint(base: &FqVector, basis: &[FqVector]) -> FqVector {
    let mut rep = base.clone();
    for row in basis {
        let pivot = row
            .coords
            .iter()
            .position(|&c| c != 0)
            .expect("nonzero basis row");
        if rep.coords[pivot] != 0 {
            rep = rep.sub_scaled(row, rep.coords[pivot]);
        }
    }
    rep
}

/// The affine hull of a nonempty point set: translate to the first point,
/// row-reduce the differences, and canonicalize.
pub fn affine_hull(points: &[FqVector]) -> Result<AffineSubspace, AffineError> {
    let base = points.first().ok_or(AffineError::EmptyHull)?;
    let q = base.q;
    let l = base.len();
    for p in points {
        if p.len() != l {
            return Err(AffineError::AmbientMismatch {
                left: p.len(),
                right: l,
            });
        }
    }
    let dirs: Vec<FqVector> = points[1..].iter().map(|p| p.sub(base)).collect();
    let basis = rref(dirs, q);
    Ok(AffineSubspace {
        q,
        l,
        basepoint: Some(canonical_basepoint(base, &basis)),
        basis,
    })
}

/// A labeled example over the grid.
pub type FqExample = (FqVector, bool);

/// Result of a hull-SOA run: the final hull predictor and the mistakes made.
#[derive(Debug, Clone, PartialEq)]
pub struct HullSoaRun {
    pub predictor: AffineSubspace,
    pub mistakes: usize,
}

/// The online hull-of-positives SOA for subspaces of dimension at most `d`:
/// predict membership in the hull of the positives seen so far; grow the
/// hull on every positive surprise. The final predictor is exactly the
/// indicator of the affine hull of the sequence's positive points.
///
/// A positive that pushes the hull past dimension `d`, or a negative inside
/// the hull, means the sequence is not realizable.
pub fn hull_soa_run(
    q: u64,
    l: usize,
    d: u32,
    sequence: &[FqExample],
) -> Result<HullSoaRun, AffineError> {
    let mut hull = AffineSubspace::empty(q, l);
    let mut mistakes = 0usize;
    for (index, (x, y)) in sequence.iter().enumerate() {
        let prediction = hull.contains(x)?;
        if prediction != *y {
            mistakes += 1;
        }
        if *y && !prediction {
            hull = hull.extend(x)?;
            if hull.dim() > d as i32 {
                return Err(AffineError::NonRealizable {
                    index,
                    reason: format!("positive point raises the hull past dimension {d}"),
                });
            }
        } else if !*y && prediction {
            return Err(AffineError::NonRealizable {
                index,
                reason: "negative point inside the hull of positives".into(),
            });
        }
    }
    Ok(HullSoaRun {
        predictor: hull,
        mistakes,
    })
}

/// `H_{d,l}` over `F_q`: parameters of the enumerated class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffineClassParams {
    pub q: u64,
    pub l: usize,
    pub d: u32,
}

impl AffineClassParams {
    pub fn validate(&self) -> Result<(), AffineError> {
        if !is_prime(self.q) {
            return Err(AffineError::NotPrime(self.q));
        }
        if (self.d as usize) >= self.l {
            return Err(AffineError::BadParams(format!(
                "need d < l, got d = {}, l = {}",
                self.d, self.l
            )));
        }
        Ok(())
    }
}

const ENUMERATION_GRID_LIMIT: u64 = 64;

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k);
    fn go(start: usize, n: usize, k: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for i in start..n {
            current.push(i);
            go(i + 1, n, k, current, out);
            current.pop();
        }
    }
    go(0, n, k, &mut current, &mut out);
    out
}

/// Every affine subspace of `F_q^l` of dimension at most `d`, in canonical
/// form: enumerate reduced-echelon direction bases by pivot pattern, then
/// all canonical basepoints per direction space.
pub fn enumerate_subspaces(params: &AffineClassParams) -> Result<Vec<AffineSubspace>, AffineError> {
    params.validate()?;
    grid_size_checked(params.q, params.l, ENUMERATION_GRID_LIMIT)?;
    let (q, l) = (params.q, params.l);
    let mut subspaces = vec![AffineSubspace::empty(q, l)];
    for t in 0..=params.d as usize {
        for pivots in combinations(l, t) {
            // free cells: non-pivot columns to the right of each pivot
            let mut free_cells: Vec<(usize, usize)> = Vec::new();
            for (row, &p) in pivots.iter().enumerate() {
                for col in p + 1..l {
                    if !pivots.contains(&col) {
                        free_cells.push((row, col));
                    }
                }
            }
            let assignments = (q as usize).pow(free_cells.len() as u32);
            for mut code in 0..assignments {
                let mut basis = Vec::with_capacity(t);
                for &p in &pivots {
                    let mut row = vec![0u64; l];
                    row[p] = 1;
                    basis.push(FqVector { q, coords: row });
                }
                for &(row, col) in &free_cells {
                    basis[row].coords[col] = (code % q as usize) as u64;
                    code /= q as usize;
                }
                // canonical basepoints vanish on every pivot column
                let free_cols: Vec<usize> = (0..l).filter(|c| !pivots.contains(c)).collect();
                for mut point_code in 0..(q as usize).pow(free_cols.len() as u32) {
                    let mut base = vec![0u64; l];
                    for &col in &free_cols {
                        base[col] = (point_code % q as usize) as u64;
                        point_code /= q as usize;
                    }
                    subspaces.push(AffineSubspace {
                        q,
                        l,
                        basepoint: Some(FqVector { q, coords: base }),
                        basis: basis.clone(),
                    });
                }
            }
        }
    }
    Ok(subspaces)
}

/// The extensional hypothesis class of `H_{d,l}` over the grid domain,
/// including the all-zero function.
pub fn enumerate_affine_class(params: &AffineClassParams) -> Result<HypothesisClass, AffineError> {
    let rows = enumerate_subspaces(params)?
        .iter()
        .map(|s| s.indicator_row())
        .collect::<Result<Vec<_>, _>>()?;
    Ok(HypothesisClass::from_rows(rows)?)
}

/// A distribution over the grid whose labels come from a target subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineDistribution {
    q: u64,
    l: usize,
    pmf: Vec<f64>,
    target: AffineSubspace,
}

impl AffineDistribution {
    pub fn new(pmf: Vec<f64>, target: AffineSubspace) -> Result<Self, AffineError> {
        let size = grid_size_checked(target.q, target.l, 1 << 20)?;
        if pmf.len() != size as usize {
            return Err(AffineError::AmbientMismatch {
                left: pmf.len(),
                right: size as usize,
            });
        }
        let sum: f64 = pmf.iter().sum();
        if pmf.iter().any(|&p| p.is_nan() || p < 0.0) || (sum - 1.0).abs() > 1e-12 {
            return Err(AffineError::BadParams(format!("pmf sums to {sum}")));
        }
        Ok(AffineDistribution {
            q: target.q,
            l: target.l,
            pmf,
            target,
        })
    }

    /// Uniform over the whole grid.
    pub fn uniform(target: AffineSubspace) -> Result<Self, AffineError> {
        let size = grid_size_checked(target.q, target.l, 1 << 20)? as usize;
        Self::new(vec![1.0 / size as f64; size], target)
    }

    /// Uniform over the members of the target subspace (positives only).
    pub fn uniform_on_target(target: AffineSubspace) -> Result<Self, AffineError> {
        let size = grid_size_checked(target.q, target.l, 1 << 20)? as usize;
        let members = target.members();
        if members.is_empty() {
            return Err(AffineError::BadParams("target has no members".into()));
        }
        let mut pmf = vec![0.0; size];
        for m in &members {
            pmf[m.grid_index()] = 1.0 / members.len() as f64;
        }
        Self::new(pmf, target)
    }

    pub fn target(&self) -> &AffineSubspace {
        &self.target
    }

    pub fn label(&self, x: &FqVector) -> Result<bool, AffineError> {
        self.target.contains(x)
    }

    pub fn draw(&self, n: usize, source: &RandomSource) -> Result<Vec<FqExample>, AffineError> {
        use rand::Rng;
        let mut rng = source.rng();
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut index = self.pmf.len() - 1;
                for (i, &p) in self.pmf.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        index = i;
                        break;
                    }
                }
                let x = FqVector::from_grid_index(self.q, self.l, index);
                let y = self.label(&x)?;
                Ok((x, y))
            })
            .collect()
    }

    /// `Pr[predictor(x) != target(x)]`, summed exactly over the grid.
    pub fn true_error(&self, predictor: &AffineSubspace) -> Result<f64, AffineError> {
        let mut err = 0.0;
        for (i, &p) in self.pmf.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let x = FqVector::from_grid_index(self.q, self.l, i);
            if predictor.contains(&x)? != self.target.contains(&x)? {
                err += p;
            }
        }
        Ok(err)
    }
}

/// One entry of the affine tournament sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineEntry {
    pub x: FqVector,
    pub y: bool,
    pub hallucinated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineTournamentOutcome {
    pub entries: Vec<AffineEntry>,
    pub predictor: AffineSubspace,
    pub agreed: bool,
}

fn examples(entries: &[AffineEntry]) -> Vec<FqExample> {
    entries.iter().map(|e| (e.x.clone(), e.y)).collect()
}

/// The coin-free affine tournament. At a disagreement point the true label
/// is 1, so the two branches collapse into the single continuation that
/// appends `(x, 1)` to the branch whose predictor says 0 there (forcing the
/// extra mistake and the hull growth).
pub fn affine_tournament(
    t: u32,
    params: &AffineClassParams,
    dist: &AffineDistribution,
    leaf_size: usize,
    source: &RandomSource,
) -> Result<AffineTournamentOutcome, AffineError> {
    if t == 0 {
        let drawn = dist.draw(leaf_size, &source.derive(0))?;
        let run = hull_soa_run(params.q, params.l, params.d, &drawn)?;
        let entries = drawn
            .into_iter()
            .map(|(x, y)| AffineEntry {
                x,
                y,
                hallucinated: false,
            })
            .collect();
        return Ok(AffineTournamentOutcome {
            entries,
            predictor: run.predictor,
            agreed: false,
        });
    }
    let left = affine_tournament(t - 1, params, dist, leaf_size, &source.derive(1))?;
    let right = affine_tournament(t - 1, params, dist, leaf_size, &source.derive(2))?;
    if left.predictor == right.predictor {
        return Ok(AffineTournamentOutcome {
            agreed: true,
            ..left
        });
    }
    let disagreement = grid(params.q, params.l)
        .find(|x| {
            left.predictor.contains(x).unwrap_or(false)
                != right.predictor.contains(x).unwrap_or(false)
        })
        .expect("distinct canonical subspaces have distinct members");
    let base = if left.predictor.contains(&disagreement)? {
        right
    } else {
        left
    };
    let mut entries = base.entries;
    entries.push(AffineEntry {
        x: disagreement,
        y: true,
        hallucinated: true,
    });
    let run = hull_soa_run(params.q, params.l, params.d, &examples(&entries))?;
    Ok(AffineTournamentOutcome {
        entries,
        predictor: run.predictor,
        agreed: false,
    })
}

/// One run of the modified (coin-free) stable learner.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineGsRun {
    pub predictor: AffineSubspace,
    pub level: u32,
    pub entries: Vec<AffineEntry>,
    pub prefix: Vec<FqExample>,
}

/// The modified stable learner for affine-subspace indicators: uniform
/// level draw, coin-free tournament, then a fresh consistency prefix of
/// `cfg.n1` examples. Every appended disagreement point is checked against
/// the target; its label is always genuinely 1.
pub fn stable_affine_learn(
    params: &AffineClassParams,
    dist: &AffineDistribution,
    cfg: &TournamentConfig,
    source: &RandomSource,
) -> Result<AffineGsRun, AffineError> {
    params.validate()?;
    if cfg.leaf_size == 0 || cfg.n1 == 0 {
        return Err(AffineError::BadParams(
            "leaf_size and n1 must be at least 1".into(),
        ));
    }
    let level = source.derive(0).below(u64::from(cfg.max_level) + 1) as u32;
    let outcome = affine_tournament(level, params, dist, cfg.leaf_size, &source.derive(1))?;
    for entry in outcome.entries.iter().filter(|e| e.hallucinated) {
        debug_assert!(
            dist.label(&entry.x)?,
            "hallucinated label contradicts target"
        );
        if !dist.label(&entry.x)? {
            return Err(AffineError::NonRealizable {
                index: 0,
                reason: "hallucinated point falls outside the target subspace".into(),
            });
        }
    }
    let prefix = dist.draw(cfg.n1, &source.derive(2))?;
    let mut full = examples(&outcome.entries);
    full.extend(prefix.iter().cloned());
    let run = hull_soa_run(params.q, params.l, params.d, &full)?;
    Ok(AffineGsRun {
        predictor: run.predictor,
        level,
        entries: outcome.entries,
        prefix,
    })
}

/// Position of a subspace's indicator inside an enumerated class.
pub fn indicator_id(
    class: &HypothesisClass,
    subspace: &AffineSubspace,
) -> Result<Option<usize>, AffineError> {
    let row = subspace.indicator_row()?;
    Ok(class
        .hypotheses()
        .iter()
        .position(|h| h.labels.bits() == row.as_slice()))
}
