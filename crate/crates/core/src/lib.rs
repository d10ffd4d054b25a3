//! Online-learnable hypothesis classes over finite domains.
//!
//! The crate revolves around extensional hypothesis classes (bit matrices over
//! a finite input set) and the quantities attached to them:
//!
//! - [`core`]: domains, hypotheses, samples, realizable distributions, and
//!   reproducible randomness.
//! - [`littlestone`]: the Littlestone dimension (recursive and by exhaustive
//!   mistake-tree search), the standard optimal algorithm (SOA), and the
//!   worst-case online game.
//! - [`stable`]: a globally stable learner built from recursive SOA
//!   tournaments, plus empirical stability measurement.
//! - [`boost`]: the frequency-boosting majority wrapper around a stable
//!   learner.
//! - [`info`]: entropy / mutual-information measurement (exact enumeration
//!   and Monte Carlo) and the closed-form output-entropy bounds.
//! - [`affine`]: indicator functions of affine subspaces over prime fields,
//!   the hull-of-positives SOA, and the coin-free stable learner they admit.

pub mod affine;
pub mod boost;
pub mod core;
pub mod info;
pub mod littlestone;
pub mod stable;
