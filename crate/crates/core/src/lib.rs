//! Numerical toolkit for min-entropy sampling and bounded-storage key expansion.
//!
//! The crate has two halves. The first is a desk-scale verification stack for
//! quantum conditional min-entropy: dense operator algebra ([`operator`]),
//! conditional operators and min-entropy certificates ([`entropy`]), the
//! entropy-splitting / recombining tree machinery ([`splitting`]) and
//! averaging-sampler parameter calculators ([`sampling`]). The second is a
//! production-shaped streaming pipeline: two-universal Toeplitz hashing
//! ([`extractor`]) and the recursive sample-and-hash protocols for huge
//! randomizer files ([`bsm`]).

pub mod bsm;
pub mod entropy;
pub mod extractor;
pub mod operator;
pub mod random;
pub mod report;
pub mod sampling;
pub mod splitting;
pub mod verify;

/// Hermiticity tolerance, relative to the largest matrix entry.
pub const HERMITICITY_TOL: f64 = 1e-12;

/// Global rank/support cutoff: eigenvalues at or below `RANK_TOL * lambda_max`
/// count as zero wherever a generalized inverse or support projector appears.
pub const RANK_TOL: f64 = 1e-10;

/// Total-dimension cap for dense operators.
pub const DIM_CAP: usize = 256;
