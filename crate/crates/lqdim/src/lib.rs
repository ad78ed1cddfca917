//! Exact and numerical analysis of L^q dimensions of self-similar measures on
//! the real line.
//!
//! The toolkit models weighted iterated function systems (WIFS) of contracting
//! similarities `f_i(x) = λ_i x + t_i` with probability weights `p_i`, and
//! computes the objects that govern the smoothness of the invariant measure
//! `μ = Σ_i p_i f_i μ`:
//!
//! * exact discrete approximants `μ_n` and their dyadic binnings `μ^(m)`,
//! * moment sums `S_m(μ,q)`, the L^q spectrum `τ(q)` and dimensions `D(q)`,
//! * separation numbers `Γ_k`, exact-overlap detection and certified rational
//!   lower bounds realizing exponential separation,
//! * subadditive (Fekete) upper bounds on `τ(q)` from exact `‖μ_n‖_q^q`,
//! * Garsia entropy `h_λ` and its L^q analog `T_{q,λ}`,
//! * Legendre transforms, multifractal interval counts and Frostman exponents,
//! * convolution-flattening experiments on `2^{-m}`-measures and branching
//!   profiles of regular tree sets,
//! * fiber counts and intersection bounds for p-Cantor sets.
//!
//! Exact kernels (arbitrary-precision rationals and real quadratic fields)
//! decide overlap questions exactly; floating point enters only where a value
//! is an estimate by nature.

#![forbid(unsafe_code)]

use thiserror::Error;

pub mod cache;
pub mod cli;
pub mod flatten;
pub mod intersect;
pub mod measure;
pub mod report;
pub mod scalar;
pub mod separation;
pub mod spectrum;
pub mod wifs;

pub use measure::{DiscreteMeasure, DyadicHistogram};
pub use scalar::Scalar;
pub use wifs::Wifs;

/// Crate-wide error type; variants map onto the CLI exit codes
/// (config/domain → 2, resource → 3, invariant violation → 4).
#[derive(Debug, Error)]
pub enum Error {
    #[error("field mismatch: cannot combine values from Q(√{0}) and Q(√{1})")]
    FieldMismatch(u64, u64),
    #[error("float scalar has no canonical key; collapse by bit equality instead")]
    NotCanonicalizable,
    #[error("invalid scalar: {0}")]
    InvalidScalar(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("empty restriction: {0}")]
    EmptyRestriction(String),
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("refused: {0}")]
    Refusal(String),
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
