//! Rank-dependent risk evaluation and its distributionally robust counterpart
//! over phi-divergence balls.
//!
//! The objects here are finite scenario models: outcomes `x_1..x_m` with a
//! nominal probability vector `p`. A distortion function `h` reweights tail
//! probabilities, a utility `u` rescales outcomes, and the risk of a position
//! is the distorted expectation of `-u(x)` computed on outcomes ranked in
//! descending order. The robust version takes the supremum of that evaluation
//! over all probability vectors within phi-divergence radius `r` of `p`.
//!
//! Crate layout:
//! - [`measures`]: distortion and divergence catalogs, conjugates,
//!   perspectives, probability vectors, chi-square radius calibration.
//! - [`pwl`]: piecewise-linear under/over-approximation of distortions and
//!   the concave/convex split of inverse-S curves.
//! - [`kernel`]: the in-repo solving kernel (dense simplex, cutting-plane
//!   convex minimizer, concave maximization over divergence balls, global
//!   tail-sum maximization, Kelley min-max).
//! - [`rdu`]: ranked evaluation, Choquet integrals against capacities, the
//!   worst-case evaluator, and the composite-vector lift.
//! - [`reformulations`]: finite convex programs equivalent to the nominal and
//!   robust evaluations, for fixed positions and for decision variables.
//! - [`algorithms`]: outer cutting-plane loops producing certified bounds.
//! - [`sampling`]: Hit-and-Run sampling of divergence balls.
//! - [`experiments`]: newsvendor and portfolio studies plus the CLI runners.

pub mod algorithms;
pub mod experiments;
pub mod kernel;
pub mod measures;
pub mod pwl;
pub mod rdu;
pub mod reformulations;
pub mod rng;
pub mod sampling;
pub mod verify;

/// Hard cap on 2^m subset enumeration (memberships, exact reformulations,
/// capacities). Above this the exact paths refuse rather than thrash.
pub const EXP_ENUM_CAP: usize = 12;

/// Hard cap on scenario count for exact ranking-cell enumeration.
pub const RANK_CELL_CAP: usize = 7;

/// Budget of piece-assignment subproblems for the global tail-sum maximizer.
pub const TAIL_ASSIGN_BUDGET: usize = 100_000;

/// Default cap on outer cutting-plane iterations.
pub const CUT_CAP: usize = 200;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("size cap exceeded: {0}")]
    CapExceeded(String),
    #[error("solver did not converge: {0}")]
    NotConverged(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("unbounded: {0}")]
    Unbounded(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// CLI exit code mapping: validation and modeling errors exit 2,
    /// solver non-convergence exits 3.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NotConverged(_) => 3,
            _ => 2,
        }
    }
}
