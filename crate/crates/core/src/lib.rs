//! Numerical laboratory for the degenerate drift-diffusion equation
//! `u_t = div(grad(u^m) + u V)` with `m > 1` and no-flux boundaries.
//!
//! The crate provides a conservative explicit finite-volume solver, the
//! singular drift-field constructions it is exercised against, closed-form
//! barrier profiles with numeric sign certification, regularity diagnostics
//! (oscillations, Hölder seminorms, level-set measures), executable growth
//! recurrences, and a reproducible experiment registry.
//!
//! All reductions use a fixed-shape pairwise tree, so results are bitwise
//! identical regardless of worker count. The `parallel` feature (default)
//! enables rayon data-parallel kernels; without it every kernel falls back
//! to the sequential path.

pub mod barriers;
pub mod diagnostics;
pub mod drift;
pub mod experiments;
pub mod grid;
pub mod io;
pub mod ops;
pub mod oracles;
pub mod quad;
pub mod recurrences;
pub mod reduce;
pub mod sampling;
pub mod solver;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("non-finite value in {what} at cell {cell} (flat index {index})")]
    NonFinite {
        what: &'static str,
        cell: String,
        index: usize,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("time step infeasible: {0}")]
    CflInfeasible(String),
    #[error("negativity beyond tolerance at cell {cell}: value {value:.3e} (floor {floor:.3e})")]
    Negativity {
        cell: String,
        value: f64,
        floor: f64,
    },
    #[error("range error: {0}")]
    OutOfRange(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Execution mode for kernels that have both sequential and data-parallel
/// implementations. `Parallel` falls back to the sequential path when the
/// `parallel` feature is disabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    Parallel,
}

impl Default for ExecMode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}
