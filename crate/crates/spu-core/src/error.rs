//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by model construction, dense oracles, the simulator and
/// the samplers.
#[derive(Debug, Error)]
pub enum Error {
    /// Model parameters outside the supported family.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// Dense-oracle guard exceeded (matrices are 2^N x 2^N).
    #[error("dense oracle guard exceeded: N={n} > {guard}")]
    OracleSize { n: usize, guard: usize },

    /// An observable that must be Hermitian is not.
    #[error("invalid observable: {0}")]
    InvalidObservable(String),

    /// A circuit references qubits outside the register layout.
    #[error("register layout error: {0}")]
    Layout(String),

    /// A state with (numerically) zero norm cannot be measured.
    #[error("degenerate state: squared norm {0:.3e} below 1e-14")]
    DegenerateState(f64),

    /// Numeric-range guard on special functions.
    #[error("argument out of range: {0}")]
    Range(String),

    /// Precondition violation on a numeric parameter.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A Markov chain could not be started: every trial label has
    /// postselection probability below 1e-14.
    #[error("dead branch for (m={m}, n={n}, k={k}): no label survives postselection")]
    DeadBranch { m: usize, n: usize, k: u8 },

    /// The denominator of the ratio estimator is consistent with zero.
    #[error("indeterminate estimate: {0}")]
    IndeterminateEstimate(String),

    /// Too few samples for the requested statistic.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Block partition of a sample set is not realizable.
    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    /// A Markov chain failed its convergence check.
    #[error("not converged: {0}")]
    NonConverged(String),
}

pub type Result<T> = std::result::Result<T, Error>;
