use thiserror::Error;

/// Errors surfaced by the library.
///
/// Non-convergence of a solver is deliberately *not* an error: a fit that
/// runs out of iterations still returns a model, flagged as non-converged,
/// so that partial results stay diagnosable.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed user input: bad flags, unparsable files, non-finite data.
    #[error("input error: {0}")]
    Input(String),

    /// Structurally degenerate input: constant columns, duplicate design
    /// points, singular per-point Gram matrices.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A numerical procedure failed beyond recovery (NaN in iterates,
    /// root-finder breakdown, simplex cycling guard).
    #[error("numerical fault: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
