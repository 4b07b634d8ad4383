//! Error type shared by all solver modules.

use thiserror::Error;

/// Failure categories surfaced by the solver.
///
/// The CLI maps these onto distinct exit codes, so variants are grouped by
/// what the caller can do about them rather than by module.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid user input: config files, CLI arguments, experiment specs.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Mesh construction or validation failed.
    #[error("mesh error: {0}")]
    Mesh(String),

    /// Finite element assembly failed (e.g. a coefficient is not SPD).
    #[error("assembly error: {0}")]
    Assembly(String),

    /// Operand sizes do not match.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The Krylov iteration hit its subspace cap and sub-stepping limit
    /// without meeting the requested tolerance.
    #[error("Krylov iteration did not converge: {0}")]
    KrylovNoConvergence(String),

    /// The time integration produced non-finite values or left the
    /// configured stability ball.
    #[error("solver diverged: {0}")]
    Diverged(String),

    /// A numerical kernel failed in a way that does not fit the categories
    /// above (singular factorization, ill-posed fit, ...).
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Io(std::io::Error::other(format!("csv: {other:?}"))),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
