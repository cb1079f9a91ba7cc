use thiserror::Error;

/// Crate-wide error type. Variants are grouped so callers (notably the CLI)
/// can distinguish input/validation problems from numerical failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid map spec: {0}")]
    MapSpec(String),

    #[error("mesh invariant violated: {0}")]
    MeshInvariant(String),

    #[error("invalid distribution: {0}")]
    Distribution(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("point ({0}, {1}) is outside the free space")]
    OutsideDomain(f64, f64),

    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("SOCP did not converge: primal {primal:.3e}, dual {dual:.3e} after {iterations} iterations")]
    SocpNonConvergence {
        primal: f64,
        dual: f64,
        iterations: usize,
    },

    #[error("integrator escaped the mesh by {distance:.3e} map units at ({0}, {1})", point[0], point[1])]
    IntegratorEscape { point: [f64; 2], distance: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// True for errors caused by bad inputs rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::MapSpec(_)
                | Error::MeshInvariant(_)
                | Error::Distribution(_)
                | Error::Parse { .. }
                | Error::Io(_)
                | Error::OutsideDomain(..)
                | Error::SizeMismatch { .. }
                | Error::InvalidArgument(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
