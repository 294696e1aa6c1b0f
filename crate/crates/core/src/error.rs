//! Error type shared across the solver and harness.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid resolution: {0}")]
    InvalidResolution(String),
    #[error("argument out of range: {0}")]
    OutOfRange(String),
    #[error("field shape does not match grid: {0}")]
    ShapeMismatch(String),
    #[error("unknown boundary condition: {0}")]
    UnknownBc(String),
    #[error("barotropic constraint violated: residual {residual:.3e} exceeds {limit:.3e}")]
    ConstraintViolated { residual: f64, limit: f64 },
    #[error("time step {dt:.3e} exceeds CFL limit {limit:.3e}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("elliptic solve did not converge: residual {residual:.3e} after {iters} iterations")]
    EllipticDivergence { residual: f64, iters: usize },
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("singular tridiagonal system")]
    SingularSystem,
    #[error("empty diagnostic series")]
    EmptySeries,
    #[error("series length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("ensemble needs at least 2 members, got {0}")]
    InsufficientMembers(usize),
    #[error("config parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("config validation error for key `{key}`: {msg}")]
    Validation { key: String, msg: String },
    #[error("identity battery failed: {0}")]
    BatteryFailure(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 1 validation/parse, 2 numerical, 3 i/o.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 3,
            Error::ConstraintViolated { .. }
            | Error::CflViolation { .. }
            | Error::EllipticDivergence { .. }
            | Error::NonFinite(_)
            | Error::SingularSystem
            | Error::BatteryFailure(_) => 2,
            _ => 1,
        }
    }
}
