use thiserror::Error;

/// Errors raised by the numerical engines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not square: {0}x{1}")]
    NotSquare(usize, usize),

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("not Hermitian (max asymmetry {0:e})")]
    NotHermitian(f64),

    #[error("trace is not one (got {0})")]
    InvalidTrace(f64),

    #[error("not positive semi-definite (min eigenvalue {0:e})")]
    NotPositive(f64),

    #[error("not unitary (max deviation of U U^dagger from identity {0:e})")]
    NotUnitary(f64),

    #[error("vector has zero norm")]
    ZeroNorm,

    #[error("Hermitian eigensolver did not converge")]
    EigenNoConvergence,

    #[error("Zeno branch extinguished (survival probability {0:e})")]
    ZenoBranchExtinguished(f64),

    #[error("Euler step left physical regime, reduce dt (min eigenvalue {0:e})")]
    EulerUnphysical(f64),

    #[error("grid too coarse: spacing {spacing} exceeds {limit}")]
    GridTooCoarse { spacing: f64, limit: f64 },

    #[error("index {index} out of range for {len} classical states")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
