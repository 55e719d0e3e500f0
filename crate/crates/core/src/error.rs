use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the toolkit.
///
/// The first group are invariant violations; their [`Error::code`] is the
/// stable name printed by the CLI and used by the model file validator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("DIM_MISMATCH: {0}")]
    DimMismatch(String),

    #[error("NON_HERMITIAN: max deviation {deviation:.3e} exceeds bound {bound:.3e}")]
    NonHermitian { deviation: f64, bound: f64 },

    #[error("NON_UNITARY: |U U^dag - I| = {deviation:.3e} exceeds bound {bound:.3e}")]
    NonUnitary { deviation: f64, bound: f64 },

    #[error("UNNORMALIZED: state norm {norm:.15} differs from 1 by more than {bound:.1e}")]
    Unnormalized { norm: f64, bound: f64 },

    #[error("UNIT_MISMATCH: {0}")]
    UnitMismatch(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("state does not fit the grid: {0}")]
    GridFit(String),

    #[error("meter function is undefined on the eigenvalue cluster at {value}")]
    UndefinedFunction { value: f64 },

    #[error("expectation has imaginary part {imag:.3e} (bound {bound:.3e}); operator is not Hermitian")]
    ComplexExpectation { imag: f64, bound: f64 },

    #[error("inconsistent moment operators: negative radicand {0:.3e}")]
    InconsistentMoments(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable identifier of the violated invariant, if any.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimMismatch(_) => "DIM_MISMATCH",
            Error::NonHermitian { .. } => "NON_HERMITIAN",
            Error::NonUnitary { .. } => "NON_UNITARY",
            Error::Unnormalized { .. } => "UNNORMALIZED",
            Error::UnitMismatch(_) => "UNIT_MISMATCH",
            Error::InvalidGrid(_) => "INVALID_GRID",
            Error::GridFit(_) => "GRID_FIT",
            Error::UndefinedFunction { .. } => "UNDEFINED_FUNCTION",
            Error::ComplexExpectation { .. } => "COMPLEX_EXPECTATION",
            Error::InconsistentMoments(_) => "INCONSISTENT_MOMENTS",
            Error::Config(_) => "CONFIG",
            Error::Parse(_) => "PARSE",
            Error::Io(_) => "IO",
        }
    }

    /// True for violations of a type invariant (as opposed to bad input
    /// parameters or I/O failures).
    pub fn is_invariant_violation(&self) -> bool {
        matches!(
            self,
            Error::DimMismatch(_)
                | Error::NonHermitian { .. }
                | Error::NonUnitary { .. }
                | Error::Unnormalized { .. }
                | Error::UnitMismatch(_)
        )
    }
}
