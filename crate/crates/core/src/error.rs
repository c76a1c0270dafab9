use thiserror::Error;

/// Errors raised by the preamble, bound and estimation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The Fisher information is singular, e.g. only two retained blocks.
    #[error("degenerate Fisher information: {0}")]
    DegenerateFim(String),

    /// The approximate bound has a nonpositive denominator.
    #[error("invalid regime: {0}")]
    InvalidRegime(String),

    #[error("no root of the angle optimality condition bracketed for M = {0}")]
    NoRootBracketed(usize),

    #[error("estimate undefined: correlation has zero magnitude")]
    UndefinedAngle,

    #[error("matrix not positive definite: {0}")]
    NotPositiveDefinite(String),
}

impl Error {
    /// Stable snake_case identifier, used in structured error output.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::DegenerateFim(_) => "degenerate_fim",
            Error::InvalidRegime(_) => "invalid_regime",
            Error::NoRootBracketed(_) => "no_root_bracketed",
            Error::UndefinedAngle => "undefined_angle",
            Error::NotPositiveDefinite(_) => "not_positive_definite",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
