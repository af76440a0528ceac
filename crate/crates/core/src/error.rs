use thiserror::Error;

/// Errors raised by the library.
///
/// The variants map one-to-one onto the CLI exit-code classes, so callers can
/// translate without inspecting messages.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An evaluation point fell outside `[-1, 1]`.
    #[error("domain error: {0}")]
    Domain(String),

    /// A parameter is out of its documented range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The smoothness index is too small for the requested derivative order.
    #[error("admissibility violated: {0}")]
    Admissibility(String),

    /// No witness pair can be built with the requested parameters.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// Malformed serialized input.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A numerical routine failed to converge.
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_unit_interval(t: f64) -> Result<()> {
    if t.is_nan() || t.abs() > 1.0 {
        return Err(Error::Domain(format!("point {t} lies outside [-1, 1]")));
    }
    Ok(())
}
