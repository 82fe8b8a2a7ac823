use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{what}: argument {value} outside the domain of definition")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("configuration grid too coarse: normalization defect {defect:e} exceeds {tolerance:e}")]
    GridTooCoarse { defect: f64, tolerance: f64 },

    #[error("{what} failed to converge (residual {residual:e})")]
    Solver { what: &'static str, residual: f64 },

    #[error(
        "fixed-point iteration did not converge after {iterations} iterations \
         (u increment {increment_u:e}, psi increment {increment_psi:e}); reduce the time step"
    )]
    FixedPoint {
        iterations: usize,
        increment_u: f64,
        increment_psi: f64,
    },

    #[error("non-finite value encountered in {0}")]
    NotFinite(&'static str),

    #[error("density field has value {min:e} below the admissible floor {floor:e}")]
    Negative { min: f64, floor: f64 },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),
}

pub type Result<T> = core::result::Result<T, Error>;
