use thiserror::Error;

/// Errors raised by model validation, simulation and quadrature.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error in `{field}`: {reason}")]
    Domain { field: &'static str, reason: String },

    #[error("correlation matrix over (exposure, trigger B, trigger C) is not positive semi-definite (pivot {pivot} = {value:e})")]
    NonPsdCorrelation { pivot: usize, value: f64 },

    #[error("invalid time grid: {0}")]
    Grid(String),

    #[error("payoff {output} is not finite on path {path}")]
    NonFinitePayoff { path: u64, output: usize },

    #[error("adaptive quadrature did not reach tolerance {tolerance:e} within {subdivisions} subdivisions (estimated error {error:e})")]
    QuadratureFailure {
        tolerance: f64,
        subdivisions: usize,
        error: f64,
    },

    #[error("tranche premium leg is not positive ({denominator:e}); the tranche is wiped out")]
    DegeneratePool { denominator: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    pub(crate) fn domain(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Domain {
            field,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
