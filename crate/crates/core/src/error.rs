use thiserror::Error;

/// Failure modes shared by the analytical and simulation engines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The gamma-function poles of a Mellin-Barnes kernel cannot be separated
    /// by a vertical contour, or an argument lies outside the domain.
    #[error("ill-posed contour integral: {0}")]
    IllPosed(String),

    #[error("contour integral did not converge: value {value:e}, estimate {estimate:e} after {nodes} nodes")]
    NonConvergence { value: f64, estimate: f64, nodes: usize },

    #[error("quadrature did not converge: value {value:e}, error estimate {error:e}")]
    Quadrature { value: f64, error: f64 },

    #[error("overflow: {0}")]
    Overflow(String),

    /// A degenerate distribution (e.g. no interferers) was asked for a density.
    #[error("degenerate distribution: {0}")]
    Degenerate(String),

    /// The CDF never reaches the requested level; in as-published mode this is
    /// the (1-rho)^(Nm) mass ceiling.
    #[error("quantile {target} unreachable: CDF ceiling is {ceiling:e}")]
    QuantileUnreachable { target: f64, ceiling: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
