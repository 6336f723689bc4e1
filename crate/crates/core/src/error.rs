//! Crate-wide error type.

use crate::glm::NullFit;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (flip counts, levels, scenario parameters).
    #[error("configuration error: {0}")]
    Config(String),

    /// Structurally invalid input data (dimensions, non-finite values, ranks).
    #[error("invalid data: {0}")]
    Data(String),

    /// A value outside the mathematical domain of a family or link.
    #[error("domain error: {0}")]
    Domain(String),

    /// The nuisance design (or weighted design) lost full column rank.
    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    /// A target column lies numerically in the span of the nuisance design.
    #[error("collinear target: {0}")]
    Collinear(String),

    /// Iterative fitting did not converge; carries the last iterate.
    #[error("fit did not converge after {iterations} iterations (deviance {deviance:.6e})")]
    NonConvergence {
        iterations: usize,
        deviance: f64,
        last: Box<NullFit>,
    },

    /// Fitted means pinned at the boundary of their valid range.
    #[error("perfect separation: {0}")]
    PerfectSeparation(String),

    /// A statistic's plug-in variance vanished.
    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    /// A matrix that must be invertible is numerically singular.
    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
