use thiserror::Error;

use crate::aic::RankReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Caller broke a documented precondition (shapes, kinds, symmetry).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// A subspace estimator could not produce the requested number of components.
    #[error("estimation failure: {0}")]
    Estimation(String),

    #[error("rank deficient ({context}): sigma_min/sigma_max = {:.3e}", report.margin)]
    RankDeficient {
        context: String,
        report: Box<RankReport>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),
}
