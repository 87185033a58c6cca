use std::path::PathBuf;

use thiserror::Error;

use crate::seqnet::FaultKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A closed-form denominator vanished: the coupled network is all-zero.
    #[error("closed-form denominator |{magnitude:e}| pu is degenerate for {kind:?}")]
    DivisionDegenerate { kind: FaultKind, magnitude: f64 },

    #[error("fault kind {0:?} has no closed-form post-fault voltage")]
    UnsupportedKind(FaultKind),

    #[error("coupled sequence network is singular (pivot {pivot:e})")]
    SingularNetwork { pivot: f64 },

    #[error("equivalent inertia {m_eq:e} is singular")]
    SingularInertia { m_eq: f64 },

    #[error("reference/network fixed point did not converge in {max_iter} iterations")]
    NoConvergence { max_iter: usize },

    #[error("clearing-time window [{lo}, {hi}] s does not straddle the stability boundary")]
    BracketInvalid { lo: f64, hi: f64 },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("invalid scenario: {0}")]
    Validation(String),

    #[error("unknown sweep parameter `{0}`")]
    UnknownParameter(String),

    #[error("invalid signal: {0}")]
    Signal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
