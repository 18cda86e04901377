use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid conformation: {0}")]
    InvalidConformation(String),

    #[error("all weights are zero")]
    AllZeroWeights,

    #[error("ensemble is empty")]
    EmptyEnsemble,

    #[error("duplicate walker id {0}")]
    DuplicateWalker(u64),

    #[error("ensemble weights sum to {0}, expected 1")]
    WeightNotConserved(f64),

    #[error("every walker in the ensemble is broken")]
    AllWalkersBroken,

    #[error("covariance is rank deficient: no eigenvalue above the truncation cutoff")]
    RankDeficient,

    #[error("insufficient frames: need more than {needed}, have {available}")]
    InsufficientFrames { needed: usize, available: usize },

    #[error("lag {lag} is too long for every trajectory")]
    LagTooLong { lag: usize },

    #[error("no transitions were observed; connected set is empty")]
    NoConnectedSet,

    #[error("transition matrix is not irreducible")]
    NotIrreducible,

    #[error("too few frames: need at least {needed}, have {available}")]
    TooFewFrames { needed: usize, available: usize },

    #[error("kernel bandwidth must be positive")]
    ZeroBandwidth,

    #[error("distributions are defined on different supports")]
    SupportMismatch,

    #[error("particle count mismatch: {0} vs {1}")]
    ParticleMismatch(usize, usize),

    #[error("point set is empty")]
    EmptyPointSet,

    #[error(transparent)]
    TooFewParticles(#[from] TooFewParticles),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Raised for a structural feature class (bonds, angles, dihedrals) that
/// needs more particles than the system has.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("{feature} need at least {needed} particles, have {available}")]
pub struct TooFewParticles {
    pub feature: &'static str,
    pub needed: usize,
    pub available: usize,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// True for failures caused by the numbers rather than by inputs or IO.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::AllZeroWeights
                | Error::AllWalkersBroken
                | Error::WeightNotConserved(_)
                | Error::RankDeficient
                | Error::InsufficientFrames { .. }
                | Error::LagTooLong { .. }
                | Error::NoConnectedSet
                | Error::NotIrreducible
                | Error::TooFewFrames { .. }
                | Error::ZeroBandwidth
                | Error::SupportMismatch
                | Error::EmptyPointSet
                | Error::Numeric(_)
        )
    }
}
