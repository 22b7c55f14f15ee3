use thiserror::Error;

/// Errors raised by the influence diagnostics.
#[derive(Debug, Error)]
pub enum VoiError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("loss factor does not define a positive definite metric")]
    NotPositiveDefinite,

    #[error("{what} requires at least {required} draws, got {found}")]
    TooFewDraws {
        what: &'static str,
        required: usize,
        found: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("design matrix is rank deficient at pivot {pivot} (column `{column}`)")]
    RankDeficient { pivot: usize, column: String },

    #[error("observation {index} has leverage 1; its leave-one-out fit is undefined")]
    ExactFitPoint { index: usize },

    #[error("removing observation {index} leaves a rank deficient design")]
    RankLossOnDeletion { index: usize },

    #[error("residual variance is zero; scaled diagnostics are undefined")]
    ZeroResidualVariance,

    #[error("prospective EVSI is zero; the information ratio is undefined")]
    DegenerateProspective,

    #[error("degenerate predictor space: all simulated data blocks are identical")]
    DegeneratePredictors,

    #[error("{failed} of {total} inner posterior runs failed (budget {budget:.0}%)")]
    InnerFailureBudget {
        failed: usize,
        total: usize,
        budget: f64,
    },

    #[error("sampler failed for unit `{unit}`: {source}")]
    Sampler {
        unit: String,
        #[source]
        source: Box<VoiError>,
    },

    #[error("non-finite log-posterior at the initial state")]
    NonFiniteInit,

    #[error("unknown unit `{0}`")]
    UnknownUnit(String),

    #[error("invalid data: {0}")]
    Data(String),
}

/// Coarse classification used to map errors onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

impl VoiError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            VoiError::InvalidArgument(_) => ErrorKind::Usage,
            VoiError::Data(_)
            | VoiError::UnknownUnit(_)
            | VoiError::DimensionMismatch { .. }
            | VoiError::TooFewDraws { .. } => ErrorKind::Data,
            VoiError::Sampler { source, .. } => source.kind(),
            _ => ErrorKind::Numerical,
        }
    }

    pub(crate) fn in_unit(self, unit: impl Into<String>) -> Self {
        match self {
            e @ VoiError::Sampler { .. } => e,
            e => VoiError::Sampler {
                unit: unit.into(),
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, VoiError>;
