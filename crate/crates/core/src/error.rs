use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty labeled set")]
    EmptyLabeledSet,

    #[error("empty unlabeled set: {0}")]
    EmptyUnlabeledSet(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("importance weight {weight:e} at labeled sample {index} is below the floor {floor:e}")]
    WeightBelowFloor { index: usize, weight: f64, floor: f64 },

    #[error("curriculum weight {0} outside [0, 1]")]
    AlphaOutOfRange(f64),

    #[error("epoch {epoch} outside [0, {total}]")]
    EpochOutOfRange { epoch: usize, total: usize },

    #[error("rank-deficient design: rank {rank} < {cols} columns (enable ridge to regularize)")]
    RankDeficient { rank: usize, cols: usize },

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("optimizer diverged at iteration {iteration}: loss {loss:e}")]
    Divergence { iteration: usize, loss: f64 },

    #[error("non-finite gradient at iteration {iteration}")]
    NonFiniteGradient { iteration: usize },

    #[error("infeasible batch composition: {0}")]
    InfeasibleBatch(String),

    #[error("trial {trial} failed: {source}")]
    TrialFailed {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures that come from the numbers rather than the inputs'
    /// shape or the configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::WeightBelowFloor { .. }
                | Error::RankDeficient { .. }
                | Error::Divergence { .. }
                | Error::NonFiniteGradient { .. }
                | Error::TrialFailed { .. }
        )
    }

    /// Trial index of a failed Monte Carlo trial, if any.
    pub fn trial_index(&self) -> Option<usize> {
        match self {
            Error::TrialFailed { trial, .. } => Some(*trial),
            _ => None,
        }
    }
}
