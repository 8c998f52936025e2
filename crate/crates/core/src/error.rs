use std::fmt;

use crate::word::Word;

/// Pipeline stage an error originated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Estimation,
    /// Covariance realization, with the step number (1..=6).
    Realization(u8),
    Refinement,
    Validation,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Estimation => write!(f, "covariance estimation"),
            Stage::Realization(step) => write!(f, "covariance realization step {step}"),
            Stage::Refinement => write!(f, "refinement"),
            Stage::Validation => write!(f, "validation"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("mode {mode} is outside 1..={modes}")]
    InvalidMode { mode: usize, modes: usize },

    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid selection: {0}")]
    InvalidSelection(String),

    #[error("missing Markov parameter for word {0}")]
    MissingMarkovParameter(Word),

    #[error("singular Hankel matrix: numerical rank {rank} < {expected}")]
    SingularHankel { rank: usize, expected: usize },

    #[error("{what} did not converge after {iterations} iterations (last delta {delta:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        delta: f64,
    },

    #[error("realized dynamics are not stable (spectral radius {radius:.6})")]
    Unstable { radius: f64 },

    #[error("output is not full rank: {0}")]
    NotFullRank(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("ill-conditioned regressor (rank {rank} < {columns}); use longer data or fewer words")]
    IllConditionedRegressor { rank: usize, columns: usize },

    #[error("no selection of rank {n} found within a budget of {budget} candidates; try a larger n or more data")]
    NoSelectionFound { n: usize, budget: usize },

    #[error("models are not isomorphic (max residual {residual:e})")]
    NotIsomorphic { residual: f64 },

    #[error("BFR undefined: {0}")]
    UndefinedBfr(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at(self, stage: Stage) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::SingularHankel { .. }
                | Error::NonConvergence { .. }
                | Error::NotFullRank(_)
                | Error::Unstable { .. }
                | Error::IllConditionedRegressor { .. }
                | Error::NoSelectionFound { .. }
                | Error::NotIsomorphic { .. }
                | Error::UndefinedBfr(_)
                | Error::InsufficientData(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
