use crate::multiindex::MultiIndex;

/// Errors produced anywhere in the estimator stack.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index {index} lies below the allocation offset {offset}")]
    BelowOffset { index: MultiIndex, offset: MultiIndex },

    #[error("coefficient is not elliptic: minimum value {min} <= 0")]
    NotElliptic { min: f64 },

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error("all particle weights vanished at stage {stage} (tau = {tau}, max log-likelihood = {max_log_likelihood})")]
    DegeneratePopulation {
        stage: usize,
        tau: f64,
        max_log_likelihood: f64,
    },

    #[error("SMC run at index {index} failed: {source}")]
    AtIndex {
        index: MultiIndex,
        #[source]
        source: Box<Error>,
    },

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("infeasible budget {budget}: at least {minimum} is required")]
    InfeasibleBudget { budget: f64, minimum: f64 },

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("too many failed realizations: {failed} of {total}")]
    FailureThreshold { failed: usize, total: usize },

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Whether the error stems from the configuration rather than from a run.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::Toml(_) | Error::InfeasibleBudget { .. } | Error::Data(_)
        )
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Attach the multi-index at which an SMC run failed.
    pub fn at_index(self, index: &MultiIndex) -> Self {
        Error::AtIndex {
            index: index.clone(),
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
