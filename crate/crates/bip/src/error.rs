use thiserror::Error;

/// Errors surfaced by model construction, sampling, and prediction.
#[derive(Debug, Error)]
pub enum BipError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("zero-variance feature '{feature}' in view {view}")]
    ZeroVariance { view: String, feature: String },

    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparameters(String),

    #[error("invalid indicator configuration: {0}")]
    InvalidConfig(String),

    #[error("numerical failure in {context}{}", sweep.map(|s| format!(" at sweep {s}")).unwrap_or_default())]
    Numerical {
        context: String,
        sweep: Option<usize>,
    },
}

impl BipError {
    pub(crate) fn numerical(context: impl Into<String>) -> Self {
        BipError::Numerical {
            context: context.into(),
            sweep: None,
        }
    }

    /// Attach the sweep index to a numerical failure propagating out of a chain.
    pub(crate) fn at_sweep(self, sweep: usize) -> Self {
        match self {
            BipError::Numerical { context, .. } => BipError::Numerical {
                context,
                sweep: Some(sweep),
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, BipError>;
