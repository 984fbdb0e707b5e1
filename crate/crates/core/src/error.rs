use thiserror::Error;

/// Errors raised by the RPSP toolkit.
#[derive(Debug, Error)]
pub enum RpspError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// `C + lambda I` was numerically singular while conditioning.
    #[error("filter degeneracy at step {step}: condition number {condition:.3e} exceeds limit")]
    FilterDegeneracy { step: usize, condition: f64 },

    #[error("initialization data: {0}")]
    InitializationData(String),

    #[error("singular system: {0}; use a positive ridge")]
    Singular(String),

    #[error("non-finite value in gradient computation at step {step} ({what})")]
    GradientOverflow { step: usize, what: &'static str },

    /// Wraps a lower-level error with the stage that produced it.
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<RpspError>,
    },

    #[error("training iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<RpspError>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

impl RpspError {
    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        RpspError::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        RpspError::Iteration {
            iteration,
            source: Box::new(self),
        }
    }

    /// True for configuration errors, looking through stage and iteration wrappers.
    pub fn is_config_error(&self) -> bool {
        match self {
            RpspError::InvalidConfig(_) => true,
            RpspError::Stage { source, .. } | RpspError::Iteration { source, .. } => source.is_config_error(),
            _ => false,
        }
    }

    /// Attaches a time index to filter errors raised without one.
    pub(crate) fn at_step(self, t: usize) -> Self {
        match self {
            RpspError::FilterDegeneracy { condition, .. } => {
                RpspError::FilterDegeneracy { step: t, condition }
            }
            RpspError::GradientOverflow { what, .. } => RpspError::GradientOverflow { step: t, what },
            other => other,
        }
    }
}

pub type Result<T, E = RpspError> = std::result::Result<T, E>;
