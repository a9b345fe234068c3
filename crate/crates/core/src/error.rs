use thiserror::Error;

/// Errors raised by the library. CLI code wraps these with `anyhow` context.
#[derive(Debug, Error)]
pub enum Error {
    /// A value lies outside the domain of the operation (support, parameter range).
    #[error("domain error: {0}")]
    Domain(String),

    /// The marginal density of an observation vanished under the working measure.
    #[error("degenerate observation{}: marginal density {marginal:e} at y = {y}", location(.permutation, .step))]
    DegenerateObservation {
        y: f64,
        marginal: f64,
        permutation: Option<usize>,
        step: Option<usize>,
    },

    /// Test problem whose null set carries no prior mass.
    #[error("ill-posed test: null set has zero prior mass")]
    IllPosedTest,

    /// Invalid configuration value.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed input file.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn location(permutation: &Option<usize>, step: &Option<usize>) -> String {
    match (permutation, step) {
        (Some(p), Some(s)) => format!(" (permutation {p}, step {s})"),
        (None, Some(s)) => format!(" (step {s})"),
        (Some(p), None) => format!(" (permutation {p})"),
        (None, None) => String::new(),
    }
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Attach permutation and step indices to a degenerate-observation error.
    pub(crate) fn at_step(self, perm: usize, step_index: usize) -> Self {
        match self {
            Error::DegenerateObservation { y, marginal, .. } => Error::DegenerateObservation {
                y,
                marginal,
                permutation: Some(perm),
                step: Some(step_index),
            },
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
