use std::path::PathBuf;

use thiserror::Error;

use crate::config::ConfigIssue;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain where an operation is defined.
    #[error("domain error in {context}: {message}")]
    Domain {
        context: &'static str,
        message: String,
    },

    /// The requested Hilbert space exceeds the configured amplitude cap.
    #[error("joint dimension {dimension} exceeds the cap of {cap} amplitudes")]
    Resource { dimension: usize, cap: usize },

    #[error("integrator failed to hold tolerance {requested:e} (achieved {achieved:e}) at t = {time}")]
    Integrator {
        requested: f64,
        achieved: f64,
        time: f64,
    },

    #[error("decay fit failed: {0}")]
    Fit(String),

    #[error("history is not admissible for the regulated spectral integral: {0}")]
    Admissibility(String),

    #[error("time grid too coarse: {actual:.1} samples per period, at least {required:.1} required")]
    Resolution { actual: f64, required: f64 },

    #[error("invalid configuration:\n{}", format_issues(.0))]
    Config(Vec<ConfigIssue>),

    #[error("{context}: {source}")]
    Io {
        context: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(context: &'static str, message: impl Into<String>) -> Self {
        Error::Domain {
            context,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            context: path.into(),
            source,
        }
    }
}

fn format_issues(issues: &[ConfigIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("  {i}"))
        .collect::<Vec<_>>()
        .join("\n")
}
