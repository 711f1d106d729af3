use thiserror::Error;

/// Error type shared across the crate.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invariant violation on {element}: {msg}")]
    Invariant { element: String, msg: String },

    #[error("power flow diverged after {iterations} iterations (max mismatch {mismatch:.3e} p.u.)")]
    Divergence { iterations: usize, mismatch: f64 },

    #[error("singular Jacobian while solving island of {nodes} nodes")]
    SingularJacobian { nodes: usize },

    #[error("nonzero injection at node outside the slack island ({node})")]
    InjectionOffSlackIsland { node: String },

    #[error("episode unusable: {0}")]
    UnusableEpisode(String),

    #[error("chronics range error: {0}")]
    ChronicsRange(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl CoreError {
    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        CoreError::Parse {
            line,
            msg: msg.into(),
        }
    }

    pub fn invariant(element: impl Into<String>, msg: impl Into<String>) -> Self {
        CoreError::Invariant {
            element: element.into(),
            msg: msg.into(),
        }
    }
}
