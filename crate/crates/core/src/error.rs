use thiserror::Error;

/// Errors produced by the estimators, bound evaluators and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("input contains non-finite values ({0})")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    Domain(String),

    #[error("no convergence after {iterations} iterations (violation {violation:.3e})")]
    Convergence {
        iterations: usize,
        violation: f64,
        last_iterate: Vec<f64>,
    },

    #[error("scale collapsed to {sigma:.3e}{}", node.map(|j| format!(" at node {j}")).unwrap_or_default())]
    DegenerateScale { sigma: f64, node: Option<usize> },

    #[error("linear system is infeasible (phase-one residual {0:.3e})")]
    Infeasible(f64),

    #[error("matrix is singular or too ill-conditioned (condition estimate {0:.3e})")]
    Singular(f64),

    #[error("bound is not applicable: {0}")]
    Inapplicable(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("replication {rep} (seed {seed}): {source}")]
    Rep {
        rep: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
