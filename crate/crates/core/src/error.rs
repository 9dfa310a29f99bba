use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("empty sequence: record `{0}` has no events")]
    EmptySequence(String),

    #[error("schema violation on field `{field}`: {detail}")]
    SchemaViolation { field: String, detail: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("infeasible balance: class {class} has {members} nodes but {clusters} clusters were allotted")]
    InfeasibleBalance {
        class: usize,
        members: usize,
        clusters: usize,
    },

    #[error("task mismatch: {0}")]
    TaskMismatch(String),

    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("metric domain error: {0}")]
    MetricDomain(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("bundle integrity: {0}")]
    BundleIntegrity(String),

    #[error("cannot load {}: {detail} (expected output of `{producer}`)", path.display())]
    Artifact {
        path: PathBuf,
        producer: &'static str,
        detail: String,
    },

    #[error("record `{id}`: {source}")]
    Record {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{phase}: {source}")]
    Phase {
        phase: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse error families, used by the CLI for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numeric,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Parameter(_) | Error::Config(_) => ErrorClass::Usage,
            Error::Numeric(_) => ErrorClass::Numeric,
            Error::Record { source, .. } | Error::Phase { source, .. } => source.class(),
            _ => ErrorClass::Data,
        }
    }

    /// Short stable identifier for machine-readable error tails.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::EmptyInput(_) => "empty_input",
            Error::EmptySequence(_) => "empty_sequence",
            Error::SchemaViolation { .. } => "schema",
            Error::Parse { .. } => "parse",
            Error::Parameter(_) => "parameter",
            Error::InfeasibleBalance { .. } => "infeasible_balance",
            Error::TaskMismatch(_) => "task_mismatch",
            Error::Index { .. } => "index",
            Error::UndefinedMetric(_) => "undefined_metric",
            Error::MetricDomain(_) => "metric_domain",
            Error::Precondition(_) => "precondition",
            Error::Config(_) => "config",
            Error::Numeric(_) => "numeric",
            Error::BundleIntegrity(_) => "bundle_integrity",
            Error::Artifact { .. } => "artifact",
            Error::Record { source, .. } | Error::Phase { source, .. } => source.kind(),
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn in_phase(self, phase: &'static str) -> Error {
        Error::Phase {
            phase,
            source: Box::new(self),
        }
    }
}

pub(crate) fn dim(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Error {
    Error::Dimension { op, left, right }
}
