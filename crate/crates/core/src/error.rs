use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Pipeline stage an error belongs to; drives the CLI exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Configuration,
    Ingestion,
    Estimation,
    Io,
}

impl Stage {
    /// Process exit code for this stage. Stable across releases.
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Io => 1,
            Stage::Configuration => 2,
            Stage::Ingestion => 3,
            Stage::Estimation => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("design matrix is rank deficient at column {column}")]
    RankDeficient { column: usize },

    #[error("non-finite value in row {row}")]
    NonFinite { row: usize },

    #[error("too few observations: n = {n}, need more than {p}")]
    TooFewObservations { n: usize, p: usize },

    #[error("separation detected in logistic regression ({0})")]
    Separation(String),

    #[error("binary response has a single class")]
    SingleClass,

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("no usable rows in input ({dropped} dropped)")]
    NoUsableRows { dropped: usize },

    #[error("line {line}: outcome value `{value}` is not 0/1")]
    NotBinary { line: usize, value: String },

    #[error("fewer than 2 contexts retained ({retained} of {total})")]
    FewerThanTwoContexts { retained: usize, total: usize },

    #[error("context `{context}`: {source}")]
    InContext {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("instrument-exposure association is zero")]
    ZeroInstrumentAssociation,

    #[error("need at least {needed} contexts, got {got}")]
    TooFewContexts { needed: usize, got: usize },

    #[error("fixed-point iteration did not converge after {} iterations", trace.len())]
    NonConvergence { trace: Vec<f64> },

    #[error("context mean exposures are all equal")]
    CollinearMeans,

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("cell `{cell}`: {failed} of {total} replications failed")]
    ExcessiveFailures {
        cell: String,
        failed: usize,
        total: usize,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn stage(&self) -> Stage {
        match self {
            Error::InContext { source, .. } => source.stage(),
            Error::FewerThanTwoContexts { .. }
            | Error::InvalidConfig(_)
            | Error::InvalidScenario(_)
            | Error::TooFewContexts { .. } => Stage::Configuration,
            Error::MissingColumn(_)
            | Error::NoUsableRows { .. }
            | Error::NotBinary { .. }
            | Error::Parse { .. }
            | Error::Csv(_) => Stage::Ingestion,
            Error::Io(_) | Error::Json(_) => Stage::Io,
            _ => Stage::Estimation,
        }
    }

    pub(crate) fn in_context(self, context: &str) -> Error {
        Error::InContext {
            context: context.to_string(),
            source: Box::new(self),
        }
    }
}
