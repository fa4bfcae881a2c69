use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A rule or dictionary table could not be parsed.
    #[error("rule table line {line}: {msg}")]
    RuleSyntax { line: usize, msg: String },

    /// A corpus file could not be parsed.
    #[error("corpus line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("stratification cell {cell} has {count} posts; at least 3 are required")]
    CellTooSmall { cell: String, count: usize },

    #[error("kappa is undefined because expected agreement is 1 (observed agreement {p_o})")]
    UndefinedKappa { p_o: f64 },

    #[error("no unit carries two or more annotations")]
    NoPairableUnits,

    #[error("alpha is undefined: only one label value occurs in pairable units")]
    NoVariation,

    #[error("class {label} has zero count; enable smoothing (loss.smoothing) to derive weights")]
    ZeroClassCount { label: &'static str },

    #[error("domain {0} is empty")]
    EmptyDomain(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("non-finite gradient for parameter {param}")]
    NonFiniteGradient { param: String },

    #[error("non-finite gradient along the integration path at step {step}")]
    NonFiniteAttribution { step: usize },

    #[error("corrupt parameter file: {0}")]
    Corrupt(String),

    #[error("parameter file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("tensor {tensor}: expected shape {expected:?}, found {found:?}")]
    ShapeMismatch {
        tensor: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("operation requires a self-attention encoder, model uses {0}")]
    UnsupportedEncoder(String),

    #[error("not implemented: {integration_point}")]
    NotImplemented { integration_point: &'static str },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
