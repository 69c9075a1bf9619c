use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("source text is empty")]
    Empty,
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Unsupported or malformed syntax at a 1-based line/column.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("parse error at {line}:{column}: {message}")]
pub struct ParseError {
    pub line: u32,
    pub column: u32,
    pub message: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QueryError {
    #[error("unknown method `{0}`")]
    UnknownMethod(String),
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
}

#[derive(Debug, Error)]
pub enum AdvisorError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("template placeholder `{{{0}}}` cannot be filled from the match")]
    MissingPlaceholder(String),
    #[error("rule match for `{0}` has no entities")]
    EmptyMatch(String),
    #[error("unknown rule `{0}`")]
    UnknownRule(String),
    #[error("invalid rule set: {0}")]
    InvalidRuleSet(String),
    #[error("cannot read rule set {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("request timed out after {0:?}")]
    Timeout(std::time::Duration),
    #[error("endpoint error: {0}")]
    Endpoint(String),
    #[error("no mock fixture for prompt hash {hash}")]
    FixtureMiss { hash: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("fixture i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("store i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt record at line {line}: {message}")]
    CorruptRecord { line: usize, message: String },
    #[error("invalid code pair `{0}`: {1}")]
    InvalidPair(String, String),
    #[error("no code pairs to distill")]
    NoPairs,
}

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("ROI database is empty")]
    EmptyDatabase,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("database has no embedding index; build one first")]
    MissingEmbeddings,
    #[error("embedding dimension mismatch: index {index}, query {query}")]
    DimensionMismatch { index: usize, query: usize },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error("index i/o error on {path}: {message}")]
    Index { path: PathBuf, message: String },
}

#[derive(Debug, Error)]
pub enum ComposeError {
    #[error("retrieval prompts take 1 or 2 examples, got {0}")]
    TooManyExamples(usize),
    #[error("retrieval prompt needs at least one example")]
    NoExamples,
    #[error("template `{name}` is missing placeholder `{{{placeholder}}}`")]
    BadTemplate { name: String, placeholder: String },
    #[error("cannot read template {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("compilation failed: {diagnostics}")]
    Compile { command: String, diagnostics: String },
    #[error("runtimes must be positive (got {0})")]
    NonpositiveTime(f64),
    #[error("repetitions must be odd and at least 3 (got {0})")]
    InvalidReps(usize),
    #[error("no results to evaluate")]
    Empty,
    #[error("original program fails every test case of `{0}`")]
    OriginalFails(String),
    #[error("problem directory error: {0}")]
    Layout(String),
    #[error("eval i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("config path `{key}` does not exist: {path}")]
    MissingPath { key: String, path: PathBuf },
    #[error("config value `{key}` is required here but not set")]
    Unset { key: String },
    #[error("config value `{key}` out of range: {message}")]
    OutOfRange { key: String, message: String },
}
