//! Error types for each pipeline stage.

use thiserror::Error;

use crate::domain::RiskLevel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("unknown risk label {0:?}")]
    UnknownLabel(String),
    #[error("post id must not be empty")]
    EmptyPostId,
    #[error("post {0:?} has empty text")]
    EmptyText(String),
    #[error("invalid probability vector {0:?}")]
    InvalidProbability([f64; 4]),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template has no {0:?} placeholder in its query section")]
    MissingPlaceholder(String),
    #[error("placeholder {placeholder:?} occurs {count} times, expected exactly once in the query section")]
    DuplicatePlaceholder { placeholder: String, count: usize },
    #[error("template has no exemplars")]
    NoExemplars,
    #[error("template is missing the {0} section")]
    MissingSection(&'static str),
    #[error("unknown section marker {0:?}")]
    UnknownSection(String),
    #[error("exemplar {index}: {reason}")]
    BadExemplar { index: usize, reason: String },
    #[error("template kind mismatch: expected {expected}, got {actual}")]
    KindMismatch {
        expected: &'static str,
        actual: &'static str,
    },
    #[error("target post has empty text")]
    EmptyPost,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("no compiled Yes/No answer line found")]
    NoCompiledLine,
    #[error("compiled answer line has {found} Yes/No tokens, expected 3: {line:?}")]
    WrongArity { found: usize, line: String },
    #[error("no standalone Yes/No token found")]
    NoYesNo,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("request rejected with HTTP {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("completion hit the max_new_tokens budget ({partial_len} bytes returned)")]
    Budget { partial: String, partial_len: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl GatewayError {
    pub fn is_transport(&self) -> bool {
        matches!(self, GatewayError::Transport { .. })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnnotationError {
    #[error("refinement requires an initial Attempt answer of Yes")]
    Precondition,
    #[error("post {post_id}: unparseable completion after {attempts} attempt(s): {source}")]
    Parse {
        post_id: String,
        attempts: u32,
        #[source]
        source: ParseError,
    },
    #[error("post {post_id}: gateway failure: {source}")]
    Gateway {
        post_id: String,
        #[source]
        source: GatewayError,
    },
    #[error("post {post_id}: {source}")]
    Template {
        post_id: String,
        #[source]
        source: TemplateError,
    },
}

#[derive(Debug, Error)]
pub enum ConsensusError {
    #[error("duplicate annotation for post {post_id:?} by annotator {annotator_id:?}")]
    DuplicateAnnotation {
        post_id: String,
        annotator_id: String,
    },
    #[error("pseudo-labelled post {0:?} also appears in the gold set")]
    Overlap(String),
    #[error("pseudo-labelled post {0:?} not found in the post store")]
    UnknownPost(String),
    #[error("gold post {0:?} has no label")]
    UnlabeledGold(String),
    #[error("no required annotators given")]
    NoAnnotators,
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}:{line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },
    #[error("duplicate post id {0:?}")]
    DuplicateId(String),
    #[error("class {class} has {found} labelled gold rows, need at least k = {k}")]
    InsufficientClass {
        class: RiskLevel,
        found: usize,
        k: usize,
    },
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("gold row {0:?} has no label")]
    UnlabeledGold(String),
    #[error("token budget {budget} is below the minimum of {minimum}")]
    Budget { budget: usize, minimum: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnsembleError {
    #[error("cannot average an empty list of probability vectors")]
    EmptyInput,
    #[error("predictions missing for ensemble member(s): {0:?}")]
    MissingMember(Vec<String>),
    #[error("prediction from {0:?}, which is not an ensemble member")]
    UnknownMember(String),
    #[error("ensemble needs at least one member")]
    NoMembers,
    #[error("member {id:?} has invalid weight {weight}")]
    InvalidWeight { id: String, weight: f64 },
    #[error("duplicate ensemble member {0:?}")]
    DuplicateMember(String),
    #[error("prediction row for post {post_id:?} by {annotator_id:?}: {reason}")]
    BadRow {
        post_id: String,
        annotator_id: String,
        reason: String,
    },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("cannot evaluate an empty prediction list")]
    Empty,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}
