use std::path::PathBuf;

use thiserror::Error;

use crate::ontology::{SeverityClass, ValidationReport};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QuantityError {
    #[error("malformed number `{0}`")]
    Malformed(String),
    #[error("value is not finite")]
    NotFinite,
    #[error("negative {unit} quantity: {value}")]
    Negative { unit: &'static str, value: String },
    #[error("{0} is not a probability in [0, 1]")]
    NotAProbability(String),
}

/// A parse or semantic failure in behavior-spec text, with 1-based position.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DslError {
    #[error("{line}:{column}: syntax error: expected {expected}, found {found}")]
    Syntax {
        line: usize,
        column: usize,
        expected: String,
        found: String,
    },
    #[error("{line}:{column}: {message}")]
    Semantic {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("conflicting redefinition of `{id}` without `override`")]
    Conflict { id: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConditionError {
    #[error("malformed condition `{text}`: {reason}")]
    Malformed { text: String, reason: String },
    #[error("condition references unknown fact `{0}`")]
    UnknownFact(String),
    #[error("condition references unknown action `{0}`")]
    UnknownAction(String),
    #[error("unknown guide word `{0}`")]
    UnknownGuideWord(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EstimationError {
    #[error("exposure is zero hours per year")]
    ZeroExposure,
    #[error("average speed must be positive")]
    ZeroSpeed,
    #[error("hours per day must lie in [0, 24], got {0}")]
    HoursPerDay(String),
    #[error("scenario `{0}` has no frequency")]
    MissingFrequency(String),
    #[error(transparent)]
    Quantity(#[from] QuantityError),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Quantity(#[from] QuantityError),
    #[error(transparent)]
    Dsl(#[from] DslError),
    #[error(transparent)]
    Condition(#[from] ConditionError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error("scenario `{scenario}` asserts unknown fact `{fact}`")]
    UnknownAssertedFact { scenario: String, fact: String },
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("no tolerable rate for criterion `{criterion}` and severity {severity}")]
    MissingTolerableRate {
        criterion: String,
        severity: SeverityClass,
    },
    #[error("measure `{measure}`: {message}")]
    Measure { measure: String, message: String },
    #[error("illegal state transition: {0}")]
    IllegalTransition(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("workspace is missing required inputs: {}", .0.join(", "))]
    MissingInputs(Vec<String>),
    #[error("model validation failed with {} violation(s)", .0.violations.len())]
    Validation(ValidationReport),
    #[error("workspace at {0} is locked by another writer")]
    Locked(PathBuf),
    #[error("workspace version mismatch: expected {expected}, found {found}")]
    VersionConflict { expected: u64, found: u64 },
    #[error("directory {0} is not empty (use --force)")]
    NotEmpty(PathBuf),
    #[error("{0} is not a riskcore workspace")]
    NotAWorkspace(PathBuf),
    #[error("refusing to export before acceptance (use --draft)")]
    NotAccepted,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
