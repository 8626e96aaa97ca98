use std::path::PathBuf;

use thiserror::Error;

/// Every failure the engine can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("map has zero width or height")]
    EmptyMap,
    #[error("negative value {value} at index {index}")]
    NegativeValue { index: usize, value: f64 },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("map has zero total mass")]
    ZeroMass,
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },
    #[error("fixation ({x}, {y}) outside {width}x{height} image")]
    OutOfBounds {
        x: i64,
        y: i64,
        width: usize,
        height: usize,
    },
    #[error("blur sigma must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("invalid blur spec: {0}")]
    InvalidBlurSpec(String),
    #[error("fixation set is empty")]
    EmptyFixations,
    #[error("negative fixation pool is empty")]
    EmptyNegativePool,
    #[error("invalid AUC config: {0}")]
    InvalidAucConfig(String),
    #[error("unbalanced transport problem: supply {supply} vs demand {demand}")]
    UnbalancedProblem { supply: f64, demand: f64 },
    #[error("transport solver failed: {0}")]
    NumericalFailure(String),
    #[error("invalid EMD config: {0}")]
    InvalidEmdConfig(String),
    #[error("kernel shape mismatch: {0}")]
    KernelShapeMismatch(String),
    #[error("{channels} channels not divisible by {divisor}")]
    ChannelNotDivisible { channels: usize, divisor: usize },
    #[error("weight shape mismatch: {0}")]
    WeightShapeMismatch(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid architecture spec: {0}")]
    InvalidSpec(String),
    #[error("split mismatch: conv output has {actual} channels, expected {expected}")]
    SplitMismatch { expected: usize, actual: usize },
    #[error("report is empty")]
    EmptyReport,
    #[error("duplicate record ({model}, {image}, {metric})")]
    DuplicateRecord {
        model: String,
        image: String,
        metric: String,
    },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("models do not share image sets: {0}")]
    MismatchedImageSets(String),
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("{path}: parse error at line {line}: {message}")]
    ParseError {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: record {record} is missing field `{field}`")]
    MissingField {
        path: PathBuf,
        record: usize,
        field: String,
    },
    #[error("duplicate image_id `{0}`")]
    DuplicateImageId(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }

    /// Short variant name, used in report flag columns.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyMap => "EmptyMap",
            Error::NegativeValue { .. } => "NegativeValue",
            Error::NonFinite { .. } => "NonFinite",
            Error::ZeroMass => "ZeroMass",
            Error::ShapeMismatch { .. } => "ShapeMismatch",
            Error::OutOfBounds { .. } => "OutOfBounds",
            Error::NonPositiveSigma(_) => "NonPositiveSigma",
            Error::InvalidBlurSpec(_) => "InvalidBlurSpec",
            Error::EmptyFixations => "EmptyFixations",
            Error::EmptyNegativePool => "EmptyNegativePool",
            Error::InvalidAucConfig(_) => "InvalidAucConfig",
            Error::UnbalancedProblem { .. } => "UnbalancedProblem",
            Error::NumericalFailure(_) => "NumericalFailure",
            Error::InvalidEmdConfig(_) => "InvalidEmdConfig",
            Error::KernelShapeMismatch(_) => "KernelShapeMismatch",
            Error::ChannelNotDivisible { .. } => "ChannelNotDivisible",
            Error::WeightShapeMismatch(_) => "WeightShapeMismatch",
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::SplitMismatch { .. } => "SplitMismatch",
            Error::EmptyReport => "EmptyReport",
            Error::DuplicateRecord { .. } => "DuplicateRecord",
            Error::DegenerateInput(_) => "DegenerateInput",
            Error::MismatchedImageSets(_) => "MismatchedImageSets",
            Error::UnknownMetric(_) => "UnknownMetric",
            Error::ParseError { .. } => "ParseError",
            Error::MissingField { .. } => "MissingField",
            Error::DuplicateImageId(_) => "DuplicateImageId",
            Error::Io { .. } => "Io",
        }
    }
}
