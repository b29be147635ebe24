use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("inverted interval in dimension {dim}: lo {lo} > hi {hi}")]
    InvertedInterval { dim: usize, lo: f64, hi: f64 },

    #[error("point outside the unit cube in dimension {dim}: {value}")]
    OutsideUnitCube { dim: usize, value: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("simulation fault at t = {time_s:.1} s: {reason}")]
    SimulationFault { time_s: f64, reason: String },

    #[error("evaluation failed for box {box_id}: {source}")]
    BoxEvaluation { box_id: usize, source: Box<Error> },

    #[error("instance {instance} failed: {source}")]
    InstanceEvaluation { instance: usize, source: Box<Error> },

    #[error("extrapolation needs at least 2 usable points, got {usable}")]
    InsufficientFit { usable: usize },

    #[error("unknown {kind} `{name}` (available: {available})")]
    UnknownStrategy { kind: &'static str, name: String, available: String },

    #[error("malformed partition file at line {line}: {reason}")]
    PartitionFormat { line: usize, reason: String },
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }
}
