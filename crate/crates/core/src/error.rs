use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while loading or validating a scenario file.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("traffic profile: {0}")]
    Profile(String),
}

impl ConfigError {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field,
            reason: reason.into(),
        }
    }
}

/// A violated physical-layer precondition. These indicate a bug in the
/// caller's bookkeeping and are never clamped away.
#[derive(Debug, Error, PartialEq)]
pub enum PhyError {
    #[error("AP {ap} transmits to UE {ue} with m_l = {antennas} <= tau_str = {tau_str}")]
    NoSpatialDegrees {
        ap: usize,
        ue: usize,
        antennas: usize,
        tau_str: usize,
    },
    #[error("dimension mismatch: {0}")]
    Shape(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum PowerError {
    #[error("negative input `{0}`")]
    Negative(&'static str),
    #[error("sleeping AP has nonzero transmit power {0} W")]
    SleepingTransmit(f64),
}

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("input width {got} does not match network input width {expected}")]
    Width { expected: usize, got: usize },
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint holds a {found} model, expected {expected}")]
    Kind {
        expected: &'static str,
        found: &'static str,
    },
    #[error("checkpoint is truncated or corrupt: {0}")]
    Corrupt(String),
    #[error("network {index} has widths {found:?}, scenario requires {expected:?}")]
    Shape {
        index: usize,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite {what} at iteration {iteration}: {diagnostic}")]
    Divergence {
        what: &'static str,
        iteration: usize,
        diagnostic: String,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: missing column `{column}`")]
    MissingLane { path: PathBuf, column: String },
    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}
