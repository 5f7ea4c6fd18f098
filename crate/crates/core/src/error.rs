use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("no synapses")]
    NoSynapses,

    #[error("role list `{role}` names unknown neuron `{name}`")]
    UnknownRoleNeuron { role: &'static str, name: String },

    #[error("line {line}: duplicate synapse {pre} -> {post} ({kind})")]
    DuplicateSynapse {
        line: usize,
        pre: String,
        post: String,
        kind: String,
    },

    #[error("invalid connectome: {0}")]
    InvalidConnectome(String),

    #[error("unknown neuron `{0}`")]
    UnknownNeuron(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("subset of {len} coordinates exceeds the limit of {max}")]
    SubsetTooLarge { len: usize, max: usize },

    #[error("subset index {index} out of range for genome of length {len}")]
    SubsetIndexOutOfRange { index: usize, len: usize },

    #[error("invalid layout: {0}")]
    Layout(String),

    #[error("{0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
