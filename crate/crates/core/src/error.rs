use std::path::PathBuf;

use thiserror::Error;

use crate::sim::SimError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("distance does not fit in 64 bits")]
    Overflow,

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("the k-machine model needs at least 2 machines, got {0}")]
    TooFewMachines(usize),

    #[error("asked for {requested} items but only {available} exist")]
    NotEnoughPoints { requested: u64, available: u64 },

    #[error("cannot assign a label from an empty neighbor set")]
    EmptyLabels,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Sim(#[from] SimError),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    /// True for errors raised by the simulator because a protocol broke the model's rules.
    pub fn is_protocol_violation(&self) -> bool {
        matches!(self, Error::Sim(e) if e.is_violation())
    }
}
