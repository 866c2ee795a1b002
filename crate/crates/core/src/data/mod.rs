//! Datasets, synthetic generators, client partitioning and the CSV format.

mod csv;
mod dataset;
mod generate;
mod partition;

use thiserror::Error;

pub use self::csv::{load_csv, parse_csv, write_csv};
pub use dataset::{ClientShard, Dataset};
pub use generate::{gen_blobs, gen_conflicting_modes, ModesDataset};
pub use partition::{partition, train_test_split, PartitionPlan, PartitionPolicy};

use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: cannot parse {what}")]
    Parse { line: usize, what: String },
    #[error("line {line}: expected {expected} features, found {found}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: label out of range")]
    BadLabel { line: usize },
    #[error("file contains no samples")]
    NoSamples,
    #[error("{clients} clients x {per_client} classes exceeds {num_classes} classes")]
    TooManyClients {
        clients: usize,
        per_client: usize,
        num_classes: usize,
    },
    #[error("client {0} received no samples")]
    EmptyShard(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;
