use std::path::PathBuf;

use crate::transact::ConceptId;

pub type Result<T> = std::result::Result<T, Error>;

/// Error type shared by every module in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file parsed, but a field violates the schema. `path` is the field
    /// path inside the document, e.g. `weights[0][2]`.
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("non-finite value at {path}")]
    NonFinite { path: String },

    #[error("parse error in {what}: {message}")]
    Parse { what: String, message: String },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid parameter {what}: {message}")]
    InvalidParam { what: String, message: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("transaction table for {concept} has no rows")]
    EmptyTable { concept: ConceptId },

    #[error("training diverged at epoch {epoch} (loss = {loss})")]
    Divergence { epoch: usize, loss: f64 },

    #[error("pattern enumeration exceeded the candidate cap of {cap}")]
    CandidateCapExceeded { cap: u64 },

    #[error("no complete frequent pattern exists even at minimum support; the table does not span the network's layers")]
    NoCompletePattern,

    #[error("neuron universe of {universe} exceeds the solver cap of {cap}; shrink the table or raise the limit")]
    UniverseTooLarge { universe: usize, cap: usize },

    #[error("no class-correct backbone available for prediction")]
    NoCorrectBackbones,

    #[error("class {class} absent from dataset")]
    ClassAbsent { class: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}
