use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, indices or domains that do not fit the network they are used with.
    #[error("structural error: {0}")]
    Structure(String),

    #[error("conflicting evidence on variable {var}: {first} vs {second}")]
    ConflictingEvidence {
        var: usize,
        first: usize,
        second: usize,
    },

    #[error("pair ({i},{j}) holds a TOP entry; l1 norm is defined for finite networks only")]
    TopEntry { i: usize, j: usize },

    #[error("search space of {size:.3e} assignments exceeds the brute-force limit of {limit:.0e}")]
    SearchSpaceTooLarge { size: f64, limit: f64 },

    #[error("solver stopped at the node limit after {nodes} nodes")]
    NodeLimit { nodes: u64 },

    #[error("enumeration bound {bound} must be below TOP ({top})")]
    BoundNotBelowTop { bound: f64, top: f64 },

    #[error("mask size {k} out of range for {n} variables")]
    MaskOutOfRange { k: String, n: usize },

    #[error("non-finite gradient in {tensor}")]
    NonFiniteGradient { tensor: String },

    #[error("activation cache does not belong to the current parameters")]
    StaleCache,

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("could not generate puzzle: {0}")]
    Generation(String),

    #[error("non-finite loss at epoch {epoch}, sample {sample}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        sample: usize,
        detail: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
