use thiserror::Error;

#[derive(Debug, Error)]
pub enum SloccError {
    #[error("malformed state document: {0}")]
    Malformed(String),
    #[error("state tensor is identically zero")]
    ZeroState,
    #[error("duplicate index entry {0:?}")]
    DuplicateIndex(Vec<usize>),
    #[error("index {idx:?} out of range for dims {dims:?}")]
    IndexOutOfRange { idx: Vec<usize>, dims: Vec<usize> },
    #[error("invalid dims {0:?}: expected 3 or 5 positive party dimensions starting with 2")]
    InvalidDims(Vec<usize>),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dimension mismatch between states: {0:?} vs {1:?}")]
    DimsMismatch(Vec<usize>, Vec<usize>),
    #[error("rank decision unstable in {context}: singular value ratio {ratio:.3e} within a decade of tol {tol:.1e}")]
    RankDecisionUnstable { context: String, ratio: f64, tol: f64 },
    #[error("matrix not invertible: {0}")]
    NotInvertible(String),
    #[error("canonical form reconstruction failed: {0}")]
    Reconstruction(String),
    #[error("unknown catalog entry {0}")]
    UnknownEntry(usize),
    #[error("unknown system {0:?}: the catalog covers \"22222\"")]
    UnknownSystem(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SloccError>;
