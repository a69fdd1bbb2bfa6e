//! SLOCC classification of `2 x L x M x N x H` and `2 x M x N` pure states
//! through standard forms of their matrix pairs, and equivalence testing by
//! Kronecker factorization of the connecting operators.

pub mod catalog;
pub mod classify;
pub mod error;
pub mod linalg;
pub mod pencil;
pub mod realign;
pub mod search;
pub mod tensor;

pub use error::{Result, SloccError};
pub use tensor::{apply_local_ops, to_matrix_pair, LocalOperatorTuple, MatrixPencil, StateTensor};
