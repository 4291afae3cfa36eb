//! Deterministic numerical primitives shared by the rest of the crate.

mod blockdiag;
mod fixed;
mod layout;
pub mod reduce;
mod rng;
mod vector;

pub use blockdiag::BlockDiagMatrix;
pub use fixed::{quantize, quantize_scalar, FixedVector, MAX_FRAC_BITS};
pub use layout::{Block, BlockLayout};
pub use reduce::{tree_mean_vectors, tree_reduce, tree_sum};
pub use rng::{derive_seed, stream_key, stream_rng};
pub use vector::ParamVector;
