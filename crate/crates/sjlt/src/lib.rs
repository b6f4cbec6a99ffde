//! Sparse fast Johnson-Lindenstrauss transform with bit-metered randomness.
//!
//! The embedding is `f_q = d^(-1/q) * P * H * D` where `D` is a diagonal of
//! limited-independence random signs, `H` the normalized Walsh-Hadamard
//! transform, and `P` a sparse matrix whose rows each carry k random signs
//! on a uniformly sampled k-subset of columns. Compared to dense random
//! projections this keeps the `O(d k + n log n)` application cost of the
//! fast JL family while cutting the random bits needed to draw the map to
//! `O((log n) log(N n) + d k log n)`.
//!
//! The crate plans parameters (`d`, `k`, independence order, mode) from
//! explicit constants, builds and applies embeddings with every consumed
//! random bit accounted for, and ships a verification harness that checks
//! the concentration bounds behind the construction at desk scale.

pub mod kwise;
pub mod randbits;
pub mod rowsampler;
pub mod transform;
pub mod verify;
pub mod wht;

pub mod cli;

pub use randbits::{BitReport, BitSource, BitStream};
pub use transform::{EmbeddingPlan, PlanMode};
