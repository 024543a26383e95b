//! Non-negative task decomposition of trained sigmoid feedforward networks.
//!
//! The pipeline trains a network with an L1 penalty ([`lnn`]), describes each
//! hidden unit by how strongly every input dimension drives it and how
//! strongly it drives every output dimension ([`attribution`]), factorizes the
//! resulting non-negative matrix into task vectors and unit weights ([`nmf`]),
//! and reads communities and recovery scores off the factors ([`analysis`]).

pub mod analysis;
pub mod attribution;
pub mod datasets;
pub mod error;
pub mod hash;
pub mod lnn;
pub mod matrix;
pub mod nmf;

pub use error::{NtdError, Result};
pub use lnn::{Dataset, NetworkParams, TrainConfig, TrainReport};
pub use matrix::Mat;
