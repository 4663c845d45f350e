//! Frustrated-cluster-loop (FCL) Ising benchmarks on Chimera graphs, a
//! simulated-annealing sampler, and multi-qubit correction (MQC) — a
//! post-processing step that folds a batch of samples into a single sample
//! whose energy is at least as low as the best sample in the batch.

pub mod chimera;
pub mod cli;
mod error;
pub mod experiment;
pub mod fcl;
pub mod ising;
pub mod mqc;
pub mod sampler;

pub use error::{Error, Result};
