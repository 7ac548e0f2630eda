//! Hybrid CAN-bus intrusion detection toolkit.
//!
//! The pipeline ingests (or synthesizes) timestamped CAN traffic, summarizes
//! it into fixed 0.01 s statistics windows, transforms each window into
//! scaled wavelet-coefficient tensors, and classifies every window twice:
//! once with a Pearson-correlation rule and once with a small residual CNN.
//! The two hard flags are fused by binary voting and scored against ground
//! truth.

pub mod cnn;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod ingest;
pub mod pearson;
pub mod pipeline;
pub mod plots;
pub mod segment;
pub mod sim;
pub mod tensor_io;
pub mod wavelet;

pub use error::{Error, Result};
