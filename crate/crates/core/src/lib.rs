pub mod digest;
pub mod cli;
pub mod error;
pub mod experiment;
pub mod geo;
pub mod ingest;
pub mod laws;
pub mod overlap;
pub mod predictors;
pub mod rerank;
pub mod synth;
pub mod traj;

pub use error::{Error, Result};
