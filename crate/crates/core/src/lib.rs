//! Singular value-based rehearsal for continual learning on synthetic
//! drifting-domain sequence tasks, with baselines and evaluation.

pub mod baselines;
pub mod binfmt;
pub mod checkpoint;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod memory;
pub mod metrics;
pub mod nnet;
pub mod report;
pub mod svr;
pub mod taskgen;
pub mod train;

pub use error::{Error, Result};
