//! File formats, the parallel fitting pipeline, the replicate benchmark
//! harness and the `skgp` command line, built on `skgp-core`.

pub mod bench;
pub mod bundle;
pub mod csvio;
pub mod error;
pub mod pipeline;
pub mod threads;

pub use error::{Result, SkgpError};
