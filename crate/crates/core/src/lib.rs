//! Sketched Gaussian process regression.
//!
//! High-dimensional features are screened by marginal spline association
//! with the response, compressed by random Gaussian sketches, and fed to
//! exact conjugate GP regressions. The per-sketch Student-t predictive laws
//! are combined by log-score stacking over held-out folds.
//!
//! This crate is `no_std` (with `alloc`) and contains only numerics. File
//! formats, parallel orchestration and the command line live in the `skgp`
//! crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod dataset;
mod error;
pub mod gp;
pub mod linalg;
pub mod metrics;
pub mod optim;
pub mod rng;
pub mod screening;
pub mod simgen;
pub mod sketch;
pub mod special;
pub mod stacking;

pub use dataset::{Dataset, FoldPlan, StandardizationParams};
pub use error::Error;
pub use gp::{FittedGP, GPHyper, HyperSearchConfig, PosteriorSummary, PredictiveT};
pub use linalg::Matrix;
pub use screening::{ScreeningConfig, ScreeningResult};
pub use sketch::SketchMatrix;
pub use stacking::{DensityTable, ModelSpec, StackWeights, StackedPredictive};

pub type Result<T, E = Error> = core::result::Result<T, E>;
