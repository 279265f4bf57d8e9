//! Sparse linear regression with the Variational Garrote.
//!
//! The crate provides three solvers (Ridge, LASSO, VG), a spike-and-slab
//! benchmark generator, mask extraction that puts all three solvers on a
//! common sparsity scale, ensemble selection metrics with their mean-field
//! predictions, inference of the true variable density from selection
//! uncertainty, loaders for two UCI regression datasets, and an experiment
//! harness that writes figure-ready CSV tables.

pub mod datagen;
pub mod error;
pub mod harness;
pub mod ingest;
pub mod io;
pub mod linalg;
pub mod masking;
pub mod metrics;
pub mod rng;
pub mod solvers;
pub mod sparsity;
pub mod types;

pub use error::{Error, Result};
pub use types::{Dataset, FitResult, GroundTruth, SolverId};
