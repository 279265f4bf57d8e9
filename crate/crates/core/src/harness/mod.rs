//! Experiment driver: ensembles, regularization sweeps, density targeting
//! and figure tables.
//!
//! Results depend only on the configuration and seeds. Members are fitted
//! on a bounded worker pool and merged in member order, so the worker
//! count changes wall time but not a single output byte.

pub mod config;
pub mod ensemble;
pub mod figures;
pub mod report;
pub mod sweep;
pub mod target;

pub use config::{DataSource, ExperimentConfig, RealSource, RegGrid, SyntheticSource};
pub use ensemble::{Ensemble, Member};
pub use figures::{members_for_scale, reproduce_figure, FigureId, FigureOutput, ReproduceOptions, SolverPosterior};
pub use report::write_sweep;
pub use sweep::{run_sweep, run_sweep_on, SweepContext, SweepCurve, SweepOutput, SweepRow};
pub use target::{target_rho, target_rho_on, TargetOptions, TargetResult};
