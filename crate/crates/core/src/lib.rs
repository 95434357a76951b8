//! Variance-reduced stochastic gradient methods with momentum acceleration for
//! regularized empirical risk minimization, with the baselines they are usually
//! compared against and the tooling to compare them.
//!
//! - [`dataset`]: sparse examples, LIBSVM I/O, synthetic problems
//! - [`objective`]: losses, regularizers, gradients and proximal operators
//! - [`schedule`]: momentum weights and epoch sizes
//! - [`solver`]: the algorithms and their shared epoch loop
//! - [`diagnostics`]: variance bounds and convergence-rate fits
//! - [`harness`]: experiment specs, traces, reference minima and comparisons

pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod objective;
pub mod schedule;
pub mod solver;
pub mod trace;

pub use dataset::{Dataset, SparseExample, TaskKind};
pub use error::{Error, Result};
pub use objective::{Loss, Objective, ProblemCase, Regularizer};
pub use schedule::{EpochSchedule, ThetaMode, ThetaSchedule};
pub use solver::{run, Algorithm, RunResult, SolverConfig};
pub use trace::TraceRecord;
