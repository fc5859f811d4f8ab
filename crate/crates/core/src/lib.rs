//! Deterministic single-process simulator for memory-based distributed SGD
//! with momentum (M-DSGD).
//!
//! The crate runs `p` simulated workers that each keep a momentum buffer and a
//! memory (error-feedback) vector, communicate masked updates, and aggregate
//! them in a fixed order. Alongside the simulation it materializes the
//! auxiliary sequence `z_t = w_t + rho_{t-1} g_{t-1} - eta_t u_t`, whose exact
//! recursion is checked at every step, and provides the stagewise driver for
//! weakly convex objectives together with Moreau-envelope diagnostics.
//!
//! Module map:
//! - [`vector`], [`rng`]: shared value types and counter-based randomness.
//! - [`problems`]: synthetic finite-sum objectives with gradient oracles.
//! - [`compress`]: mask strategies and the memory-norm bound.
//! - [`engine`]: schedules, the worker update rules, and the simulator.
//! - [`diagnose`]: the z-sequence, residual checks, theory constants, prox.
//! - [`stagewise`]: stagewise M-DSGD on prox-regularized objectives.
//! - [`config`], [`metrics`], [`cli`]: experiment files and the command line.

pub mod cli;
pub mod compress;
pub mod config;
pub mod diagnose;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod problems;
pub mod rng;
pub mod stagewise;
pub mod vector;

pub use compress::{CompressorKind, CompressorSpec};
pub use engine::{run, Engine, RunConfig, RunOutput, Schedule, ScheduleFamily, Variant};
pub use error::{Error, Result};
pub use metrics::MetricsRow;
pub use problems::{make_problem, Oracle, Problem, ProblemSpec};
pub use vector::{ParamVector, SparseMask};
