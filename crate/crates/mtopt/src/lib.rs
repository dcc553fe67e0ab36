//! Multi-task optimization laboratory.
//!
//! Small, dependency-light building blocks for studying how multi-task
//! gradient aggregation interacts with modern optimizers:
//!
//! - [`linalg`] — dense small-matrix kernels: Jacobi SVD, polar factors,
//!   Newton-Schulz orthogonalization, min-norm points on the simplex.
//! - [`aggregators`] — linear scalarization, PCGrad, MGDA, CAGrad and
//!   sigmoid-gated direction preservation (LDP).
//! - [`optimizers`] — SGD, Adam/AdamW and Muon, with an optional
//!   curvature-adaptive first-moment coefficient ("apt" mode).
//! - [`diagnostics`] — similarity timelines, projection norms, spectral
//!   effective rank, delta-m% and mean-rank score tables.
//! - [`problems`] — synthetic multi-task objectives with analytic gradients
//!   and Pareto-stationarity certificates.
//! - [`harness`] — config-driven runs, beta sweeps, JSONL trajectories and
//!   CSV summaries; also behind the `mtopt` CLI.
//!
//! See the `examples/` directory for one runnable example per capability.

pub mod aggregators;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod optimizers;
pub mod problems;

pub use error::{Error, Result};
