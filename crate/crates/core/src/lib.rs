//! Functional and cycle-level model of a decoupled matrix-multiplication
//! engine for relaxed N:M structured sparsity.
//!
//! The crate is organised bottom-up:
//!
//! * [`sparse`] and [`matrix`] hold the operand formats (packed N:M rows and
//!   dense row-major matrices) plus pruning and synthetic generation.
//! * [`functional`] is the bit-exact reference: a dense GEMM oracle, the
//!   row-wise sparse x dense product and the tiling arithmetic.
//! * [`engine`] is the cycle-stepped model of one `DeMM(N, M, C, k)` instance.
//! * [`baselines`] holds analytical systolic-array latency models.
//! * [`workloads`] lowers CNN layers to GEMM problems.
//! * [`experiment`] and [`report`] drive layer sweeps and emit result rows.
//!
//! With the `parallel` feature (on by default) batch work runs on rayon;
//! without it every [`Execution`] falls back to a plain loop.

pub mod baselines;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod functional;
pub mod matrix;
pub mod par;
pub mod report;
pub mod sparse;
pub mod text;
pub mod workloads;

pub use error::{DemmError, Result};
pub use par::Execution;
