//! Learned hydraulic emulation for water distribution networks.
//!
//! The emulator has two halves. [`gcn`] is a trainable graph network that
//! proposes per-edge flows from demand and flow features. [`fixpoint`] is a
//! parameter-free recursion that turns any flow proposal into a complete
//! hydraulic state: heads first, then flows and demands reconstructed from
//! the heads. [`trainer`] fits the first half so the composition reproduces
//! measured demands, [`eval`] scores a fitted model against the reference
//! solver, and [`bench`] times emulator and solver side by side.

use thiserror::Error;

pub mod bench;
pub mod eval;
pub mod fixpoint;
pub mod gcn;
pub mod pipeline;
pub mod trainer;
pub mod wiring;

pub use bench::{benchmark, BenchRow};
pub use eval::{evaluate, EvalReport, Metric, Spread, DEMAND_FLOOR};
pub use fixpoint::{
    fixpoint_apply, floor_constant, propagate_heads, reconstruct_flows_demands, FixpointInput,
    FixpointSolution, FixpointTrace, DEFAULT_ZETA,
};
pub use gcn::{EmulatorConfig, ModelParams};
pub use pipeline::{emulate, run_pipeline, Emulation, PipelineRun};
pub use trainer::{train, EpochRecord, TrainConfig, TrainOutcome};
pub use wiring::Wiring;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{what}: expected {expected} entries, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("bad configuration: {0}")]
    BadConfig(String),

    #[error("checkpoint mismatch: {0}")]
    BadCheckpoint(String),

    #[error(
        "loss became non-finite at epoch {epoch}, scenario {scenario}, step {step}; {detail}"
    )]
    NonFiniteLoss {
        epoch: usize,
        scenario: usize,
        step: usize,
        detail: String,
    },

    #[error(transparent)]
    Network(#[from] hydronet_core::NetworkError),

    #[error(transparent)]
    Autodiff(#[from] hydronet_autodiff::AutodiffError),

    #[error(transparent)]
    Solver(#[from] hydronet_solver::SolveError),
}
