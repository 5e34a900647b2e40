//! File formats and dataset plumbing.
//!
//! Three concerns live here:
//!
//! * a parser and renderer for the subset of the EPANET INP text format the
//!   toolkit understands (junctions, reservoirs, pipes, demands, patterns,
//!   coordinates, options), converting everything to meters and cubic meters
//!   per hour on load;
//! * demand/diameter scenario generation with per-scenario derived seeds, so
//!   results are reproducible regardless of how work is scheduled;
//! * two small binary containers, one for datasets and one for model
//!   checkpoints, written little-endian with explicit versioning so files
//!   round-trip bit-exactly.

pub mod checkpoint;
mod container;
pub mod dataset;
pub mod inp;
pub mod scenario;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointData, NamedTensor};
pub use dataset::{load_dataset, network_hash, save_dataset};
pub use inp::{parse_inp, render_inp, FlowUnits, InpDocument, InpError, ParsedInp};
pub use scenario::{
    generate_scenarios, generate_scenarios_with, split_ranges, DemandBasis, Scenario,
    ScenarioConfig, ScenarioSet,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("bad magic: expected `{expected}`")]
    BadMagic { expected: &'static str },

    #[error("unsupported container version {got} (expected {expected})")]
    Version { expected: u32, got: u32 },

    #[error("dataset was built for a different network (hash mismatch)")]
    HashMismatch,

    #[error("file truncated while reading {what}")]
    Truncated { what: &'static str },

    #[error("implausible {what} in header: {value}")]
    BadValue { what: &'static str, value: u64 },
}
