//! Core data model for pressurized water distribution networks.
//!
//! A network is a set of nodes (consumers with a demand, reservoirs with a
//! fixed hydraulic head) joined by pipes. Every physical pipe is stored as a
//! pair of antiparallel directed edges so that flow direction is a sign
//! convention rather than a structural property: flow on edge `e = (v, u)` is
//! positive when water leaves `v` towards `u`, and the two edges of a pair
//! always carry exact negations of each other in a physical state.
//!
//! Units are meters for heads, elevations, lengths and diameters, and cubic
//! meters per hour for flows and demands. All arithmetic is `f64`.

pub mod graph;
pub mod hydraulics;
pub mod state;
pub mod synth;
pub mod topo;

mod error;

pub use error::NetworkError;
pub use graph::{DirectedEdge, NetworkBuilder, Node, NodeKind, Pipe, PipeAttr, WaterNetwork};
pub use hydraulics::{
    flow_from_headloss, headloss, node_imbalance, resistance_coefficient, signed_power,
    FLOW_EXPONENT,
};
pub use state::HydraulicState;
pub use topo::{graph_diameter, max_reservoir_distance};
