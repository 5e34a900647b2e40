//! Snapshot of the hydraulic variables on a network.

use crate::error::NetworkError;
use crate::graph::WaterNetwork;

/// Heads, demands and flows for one steady state.
///
/// `heads` and `demands` are indexed by node, `flows` by directed edge.
/// `physical` marks states whose antiparallel flow pairs are exact negations
/// (solver outputs are; raw model estimates before antisymmetrization are
/// not).
#[derive(Debug, Clone, PartialEq)]
pub struct HydraulicState {
    pub heads: Vec<f64>,
    pub demands: Vec<f64>,
    pub flows: Vec<f64>,
    pub physical: bool,
}

impl HydraulicState {
    pub fn zeros(net: &WaterNetwork) -> Self {
        HydraulicState {
            heads: vec![0.0; net.n_nodes()],
            demands: vec![0.0; net.n_nodes()],
            flows: vec![0.0; net.n_edges()],
            physical: false,
        }
    }

    pub fn check_dims(&self, net: &WaterNetwork) -> Result<(), NetworkError> {
        for (what, expected, got) in [
            ("heads", net.n_nodes(), self.heads.len()),
            ("demands", net.n_nodes(), self.demands.len()),
            ("flows", net.n_edges(), self.flows.len()),
        ] {
            if expected != got {
                return Err(NetworkError::DimensionMismatch {
                    what,
                    expected,
                    got,
                });
            }
        }
        Ok(())
    }

    /// Pressure head above ground at a node.
    pub fn pressure(&self, net: &WaterNetwork, v: usize) -> f64 {
        self.heads[v] - net.node(v).elevation
    }

    /// Largest absolute antisymmetry defect over edge pairs; zero for states
    /// produced by the solver.
    pub fn antisymmetry_defect(&self, net: &WaterNetwork) -> f64 {
        (0..net.n_pipes())
            .map(|p| (self.flows[2 * p] + self.flows[2 * p + 1]).abs())
            .fold(0.0, f64::max)
    }
}
