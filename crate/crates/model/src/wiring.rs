//! Network topology in tensor index form.
//!
//! The tape operations address rows by plain index vectors, so the graph
//! structure is flattened once per network into reference-counted lookup
//! tables that every forward pass shares.

use std::rc::Rc;

use hydronet_core::graph::WaterNetwork;

/// Index tables describing one network's directed edges.
///
/// Edges come in opposite-direction pairs; `canonical` marks the member of
/// each pair whose endpoint identifiers sort lexicographically smaller. The
/// canonical edge keeps its value under antisymmetrization and its partner
/// receives the negation.
pub struct Wiring {
    pub n_nodes: usize,
    pub n_edges: usize,
    /// Edge index -> tail node (the node the edge leaves).
    pub from: Rc<Vec<usize>>,
    /// Edge index -> head node (the node the edge enters).
    pub to: Rc<Vec<usize>>,
    /// Edge index -> the opposite-direction edge of the same pipe.
    pub pair: Rc<Vec<usize>>,
    /// Edge index -> true on the canonical member of each pair.
    pub canonical: Rc<Vec<bool>>,
    /// Node index -> true at reservoirs (heads pinned during propagation).
    pub reservoir: Rc<Vec<bool>>,
    /// Indices of consumer nodes in ascending order; loss terms and demand
    /// metrics gather these rows so reservoirs never enter them.
    pub consumers: Rc<Vec<usize>>,
    /// Per-edge resistance coefficients.
    pub resistances: Vec<f64>,
    /// Fixed head at reservoirs, zero elsewhere.
    pub reservoir_heads: Vec<f64>,
    /// Smallest fixed reservoir head, used by the propagation floor.
    pub min_reservoir_head: f64,
}

impl Wiring {
    pub fn new(net: &WaterNetwork) -> Self {
        let n_nodes = net.n_nodes();
        let n_edges = net.n_edges();
        let mut from = Vec::with_capacity(n_edges);
        let mut to = Vec::with_capacity(n_edges);
        let mut pair = Vec::with_capacity(n_edges);
        let mut canonical = Vec::with_capacity(n_edges);
        let mut resistances = Vec::with_capacity(n_edges);
        for (e, edge) in net.edges().iter().enumerate() {
            from.push(edge.from);
            to.push(edge.to);
            pair.push(net.pair(e));
            canonical.push(edge.canonical);
            resistances.push(net.edge_resistance(e));
        }
        let reservoir: Vec<bool> = (0..n_nodes).map(|v| net.is_reservoir(v)).collect();
        let consumers: Vec<usize> = (0..n_nodes).filter(|&v| !net.is_reservoir(v)).collect();
        let reservoir_heads: Vec<f64> = (0..n_nodes)
            .map(|v| net.reservoir_head(v).unwrap_or(0.0))
            .collect();
        Wiring {
            n_nodes,
            n_edges,
            from: Rc::new(from),
            to: Rc::new(to),
            pair: Rc::new(pair),
            canonical: Rc::new(canonical),
            reservoir: Rc::new(reservoir),
            consumers: Rc::new(consumers),
            resistances,
            reservoir_heads,
            min_reservoir_head: net.min_reservoir_head(),
        }
    }
}
