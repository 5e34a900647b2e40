//! Head propagation to a fixed point, and state reconstruction from heads.
//!
//! Given per-edge flow estimates q̂, each directed edge is priced with the
//! head loss the estimate implies for travel against it. Nodes then
//! repeatedly raise their head to the best offer `h_to − w_e` among their
//! outgoing edges, starting from a floor low enough that real offers always
//! win. Reservoir heads are pinned and never move, so heads climb
//! monotonically until an iteration changes nothing; the converged heads
//! determine reconstructed flows and demands in closed form.
//!
//! Two implementations share every expression: a plain `f64` reference, and
//! a mirror over the autodiff tape used during training. The mirror unrolls
//! exactly as many iterations as the reference needed, so both produce
//! bitwise identical values.

use hydronet_autodiff::{Tape, Tensor, ValueId};
use hydronet_core::graph::WaterNetwork;
use hydronet_core::hydraulics::{self, FLOW_EXPONENT};

use crate::wiring::Wiring;
use crate::ModelError;

/// Default shift added to reconstructed flows so the inverse head-loss law
/// stays differentiable where the head difference vanishes.
pub const DEFAULT_ZETA: f64 = 1e-8;

/// Inputs to head propagation over one network.
#[derive(Debug, Clone)]
pub struct FixpointInput {
    /// Per-node starting heads: reservoirs at their fixed head, every other
    /// node at the floor constant.
    pub initial_heads: Vec<f64>,
    /// Per-edge flow estimates q̂.
    pub edge_flows: Vec<f64>,
    /// Per-edge resistance coefficients.
    pub resistances: Vec<f64>,
    /// Shift added to reconstructed flows.
    pub zeta: f64,
}

impl FixpointInput {
    /// Assembles propagation inputs for a flow estimate, computing the floor
    /// constant and the pinned starting heads.
    pub fn new(
        net: &WaterNetwork,
        edge_flows: Vec<f64>,
        zeta: f64,
    ) -> Result<Self, ModelError> {
        if edge_flows.len() != net.n_edges() {
            return Err(ModelError::DimensionMismatch {
                what: "edge flow estimate",
                expected: net.n_edges(),
                got: edge_flows.len(),
            });
        }
        let resistances: Vec<f64> = (0..net.n_edges())
            .map(|e| net.edge_resistance(e))
            .collect();
        let weights = upstream_weights(&resistances, &edge_flows);
        let floor = floor_from_weights(net.min_reservoir_head(), net.n_nodes(), &weights);
        let initial_heads: Vec<f64> = (0..net.n_nodes())
            .map(|v| net.reservoir_head(v).unwrap_or(floor))
            .collect();
        Ok(FixpointInput {
            initial_heads,
            edge_flows,
            resistances,
            zeta,
        })
    }
}

/// What head propagation did on one input.
#[derive(Debug, Clone)]
pub struct FixpointTrace {
    /// Number of iterations that changed at least one head.
    pub iterations: usize,
    /// True when the loop exited because an iteration changed nothing.
    pub converged: bool,
    /// Heads after every executed iteration, including the final unchanged
    /// pass. Kept only on request; used by tests and the debugging CLI.
    pub snapshots: Option<Vec<Vec<f64>>>,
}

/// A complete hydraulic state produced from a flow estimate.
#[derive(Debug, Clone)]
pub struct FixpointSolution {
    pub heads: Vec<f64>,
    pub demands: Vec<f64>,
    pub flows: Vec<f64>,
    pub trace: FixpointTrace,
}

/// Per-edge propagation price: the head loss the flow estimate implies for
/// travel against the edge, zero when the edge points downstream.
pub fn upstream_weights(resistances: &[f64], edge_flows: &[f64]) -> Vec<f64> {
    resistances
        .iter()
        .zip(edge_flows)
        .map(|(&r, &q)| {
            let against = -hydraulics::headloss(r, q);
            if against > 0.0 {
                against
            } else {
                0.0
            }
        })
        .collect()
}

/// Starting head for non-reservoir nodes: low enough that any chain of
/// offers originating at a reservoir beats it. Any simple path has fewer
/// than `n_nodes` edges, so `n_nodes` hops at the worst price suffice.
pub fn floor_constant(net: &WaterNetwork, edge_flows: &[f64]) -> f64 {
    let resistances: Vec<f64> = (0..net.n_edges())
        .map(|e| net.edge_resistance(e))
        .collect();
    let weights = upstream_weights(&resistances, edge_flows);
    floor_from_weights(net.min_reservoir_head(), net.n_nodes(), &weights)
}

pub(crate) fn floor_from_weights(
    min_reservoir_head: f64,
    n_nodes: usize,
    weights: &[f64],
) -> f64 {
    let mut worst = 0.0_f64;
    for &w in weights {
        if w > worst {
            worst = w;
        }
    }
    min_reservoir_head - n_nodes as f64 * worst
}

/// Drives heads to the fixed point of the offer recursion.
///
/// Every iteration reads only the previous iteration's heads: all offers are
/// priced first, then every non-reservoir node takes the maximum of its own
/// head and its best offer. The loop exits when an iteration changes no
/// head, which the max/plus structure reaches in exact float equality.
pub fn propagate_heads(
    net: &WaterNetwork,
    input: &FixpointInput,
    keep_snapshots: bool,
) -> (Vec<f64>, FixpointTrace) {
    let n = net.n_nodes();
    debug_assert_eq!(input.initial_heads.len(), n);
    debug_assert_eq!(input.edge_flows.len(), net.n_edges());
    let weights = upstream_weights(&input.resistances, &input.edge_flows);
    let mut heads = input.initial_heads.clone();
    let mut snapshots = keep_snapshots.then(Vec::new);
    let mut iterations = 0usize;
    loop {
        let mut next = heads.clone();
        let mut changed = false;
        for v in 0..n {
            if net.is_reservoir(v) {
                continue;
            }
            let mut best = f64::NEG_INFINITY;
            for &e in net.out_edges(v) {
                let offer = heads[net.edge(e).to] - weights[e];
                if offer > best {
                    best = offer;
                }
            }
            if best > heads[v] {
                next[v] = best;
                changed = true;
            }
        }
        if let Some(s) = snapshots.as_mut() {
            s.push(next.clone());
        }
        if !changed {
            let trace = FixpointTrace {
                iterations,
                converged: true,
                snapshots,
            };
            return (heads, trace);
        }
        heads = next;
        iterations += 1;
        // Monotone bounded updates stabilize within one pass per node; more
        // means the recursion itself is broken.
        assert!(
            iterations <= n,
            "head propagation still changing after {n} iterations"
        );
    }
}

/// Reconstructs flows and demands from converged heads: each edge carries
/// the flow the head drop across it implies (shifted by `zeta`), and each
/// node's demand balances its outgoing flows.
pub fn reconstruct_flows_demands(
    net: &WaterNetwork,
    heads: &[f64],
    zeta: f64,
) -> (Vec<f64>, Vec<f64>) {
    debug_assert_eq!(heads.len(), net.n_nodes());
    let mut flows = Vec::with_capacity(net.n_edges());
    for (e, edge) in net.edges().iter().enumerate() {
        let drop = heads[edge.from] - heads[edge.to];
        flows.push(hydraulics::flow_from_headloss(net.edge_resistance(e), drop) + zeta);
    }
    let mut demands = vec![0.0; net.n_nodes()];
    for (v, demand) in demands.iter_mut().enumerate() {
        let mut outflow = 0.0;
        for &e in net.out_edges(v) {
            outflow += flows[e];
        }
        *demand = -outflow;
    }
    (flows, demands)
}

/// Full pass from a flow estimate to a hydraulic state: price the edges,
/// propagate heads, reconstruct flows and demands.
pub fn fixpoint_apply(
    net: &WaterNetwork,
    edge_flows: &[f64],
    zeta: f64,
) -> Result<FixpointSolution, ModelError> {
    let input = FixpointInput::new(net, edge_flows.to_vec(), zeta)?;
    let (heads, trace) = propagate_heads(net, &input, false);
    let (flows, demands) = reconstruct_flows_demands(net, &heads, zeta);
    Ok(FixpointSolution {
        heads,
        demands,
        flows,
        trace,
    })
}

/// Handles to the differentiable fixpoint pass recorded on a tape.
pub struct TapeFixpoint {
    /// Converged heads, one row per node.
    pub heads: ValueId,
    /// Reconstructed flows, one row per edge.
    pub flows: ValueId,
    /// Reconstructed demands, one row per node.
    pub demands: ValueId,
    /// Iterations unrolled, as realized by the reference pass.
    pub iterations: usize,
}

/// Records the fixpoint pass on the tape, mirroring the `f64` reference
/// expression for expression so values match bitwise.
///
/// The reference pass runs first on the tape's current values; it fixes both
/// the floor constant (which enters as data, outside the gradient) and the
/// number of iterations to unroll. Gradients flow through the realized
/// argmax branches of every unrolled iteration and through the flow
/// reconstruction.
pub fn fixpoint_on_tape(
    tape: &mut Tape,
    net: &WaterNetwork,
    wiring: &Wiring,
    flow_estimate: ValueId,
    zeta: f64,
) -> Result<TapeFixpoint, ModelError> {
    let estimate_values = tape.value(flow_estimate).as_slice().to_vec();

    let resistances = tape.leaf(Tensor::column(&wiring.resistances));
    let head_loss = tape.signed_power(flow_estimate, FLOW_EXPONENT);
    let head_loss = tape.mul(resistances, head_loss);
    let against = tape.neg(head_loss);
    let weights = tape.relu(against);

    // The reference pass fixes the unroll depth; its floor matches the one
    // derived from the tape's weight values because both come from the same
    // expressions.
    debug_assert_eq!(
        floor_from_weights(
            wiring.min_reservoir_head,
            wiring.n_nodes,
            tape.value(weights).as_slice(),
        )
        .to_bits(),
        floor_constant(net, &estimate_values).to_bits()
    );
    let input = FixpointInput::new(net, estimate_values, zeta)?;
    let (reference_heads, trace) = propagate_heads(net, &input, false);

    let pinned = tape.leaf(Tensor::column(&wiring.reservoir_heads));
    let mut heads = tape.leaf(Tensor::column(&input.initial_heads));
    for _ in 0..trace.iterations {
        let offers_base = tape.gather_rows(heads, wiring.to.clone());
        let offers = tape.sub(offers_base, weights);
        let best = tape.segment_max(offers, wiring.from.clone(), wiring.n_nodes)?;
        let raised = tape.max_pair(heads, best);
        heads = tape.select_rows(wiring.reservoir.clone(), pinned, raised);
    }
    debug_assert!(
        tape.value(heads)
            .as_slice()
            .iter()
            .zip(&reference_heads)
            .all(|(a, b)| a.to_bits() == b.to_bits()),
        "tape propagation diverged from the reference pass"
    );

    let head_from = tape.gather_rows(heads, wiring.from.clone());
    let head_to = tape.gather_rows(heads, wiring.to.clone());
    let drop = tape.sub(head_from, head_to);
    let ratio = tape.div(drop, resistances);
    let reconstructed = tape.signed_power(ratio, 1.0 / FLOW_EXPONENT);
    let flows = tape.add_scalar(reconstructed, zeta);
    let outflow = tape.segment_sum(flows, wiring.from.clone(), wiring.n_nodes);
    let demands = tape.neg(outflow);

    Ok(TapeFixpoint {
        heads,
        flows,
        demands,
        iterations: trace.iterations,
    })
}
