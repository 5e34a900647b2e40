//! Trainable per-edge flow estimator.
//!
//! Node and edge features (two channels each) are embedded into a latent
//! space by bias-free linear maps, refined by a stack of message-passing
//! layers, and decoded into one flow correction per directed edge. The
//! correction is residual on the first flow channel, so zero parameters
//! reproduce the input flows exactly. A projection step then forces the two
//! directions of every pipe to carry exact negations of one another, and
//! node demands follow by balancing outgoing flows.
//!
//! Every linear map feeds on the activation of its input rather than
//! activating its output; the stack stays bias-free throughout.

use hydronet_autodiff::{Tape, Tensor, ValueId};
use hydronet_core::graph::WaterNetwork;
use hydronet_core::hydraulics;
use hydronet_io::checkpoint::{CheckpointData, NamedTensor};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::wiring::Wiring;
use crate::ModelError;

/// Width and depth of the estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmulatorConfig {
    /// Latent channels per node and per edge.
    pub latent_dim: usize,
    /// Number of message-passing layers.
    pub n_layers: usize,
}

impl Default for EmulatorConfig {
    fn default() -> Self {
        EmulatorConfig {
            latent_dim: 128,
            n_layers: 5,
        }
    }
}

impl EmulatorConfig {
    pub fn new(latent_dim: usize, n_layers: usize) -> Self {
        EmulatorConfig {
            latent_dim,
            n_layers,
        }
    }
}

/// All trainable tensors. Weight matrices are stored input×output, applied
/// from the right to row-major feature matrices; there are no biases.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub latent_dim: usize,
    pub n_layers: usize,
    /// Node embedding, 2 × latent.
    pub alpha: Tensor,
    /// Edge embedding, 2 × latent.
    pub beta: Tensor,
    /// Per-layer message map, (3·latent × latent, latent × latent).
    pub gamma: Vec<(Tensor, Tensor)>,
    /// Per-layer node update, (latent × latent, latent × latent).
    pub eta: Vec<(Tensor, Tensor)>,
    /// Flow decoder, (3·latent × latent, latent × 1).
    pub lambda: (Tensor, Tensor),
}

fn lecun_uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let bound = (3.0 / rows as f64).sqrt();
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    Tensor::from_array(Array2::from_shape_vec((rows, cols), data).expect("shape matches"))
}

impl ModelParams {
    /// Fan-in-scaled uniform initialization, deterministic in the seed.
    pub fn seeded(config: &EmulatorConfig, seed: u64) -> Self {
        let m = config.latent_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alpha = lecun_uniform(&mut rng, 2, m);
        let beta = lecun_uniform(&mut rng, 2, m);
        let mut gamma = Vec::with_capacity(config.n_layers);
        let mut eta = Vec::with_capacity(config.n_layers);
        for _ in 0..config.n_layers {
            gamma.push((
                lecun_uniform(&mut rng, 3 * m, m),
                lecun_uniform(&mut rng, m, m),
            ));
            eta.push((
                lecun_uniform(&mut rng, m, m),
                lecun_uniform(&mut rng, m, m),
            ));
        }
        let lambda = (lecun_uniform(&mut rng, 3 * m, m), lecun_uniform(&mut rng, m, 1));
        ModelParams {
            latent_dim: m,
            n_layers: config.n_layers,
            alpha,
            beta,
            gamma,
            eta,
            lambda,
        }
    }

    /// All-zero parameters; the forward pass degenerates to the residual
    /// identity on the first flow channel.
    pub fn zeros(config: &EmulatorConfig) -> Self {
        let m = config.latent_dim;
        ModelParams {
            latent_dim: m,
            n_layers: config.n_layers,
            alpha: Tensor::zeros(2, m),
            beta: Tensor::zeros(2, m),
            gamma: (0..config.n_layers)
                .map(|_| (Tensor::zeros(3 * m, m), Tensor::zeros(m, m)))
                .collect(),
            eta: (0..config.n_layers)
                .map(|_| (Tensor::zeros(m, m), Tensor::zeros(m, m)))
                .collect(),
            lambda: (Tensor::zeros(3 * m, m), Tensor::zeros(m, 1)),
        }
    }

    /// Tensors paired with their stable names, in canonical order.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("α.W".to_string(), &self.alpha),
            ("β.W".to_string(), &self.beta),
        ];
        for (i, ((g1, g2), (e1, e2))) in self.gamma.iter().zip(&self.eta).enumerate() {
            out.push((format!("γ.{i}.0.W"), g1));
            out.push((format!("γ.{i}.1.W"), g2));
            out.push((format!("η.{i}.0.W"), e1));
            out.push((format!("η.{i}.1.W"), e2));
        }
        out.push(("λ.0.W".to_string(), &self.lambda.0));
        out.push(("λ.1.W".to_string(), &self.lambda.1));
        out
    }

    /// Mutable views in the same canonical order as [`ModelParams::named`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = vec![&mut self.alpha, &mut self.beta];
        for ((g1, g2), (e1, e2)) in self.gamma.iter_mut().zip(self.eta.iter_mut()) {
            out.push(g1);
            out.push(g2);
            out.push(e1);
            out.push(e2);
        }
        out.push(&mut self.lambda.0);
        out.push(&mut self.lambda.1);
        out
    }

    pub fn to_checkpoint(&self) -> CheckpointData {
        CheckpointData {
            latent_dim: self.latent_dim,
            n_layers: self.n_layers,
            tensors: self
                .named()
                .into_iter()
                .map(|(name, t)| NamedTensor {
                    name,
                    rows: t.rows(),
                    cols: t.cols(),
                    data: t.as_slice().to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(data: &CheckpointData) -> Result<Self, ModelError> {
        let config = EmulatorConfig {
            latent_dim: data.latent_dim,
            n_layers: data.n_layers,
        };
        let mut params = ModelParams::zeros(&config);
        // Validate names and shapes against the canonical layout before
        // touching any slot.
        {
            let expected = params.named();
            if data.tensors.len() != expected.len() {
                return Err(ModelError::BadCheckpoint(format!(
                    "expected {} tensors, found {}",
                    expected.len(),
                    data.tensors.len()
                )));
            }
            for ((name, tensor), stored) in expected.iter().zip(&data.tensors) {
                if *name != stored.name {
                    return Err(ModelError::BadCheckpoint(format!(
                        "tensor {} where {} was expected",
                        stored.name, name
                    )));
                }
                if tensor.rows() != stored.rows || tensor.cols() != stored.cols {
                    return Err(ModelError::BadCheckpoint(format!(
                        "tensor {} has shape {}x{}, expected {}x{}",
                        stored.name,
                        stored.rows,
                        stored.cols,
                        tensor.rows(),
                        tensor.cols()
                    )));
                }
                if stored.data.len() != stored.rows * stored.cols {
                    return Err(ModelError::BadCheckpoint(format!(
                        "tensor {} carries {} values for a {}x{} shape",
                        stored.name,
                        stored.data.len(),
                        stored.rows,
                        stored.cols
                    )));
                }
            }
        }
        for (slot, stored) in params.tensors_mut().into_iter().zip(&data.tensors) {
            *slot = Tensor::from_array(
                Array2::from_shape_vec((stored.rows, stored.cols), stored.data.clone())
                .expect("shape validated above"),
            );
        }
        Ok(params)
    }
}

/// Parameter tensors registered on a tape, in canonical order.
pub struct StagedParams {
    pub alpha: ValueId,
    pub beta: ValueId,
    pub gamma: Vec<(ValueId, ValueId)>,
    pub eta: Vec<(ValueId, ValueId)>,
    pub lambda: (ValueId, ValueId),
}

impl ModelParams {
    /// Registers every tensor as a tape leaf so gradients can be collected.
    pub fn stage(&self, tape: &mut Tape) -> StagedParams {
        StagedParams {
            alpha: tape.leaf(self.alpha.clone()),
            beta: tape.leaf(self.beta.clone()),
            gamma: self
                .gamma
                .iter()
                .map(|(a, b)| (tape.leaf(a.clone()), tape.leaf(b.clone())))
                .collect(),
            eta: self
                .eta
                .iter()
                .map(|(a, b)| (tape.leaf(a.clone()), tape.leaf(b.clone())))
                .collect(),
            lambda: (
                tape.leaf(self.lambda.0.clone()),
                tape.leaf(self.lambda.1.clone()),
            ),
        }
    }
}

impl StagedParams {
    /// Leaf ids in the same canonical order as [`ModelParams::named`].
    pub fn ids(&self) -> Vec<ValueId> {
        let mut out = vec![self.alpha, self.beta];
        for ((g1, g2), (e1, e2)) in self.gamma.iter().zip(&self.eta) {
            out.push(*g1);
            out.push(*g2);
            out.push(*e1);
            out.push(*e2);
        }
        out.push(self.lambda.0);
        out.push(self.lambda.1);
        out
    }
}

/// Handles produced by one estimator pass.
pub struct EmulatorOutputs {
    /// Estimated flows before the antisymmetry projection, one row per edge.
    pub raw_flows: ValueId,
    /// Projected flows: opposite directions carry exact negations.
    pub flows: ValueId,
    /// Node demands balancing the projected flows.
    pub demands: ValueId,
}

/// Starting features for an estimation run: node features (true demand in
/// both channels, zero at reservoirs), edge features (both channels carry
/// the flow implied by the starting heads), and the starting heads
/// themselves (reservoirs fixed, zero elsewhere).
pub fn init_features(
    net: &WaterNetwork,
    demands: &[f64],
) -> Result<(Tensor, Tensor, Vec<f64>), ModelError> {
    if demands.len() != net.n_nodes() {
        return Err(ModelError::DimensionMismatch {
            what: "demand vector",
            expected: net.n_nodes(),
            got: demands.len(),
        });
    }
    let heads: Vec<f64> = (0..net.n_nodes())
        .map(|v| net.reservoir_head(v).unwrap_or(0.0))
        .collect();
    let mut node_features = Array2::zeros((net.n_nodes(), 2));
    for v in 0..net.n_nodes() {
        let d = if net.is_reservoir(v) { 0.0 } else { demands[v] };
        node_features[(v, 0)] = d;
        node_features[(v, 1)] = d;
    }
    let mut edge_features = Array2::zeros((net.n_edges(), 2));
    for (e, edge) in net.edges().iter().enumerate() {
        let drop = heads[edge.from] - heads[edge.to];
        let q = hydraulics::flow_from_headloss(net.edge_resistance(e), drop);
        edge_features[(e, 0)] = q;
        edge_features[(e, 1)] = q;
    }
    Ok((
        Tensor::from_array(node_features),
        Tensor::from_array(edge_features),
        heads,
    ))
}

/// Forces opposite edge directions to carry exact negations: the canonical
/// member of each pair keeps its value, its partner takes the negation.
pub fn antisymmetrize(tape: &mut Tape, wiring: &Wiring, raw_flows: ValueId) -> ValueId {
    let negated = tape.neg(raw_flows);
    let partner = tape.gather_rows(negated, wiring.pair.clone());
    tape.select_rows(wiring.canonical.clone(), raw_flows, partner)
}

/// Node demands from antisymmetric flows: the negated sum of outgoing rows.
pub fn demands_from_flows(tape: &mut Tape, wiring: &Wiring, flows: ValueId) -> ValueId {
    let outflow = tape.segment_sum(flows, wiring.from.clone(), wiring.n_nodes);
    tape.neg(outflow)
}

/// Records one estimator pass on the tape.
///
/// `node_features` is nodes×2, `edge_features` edges×2. Each layer prices
/// every edge from the latents of its endpoints (entering node first) and
/// its own latent, takes the per-node maximum over outgoing edges as the
/// node update, and keeps the per-edge message as the next edge latent.
pub fn forward(
    tape: &mut Tape,
    wiring: &Wiring,
    params: &StagedParams,
    node_features: ValueId,
    edge_features: ValueId,
) -> Result<EmulatorOutputs, ModelError> {
    let nf = tape.value(node_features);
    if nf.rows() != wiring.n_nodes || nf.cols() != 2 {
        return Err(ModelError::DimensionMismatch {
            what: "node feature rows",
            expected: wiring.n_nodes,
            got: nf.rows(),
        });
    }
    let ef = tape.value(edge_features);
    if ef.rows() != wiring.n_edges || ef.cols() != 2 {
        return Err(ModelError::DimensionMismatch {
            what: "edge feature rows",
            expected: wiring.n_edges,
            got: ef.rows(),
        });
    }

    let activated_nodes = tape.selu(node_features);
    let mut node_latent = tape.matmul(activated_nodes, params.alpha);
    let activated_edges = tape.selu(edge_features);
    let mut edge_latent = tape.matmul(activated_edges, params.beta);

    for ((gamma1, gamma2), (eta1, eta2)) in params.gamma.iter().zip(&params.eta) {
        let latent_to = tape.gather_rows(node_latent, wiring.to.clone());
        let latent_from = tape.gather_rows(node_latent, wiring.from.clone());
        let stacked = tape.concat_cols(&[latent_to, latent_from, edge_latent]);
        let stacked = tape.selu(stacked);
        let hidden = tape.matmul(stacked, *gamma1);
        let hidden = tape.selu(hidden);
        let message = tape.matmul(hidden, *gamma2);

        let aggregated = tape.segment_max(message, wiring.from.clone(), wiring.n_nodes)?;
        let updated = tape.matmul(aggregated, *eta1);
        let updated = tape.selu(updated);
        node_latent = tape.matmul(updated, *eta2);
        edge_latent = message;
    }

    let latent_to = tape.gather_rows(node_latent, wiring.to.clone());
    let latent_from = tape.gather_rows(node_latent, wiring.from.clone());
    let stacked = tape.concat_cols(&[latent_to, latent_from, edge_latent]);
    let stacked = tape.selu(stacked);
    let hidden = tape.matmul(stacked, params.lambda.0);
    let hidden = tape.selu(hidden);
    let correction = tape.matmul(hidden, params.lambda.1);

    let first_channel = tape.leaf(Tensor::from_array(
        Array2::from_shape_vec((2, 1), vec![1.0, 0.0]).expect("shape matches"),
    ));
    let base_flow = tape.matmul(edge_features, first_channel);
    let raw_flows = tape.add(base_flow, correction);

    let flows = antisymmetrize(tape, wiring, raw_flows);
    let demands = demands_from_flows(tape, wiring, flows);
    Ok(EmulatorOutputs {
        raw_flows,
        flows,
        demands,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use hydronet_autodiff::{SELU_ALPHA, SELU_SCALE};
    use hydronet_core::graph::NetworkBuilder;
    use hydronet_core::synth::{random_connected, SynthConfig};

    const UNIT_LENGTH: f64 = 1.0 / 10.667;

    fn tiny_config() -> EmulatorConfig {
        EmulatorConfig {
            latent_dim: 4,
            n_layers: 2,
        }
    }

    fn two_node_net() -> WaterNetwork {
        NetworkBuilder::new()
            .reservoir("R", 100.0)
            .node("A", 0.0)
            .pipe("P", "R", "A", UNIT_LENGTH, 1.0, 1.0)
            .unwrap()
            .build()
            .unwrap()
    }

    fn feature_leaves(
        tape: &mut Tape,
        nodes: &[[f64; 2]],
        edges: &[[f64; 2]],
    ) -> (ValueId, ValueId) {
        let n = Array2::from_shape_vec(
            (nodes.len(), 2),
            nodes.iter().flatten().copied().collect(),
        )
        .unwrap();
        let e = Array2::from_shape_vec(
            (edges.len(), 2),
            edges.iter().flatten().copied().collect(),
        )
        .unwrap();
        (
            tape.leaf(Tensor::from_array(n)),
            tape.leaf(Tensor::from_array(e)),
        )
    }

    #[test]
    fn zero_parameters_reproduce_the_first_flow_channel() {
        let net = two_node_net();
        let wiring = Wiring::new(&net);
        let params = ModelParams::zeros(&tiny_config());
        let mut tape = Tape::new();
        let staged = params.stage(&mut tape);
        let (d, q) = feature_leaves(
            &mut tape,
            &[[0.4, 0.4], [1.2, 1.2]],
            &[[0.8, 0.1], [-0.8, 0.1]],
        );
        let out = forward(&mut tape, &wiring, &staged, d, q).unwrap();
        let raw = tape.value(out.raw_flows);
        assert_eq!(raw.get(0, 0), 0.8);
        assert_eq!(raw.get(1, 0), -0.8);
    }

    #[test]
    fn single_unit_forward_matches_hand_computation() {
        // One latent channel, one layer; every step is scalar arithmetic.
        let config = EmulatorConfig {
            latent_dim: 1,
            n_layers: 1,
        };
        let net = two_node_net();
        let wiring = Wiring::new(&net);

        let mut params = ModelParams::zeros(&config);
        let set = |t: &mut Tensor, vals: &[f64]| {
            t.as_slice_mut().copy_from_slice(vals);
        };
        set(&mut params.alpha, &[0.3, -0.2]);
        set(&mut params.beta, &[0.4, 0.1]);
        set(&mut params.gamma[0].0, &[0.2, -0.5, 0.7]);
        set(&mut params.gamma[0].1, &[0.6]);
        set(&mut params.eta[0].0, &[-0.4]);
        set(&mut params.eta[0].1, &[0.9]);
        set(&mut params.lambda.0, &[0.5, 0.3, -0.6]);
        set(&mut params.lambda.1, &[1.1]);

        let d = [[0.5, 0.25], [1.0, -0.5]];
        let q = [[0.8, -0.3], [-0.8, 0.2]];

        let mut tape = Tape::new();
        let staged = params.stage(&mut tape);
        let (dv, qv) = feature_leaves(&mut tape, &d, &q);
        let out = forward(&mut tape, &wiring, &staged, dv, qv).unwrap();
        let raw = tape.value(out.raw_flows);

        let s = |x: f64| {
            if x > 0.0 {
                SELU_SCALE * x
            } else {
                SELU_SCALE * SELU_ALPHA * (x.exp() - 1.0)
            }
        };
        // Node and edge embeddings. Node 0 is R, node 1 is A; edge 0 runs
        // R->A, edge 1 runs A->R.
        let g_r = s(0.5) * 0.3 + s(0.25) * -0.2;
        let g_a = s(1.0) * 0.3 + s(-0.5) * -0.2;
        let z0 = s(0.8) * 0.4 + s(-0.3) * 0.1;
        let z1 = s(-0.8) * 0.4 + s(0.2) * 0.1;
        // Layer messages: entering node's latent first, then the tail's,
        // then the edge latent.
        let m0 = s(s(g_a) * 0.2 + s(g_r) * -0.5 + s(z0) * 0.7) * 0.6;
        let m1 = s(s(g_r) * 0.2 + s(g_a) * -0.5 + s(z1) * 0.7) * 0.6;
        // Each node has exactly one outgoing edge, so the maximum is direct.
        let g_r2 = s(m0 * -0.4) * 0.9;
        let g_a2 = s(m1 * -0.4) * 0.9;
        // Decoder with the residual on the first flow channel.
        let q0 = 0.8 + s(s(g_a2) * 0.5 + s(g_r2) * 0.3 + s(m0) * -0.6) * 1.1;
        let q1 = -0.8 + s(s(g_r2) * 0.5 + s(g_a2) * 0.3 + s(m1) * -0.6) * 1.1;

        assert_relative_eq!(raw.get(0, 0), q0, max_relative = 1e-12);
        assert_relative_eq!(raw.get(1, 0), q1, max_relative = 1e-12);
    }

    #[test]
    fn projection_negates_pairs_exactly_and_demands_balance() {
        let net = random_connected(&SynthConfig {
            n_nodes: 14,
            extra_pipes: 5,
            n_reservoirs: 2,
            seed: 5,
        });
        let wiring = Wiring::new(&net);
        let params = ModelParams::seeded(&tiny_config(), 11);
        let mut tape = Tape::new();
        let staged = params.stage(&mut tape);

        let demands: Vec<[f64; 2]> = (0..net.n_nodes())
            .map(|v| {
                let d = if net.is_reservoir(v) { 0.0 } else { 0.3 + v as f64 * 0.05 };
                [d, d]
            })
            .collect();
        let flows: Vec<[f64; 2]> = (0..net.n_edges())
            .map(|e| [((e % 9) as f64 - 4.0) * 0.4, ((e % 5) as f64 - 2.0) * 0.3])
            .collect();
        let (dv, qv) = feature_leaves(&mut tape, &demands, &flows);
        let out = forward(&mut tape, &wiring, &staged, dv, qv).unwrap();

        let raw = tape.value(out.raw_flows).as_slice().to_vec();
        let q = tape.value(out.flows).as_slice().to_vec();
        for e in 0..net.n_edges() {
            let p = net.pair(e);
            assert_eq!(q[e].to_bits(), (-q[p]).to_bits());
            if net.edge(e).canonical {
                assert_eq!(q[e].to_bits(), raw[e].to_bits());
            }
        }

        let d = tape.value(out.demands).as_slice().to_vec();
        for v in 0..net.n_nodes() {
            let mut outflow = 0.0;
            for &e in net.out_edges(v) {
                outflow += q[e];
            }
            assert_eq!(d[v], -outflow);
        }
        // Total demand vanishes exactly when accumulated pipe by pipe,
        // because each pair contributes a value and its exact negation.
        let mut total = 0.0;
        for p in 0..net.n_pipes() {
            total += q[2 * p] + q[2 * p + 1];
        }
        assert_eq!(total, 0.0);
    }

    #[test]
    fn forward_is_equivariant_under_node_relabeling() {
        let build = |flip: bool| {
            let mut b = NetworkBuilder::new();
            if flip {
                b = b.node("C", 0.0).node("B", 0.0).node("A", 0.0).reservoir("R", 80.0);
            } else {
                b = b.reservoir("R", 80.0).node("A", 0.0).node("B", 0.0).node("C", 0.0);
            }
            b.pipe("P0", "R", "A", UNIT_LENGTH, 1.0, 1.0)
                .unwrap()
                .pipe("P1", "A", "B", UNIT_LENGTH, 1.0, 1.0)
                .unwrap()
                .pipe("P2", "B", "C", UNIT_LENGTH, 1.0, 1.0)
                .unwrap()
                .pipe("P3", "C", "R", UNIT_LENGTH, 1.0, 1.0)
                .unwrap()
                .build()
                .unwrap()
        };
        let demand_of = |id: &str| match id {
            "A" => 0.7,
            "B" => 0.2,
            "C" => 1.1,
            _ => 0.0,
        };

        let params = ModelParams::seeded(&tiny_config(), 3);
        let mut results: Vec<(Vec<f64>, Vec<(String, f64)>)> = Vec::new();
        for flip in [false, true] {
            let net = build(flip);
            let wiring = Wiring::new(&net);
            let mut tape = Tape::new();
            let staged = params.stage(&mut tape);
            let demands: Vec<[f64; 2]> = net
                .nodes()
                .iter()
                .map(|n| {
                    let d = demand_of(&n.id);
                    [d, d]
                })
                .collect();
            let flows: Vec<[f64; 2]> = (0..net.n_edges())
                .map(|e| [((e % 4) as f64 - 1.5) * 0.6, ((e % 3) as f64 - 1.0) * 0.4])
                .collect();
            let (dv, qv) = feature_leaves(&mut tape, &demands, &flows);
            let out = forward(&mut tape, &wiring, &staged, dv, qv).unwrap();
            let q = tape.value(out.flows).as_slice().to_vec();
            let d: Vec<(String, f64)> = tape
                .value(out.demands)
                .as_slice()
                .iter()
                .zip(net.nodes())
                .map(|(&val, node)| (node.id.clone(), val))
                .collect();
            results.push((q, d));
        }

        // Pipes were declared in the same order, so edge indices coincide;
        // node rows are matched up by identifier.
        assert_eq!(results[0].0.len(), results[1].0.len());
        for (a, b) in results[0].0.iter().zip(&results[1].0) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let mut by_id = results[1].1.clone();
        by_id.sort_by(|l, r| l.0.cmp(&r.0));
        let mut base = results[0].1.clone();
        base.sort_by(|l, r| l.0.cmp(&r.0));
        for ((id_a, val_a), (id_b, val_b)) in base.iter().zip(&by_id) {
            assert_eq!(id_a, id_b);
            assert_eq!(val_a.to_bits(), val_b.to_bits());
        }
    }

    #[test]
    fn starting_features_follow_the_reservoir_heads() {
        let net = NetworkBuilder::new()
            .reservoir("R", 100.0)
            .node("A", 0.0)
            .node("B", 0.0)
            .pipe("P0", "R", "A", UNIT_LENGTH, 1.0, 1.0)
            .unwrap()
            .pipe("P1", "A", "B", UNIT_LENGTH, 1.0, 1.0)
            .unwrap()
            .build()
            .unwrap();
        let demands = vec![0.0, 0.9, 0.4];
        let (d, q, heads) = init_features(&net, &demands).unwrap();

        let r = net.node_index("R").unwrap();
        assert_eq!(heads[r], 100.0);
        assert_eq!(d.get(r, 0), 0.0);
        assert_eq!(d.get(r, 1), 0.0);
        let a = net.node_index("A").unwrap();
        assert_eq!(d.get(a, 0), 0.9);
        assert_eq!(heads[a], 0.0);

        // Only edges touching the reservoir see a head difference.
        for (e, edge) in net.edges().iter().enumerate() {
            let touches = edge.from == r || edge.to == r;
            assert_eq!(q.get(e, 0) != 0.0, touches, "edge {e}");
            assert_eq!(q.get(e, 0), q.get(e, 1));
        }
        let drop = hydraulics::flow_from_headloss(net.edge_resistance(0), 100.0);
        assert_relative_eq!(q.get(0, 0), drop, max_relative = 1e-12);
    }

    #[test]
    fn checkpoint_round_trip_preserves_every_tensor() {
        let params = ModelParams::seeded(&tiny_config(), 77);
        let data = params.to_checkpoint();
        assert_eq!(data.tensors[0].name, "α.W");
        assert_eq!(data.tensors.len(), 2 + 4 * 2 + 2);

        let back = ModelParams::from_checkpoint(&data).unwrap();
        for ((name_a, t_a), (name_b, t_b)) in params.named().iter().zip(back.named().iter()) {
            assert_eq!(name_a, name_b);
            assert_eq!(t_a.as_slice(), t_b.as_slice());
        }

        let mut bad = params.to_checkpoint();
        bad.tensors.swap(0, 1);
        let err = ModelParams::from_checkpoint(&bad).unwrap_err();
        assert!(matches!(err, ModelError::BadCheckpoint(_)));
    }

    #[test]
    fn seeded_initialization_is_deterministic_and_fan_in_bounded() {
        let config = EmulatorConfig {
            latent_dim: 8,
            n_layers: 3,
        };
        let a = ModelParams::seeded(&config, 42);
        let b = ModelParams::seeded(&config, 42);
        for ((_, t_a), (_, t_b)) in a.named().iter().zip(b.named().iter()) {
            assert_eq!(t_a.as_slice(), t_b.as_slice());
        }
        let c = ModelParams::seeded(&config, 43);
        assert_ne!(a.alpha.as_slice(), c.alpha.as_slice());

        for (name, t) in a.named() {
            let bound = (3.0 / t.rows() as f64).sqrt();
            assert!(
                t.as_slice().iter().all(|v| v.abs() < bound),
                "{name} exceeds its fan-in bound"
            );
        }
    }
}
