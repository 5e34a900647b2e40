//! Repeated application of the flow estimator and the head recursion.
//!
//! One application runs the graph network on the current features, projects
//! its flows, and feeds them through the head recursion. The features of the
//! next application are rewired from the outputs: the first demand channel
//! stays pinned to the true demands, the second becomes the estimated
//! demands, and the two flow channels become the estimated and the
//! reconstructed flows. The head input of the recursion never changes.
//!
//! By default only the final application carries gradients: outputs of the
//! earlier ones re-enter as plain values. The full unroll keeps every
//! application on the graph instead and is the variant a finite-difference
//! probe of the whole composition must use.

use hydronet_autodiff::{Tape, Tensor, ValueId};
use hydronet_core::WaterNetwork;

use crate::fixpoint::fixpoint_on_tape;
use crate::gcn::{forward, init_features, ModelParams, StagedParams};
use crate::wiring::Wiring;
use crate::ModelError;

/// A finished run: the tape plus handles to the final application's outputs.
pub struct PipelineRun {
    pub tape: Tape,
    /// Parameter leaves, in canonical tensor order via [`StagedParams::ids`].
    pub staged: StagedParams,
    /// Projected flow estimate of the final application, one row per edge.
    pub flow_estimate: ValueId,
    /// Node demands balancing the flow estimate.
    pub demand_estimate: ValueId,
    /// Reconstructed heads, one row per node.
    pub heads: ValueId,
    /// Reconstructed flows, one row per edge.
    pub flows: ValueId,
    /// Reconstructed demands, one row per node.
    pub demands: ValueId,
}

/// Runs `applications` estimator/recursion rounds for one demand sample.
///
/// `demands` is the full nodal demand row; reservoir entries are ignored by
/// the feature initialization. With `full_unroll` the feature rewiring stays
/// on the tape, otherwise intermediate outputs re-enter as fresh leaves.
pub fn run_pipeline(
    net: &WaterNetwork,
    wiring: &Wiring,
    params: &ModelParams,
    demands: &[f64],
    applications: usize,
    zeta: f64,
    full_unroll: bool,
) -> Result<PipelineRun, ModelError> {
    if applications == 0 {
        return Err(ModelError::BadConfig(
            "pipeline needs at least one application".into(),
        ));
    }
    let (node0, edge0, _heads0) = init_features(net, demands)?;
    let mut tape = Tape::new();
    let staged = params.stage(&mut tape);

    if full_unroll {
        let d_star: Vec<f64> = (0..wiring.n_nodes).map(|v| node0.get(v, 0)).collect();
        let q_start: Vec<f64> = (0..wiring.n_edges).map(|e| edge0.get(e, 0)).collect();
        let d_pinned = tape.leaf(Tensor::column(&d_star));
        let mut d_second = tape.leaf(Tensor::column(&d_star));
        let mut q_first = tape.leaf(Tensor::column(&q_start));
        let mut q_second = tape.leaf(Tensor::column(&q_start));
        for round in 0..applications {
            let node_features = tape.concat_cols(&[d_pinned, d_second]);
            let edge_features = tape.concat_cols(&[q_first, q_second]);
            let out = forward(&mut tape, wiring, &staged, node_features, edge_features)?;
            let fixed = fixpoint_on_tape(&mut tape, net, wiring, out.flows, zeta)?;
            if round + 1 == applications {
                return Ok(PipelineRun {
                    tape,
                    staged,
                    flow_estimate: out.flows,
                    demand_estimate: out.demands,
                    heads: fixed.heads,
                    flows: fixed.flows,
                    demands: fixed.demands,
                });
            }
            d_second = out.demands;
            q_first = out.flows;
            q_second = fixed.flows;
        }
    } else {
        let mut node_values = node0;
        let mut edge_values = edge0;
        for round in 0..applications {
            let node_features = tape.leaf(node_values.clone());
            let edge_features = tape.leaf(edge_values.clone());
            let out = forward(&mut tape, wiring, &staged, node_features, edge_features)?;
            let fixed = fixpoint_on_tape(&mut tape, net, wiring, out.flows, zeta)?;
            if round + 1 == applications {
                return Ok(PipelineRun {
                    tape,
                    staged,
                    flow_estimate: out.flows,
                    demand_estimate: out.demands,
                    heads: fixed.heads,
                    flows: fixed.flows,
                    demands: fixed.demands,
                });
            }
            let demand_estimate = tape.value(out.demands);
            for v in 0..wiring.n_nodes {
                node_values.array_mut()[[v, 1]] = demand_estimate.get(v, 0);
            }
            let flow_estimate = tape.value(out.flows);
            let reconstructed = tape.value(fixed.flows);
            for e in 0..wiring.n_edges {
                edge_values.array_mut()[[e, 0]] = flow_estimate.get(e, 0);
                edge_values.array_mut()[[e, 1]] = reconstructed.get(e, 0);
            }
        }
    }
    unreachable!("the final application returns from inside the loop");
}

/// Final-application outputs of one sample as plain values.
pub struct Emulation {
    pub flow_estimate: Vec<f64>,
    pub demand_estimate: Vec<f64>,
    pub heads: Vec<f64>,
    pub flows: Vec<f64>,
    pub demands: Vec<f64>,
}

/// Inference entry point: runs the pipeline and returns copies of the final
/// state, discarding the tape.
pub fn emulate(
    net: &WaterNetwork,
    wiring: &Wiring,
    params: &ModelParams,
    demands: &[f64],
    applications: usize,
    zeta: f64,
) -> Result<Emulation, ModelError> {
    let run = run_pipeline(net, wiring, params, demands, applications, zeta, false)?;
    let grab = |id: ValueId| run.tape.value(id).as_slice().to_vec();
    Ok(Emulation {
        flow_estimate: grab(run.flow_estimate),
        demand_estimate: grab(run.demand_estimate),
        heads: grab(run.heads),
        flows: grab(run.flows),
        demands: grab(run.demands),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use hydronet_core::NetworkBuilder;

    fn toy() -> WaterNetwork {
        NetworkBuilder::new()
            .reservoir("R", 50.0)
            .node("a", 0.0)
            .node("b", 0.0)
            .pipe("p1", "R", "a", 800.0, 0.3, 120.0)
            .unwrap()
            .pipe("p2", "a", "b", 600.0, 0.25, 110.0)
            .unwrap()
            .pipe("p3", "R", "b", 900.0, 0.28, 125.0)
            .unwrap()
            .build()
            .unwrap()
    }

    #[test]
    fn detached_and_full_unroll_agree_on_values() {
        let net = toy();
        let wiring = Wiring::new(&net);
        let params = ModelParams::seeded(&crate::EmulatorConfig::new(6, 2), 7);
        let demands = vec![0.0, 1.2, 0.4];
        let detached = run_pipeline(&net, &wiring, &params, &demands, 3, 1e-8, false).unwrap();
        let unrolled = run_pipeline(&net, &wiring, &params, &demands, 3, 1e-8, true).unwrap();
        for (a, b) in [
            (detached.flow_estimate, unrolled.flow_estimate),
            (detached.demand_estimate, unrolled.demand_estimate),
            (detached.heads, unrolled.heads),
            (detached.flows, unrolled.flows),
            (detached.demands, unrolled.demands),
        ] {
            let lhs = detached.tape.value(a).as_slice();
            let rhs = unrolled.tape.value(b).as_slice();
            assert_eq!(lhs.len(), rhs.len());
            for (x, y) in lhs.iter().zip(rhs) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn zero_applications_is_rejected() {
        let net = toy();
        let wiring = Wiring::new(&net);
        let params = ModelParams::zeros(&crate::EmulatorConfig::new(4, 1));
        let err = run_pipeline(&net, &wiring, &params, &[0.0, 1.0, 1.0], 0, 1e-8, false);
        assert!(matches!(err, Err(ModelError::BadConfig(_))));
    }

    #[test]
    fn emulation_reports_the_final_application() {
        let net = toy();
        let wiring = Wiring::new(&net);
        let params = ModelParams::seeded(&crate::EmulatorConfig::new(5, 2), 3);
        let demands = vec![0.0, 0.8, 0.3];
        let three = emulate(&net, &wiring, &params, &demands, 3, 1e-8).unwrap();
        let run = run_pipeline(&net, &wiring, &params, &demands, 3, 1e-8, false).unwrap();
        assert_eq!(three.heads, run.tape.value(run.heads).as_slice());
        assert_eq!(three.flows, run.tape.value(run.flows).as_slice());
        // A different application count changes the state.
        let one = emulate(&net, &wiring, &params, &demands, 1, 1e-8).unwrap();
        assert_ne!(one.flow_estimate, three.flow_estimate);
    }
}
