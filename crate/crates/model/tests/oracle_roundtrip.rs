//! The head recursion must reproduce solver states it is fed.
//!
//! For a flow field that already satisfies the hydraulics, pricing the edges
//! and re-propagating heads returns the original heads, and the
//! reconstruction returns the original flows shifted by the offset. The
//! balancing demands of such flows are the demands the solver was given.

use hydronet_autodiff::{Tape, Tensor};
use hydronet_core::synth::{random_connected, SynthConfig};
use hydronet_model::gcn::demands_from_flows;
use hydronet_model::{fixpoint_apply, Wiring};
use hydronet_solver::{solve_steady_state, SolverConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn solver_states_survive_the_recursion_within_a_nanometre() {
    let solver_cfg = SolverConfig {
        head_tolerance: 1e-11,
        ..SolverConfig::default()
    };
    let zeta = 1e-8;
    for seed in 0..30u64 {
        let synth = SynthConfig {
            n_nodes: 5 + (seed as usize * 7) % 21,
            extra_pipes: (seed as usize) % 4,
            n_reservoirs: 1 + (seed as usize) % 2,
            seed,
        };
        let net = random_connected(&synth);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD1CE);
        let demands: Vec<f64> = (0..net.n_nodes())
            .map(|v| {
                if net.is_reservoir(v) {
                    0.0
                } else {
                    rng.gen_range(0.1..1.5)
                }
            })
            .collect();
        let state = match solve_steady_state(&net, &demands, &solver_cfg) {
            Ok(s) => s,
            Err(e) => panic!("seed {seed}: solver failed: {e}"),
        };

        let solution = fixpoint_apply(&net, &state.flows, zeta).unwrap();
        for (v, (a, b)) in solution.heads.iter().zip(&state.heads).enumerate() {
            assert!(
                (a - b).abs() <= 1e-9,
                "seed {seed}, node {v}: head {a} vs {b}"
            );
        }
        for (e, (a, b)) in solution.flows.iter().zip(&state.flows).enumerate() {
            assert!(
                (a - (b + zeta)).abs() <= 1e-9,
                "seed {seed}, edge {e}: flow {a} vs {b}+offset"
            );
        }
    }
}

#[test]
fn balancing_demands_of_solver_flows_are_the_inputs() {
    let solver_cfg = SolverConfig {
        head_tolerance: 1e-11,
        ..SolverConfig::default()
    };
    for seed in [3u64, 8, 21] {
        let net = random_connected(&SynthConfig {
            n_nodes: 12,
            extra_pipes: 3,
            n_reservoirs: 1,
            seed,
        });
        let wiring = Wiring::new(&net);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let demands: Vec<f64> = (0..net.n_nodes())
            .map(|v| {
                if net.is_reservoir(v) {
                    0.0
                } else {
                    rng.gen_range(0.2..2.0)
                }
            })
            .collect();
        let state = solve_steady_state(&net, &demands, &solver_cfg).unwrap();

        let mut tape = Tape::new();
        let flows = tape.leaf(Tensor::column(&state.flows));
        let balanced = demands_from_flows(&mut tape, &wiring, flows);
        let values = tape.value(balanced);
        for &v in wiring.consumers.iter() {
            assert!(
                (values.get(v, 0) - demands[v]).abs() <= 1e-8,
                "seed {seed}, node {v}: {} vs {}",
                values.get(v, 0),
                demands[v]
            );
        }
    }
}
