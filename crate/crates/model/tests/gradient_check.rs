//! Finite-difference validation of the training gradients.
//!
//! The probe runs the whole composition (estimator, projection, head
//! recursion, three-term loss) twice per parameter with a central
//! difference and compares against the tape gradients. The full unroll is
//! used so the scalar being differenced is exactly the function the tape
//! differentiates.

use hydronet_core::NetworkBuilder;
use hydronet_core::WaterNetwork;
use hydronet_model::trainer::{sample_gradients, sample_loss, TrainConfig};
use hydronet_model::{EmulatorConfig, ModelParams, Wiring};

fn five_node_net() -> WaterNetwork {
    NetworkBuilder::new()
        .reservoir("R", 30.0)
        .node("a", 0.0)
        .node("b", 0.0)
        .node("c", 0.0)
        .node("d", 0.0)
        .pipe("p1", "R", "a", 400.0, 0.3, 120.0)
        .unwrap()
        .pipe("p2", "a", "b", 350.0, 0.25, 110.0)
        .unwrap()
        .pipe("p3", "a", "c", 500.0, 0.28, 125.0)
        .unwrap()
        .pipe("p4", "b", "d", 450.0, 0.2, 115.0)
        .unwrap()
        .pipe("p5", "c", "d", 380.0, 0.22, 130.0)
        .unwrap()
        .build()
        .unwrap()
}

#[test]
fn tape_gradients_match_central_differences_for_every_parameter() {
    let net = five_node_net();
    let wiring = Wiring::new(&net);
    let config = EmulatorConfig::new(2, 1);
    let params = ModelParams::seeded(&config, 1234);
    let demands = vec![0.0, 0.9, 1.4, 0.5, 1.1];
    let cfg = TrainConfig {
        full_unroll: true,
        ..TrainConfig::default()
    };
    let applications = 2;

    let (_, grads) = sample_gradients(&net, &wiring, &params, &demands, applications, &cfg)
        .expect("analytic gradients");

    let eps = 1e-6;
    let mut checked = 0usize;
    for (slot, (name, tensor)) in params.named().iter().enumerate() {
        for i in 0..tensor.len() {
            let mut plus = params.clone();
            plus.tensors_mut()[slot].as_slice_mut()[i] += eps;
            let (loss_plus, _) =
                sample_loss(&net, &wiring, &plus, &demands, applications, &cfg).unwrap();

            let mut minus = params.clone();
            minus.tensors_mut()[slot].as_slice_mut()[i] -= eps;
            let (loss_minus, _) =
                sample_loss(&net, &wiring, &minus, &demands, applications, &cfg).unwrap();

            let fd = (loss_plus - loss_minus) / (2.0 * eps);
            let ad = grads[slot].as_slice()[i];
            let denom = fd.abs().max(ad.abs()).max(1e-6);
            let rel = (fd - ad).abs() / denom;
            assert!(
                rel <= 1e-4,
                "{name}[{i}]: finite difference {fd} vs tape {ad} (rel {rel})"
            );
            checked += 1;
        }
    }
    // Latent 2, one layer: 2·(2×2) + (6×2 + 2×2 + 2×2 + 2×2) + 6×2 + 2×1.
    assert_eq!(checked, 46);
}

#[test]
fn detached_mode_gradients_also_match_their_own_scalar() {
    // In the default mode the earlier applications enter as constants, so
    // the differenced scalar must hold them fixed: with one application the
    // two modes coincide and the probe is exact.
    let net = five_node_net();
    let wiring = Wiring::new(&net);
    let params = ModelParams::seeded(&EmulatorConfig::new(2, 1), 77);
    let demands = vec![0.0, 1.2, 0.4, 0.9, 0.6];
    let cfg = TrainConfig::default();

    let (_, grads) =
        sample_gradients(&net, &wiring, &params, &demands, 1, &cfg).expect("gradients");
    let eps = 1e-6;
    for (slot, (name, tensor)) in params.named().iter().enumerate() {
        for i in 0..tensor.len() {
            let mut plus = params.clone();
            plus.tensors_mut()[slot].as_slice_mut()[i] += eps;
            let (lp, _) = sample_loss(&net, &wiring, &plus, &demands, 1, &cfg).unwrap();
            let mut minus = params.clone();
            minus.tensors_mut()[slot].as_slice_mut()[i] -= eps;
            let (lm, _) = sample_loss(&net, &wiring, &minus, &demands, 1, &cfg).unwrap();
            let fd = (lp - lm) / (2.0 * eps);
            let ad = grads[slot].as_slice()[i];
            let rel = (fd - ad).abs() / fd.abs().max(ad.abs()).max(1e-6);
            assert!(rel <= 1e-4, "{name}[{i}]: {fd} vs {ad}");
        }
    }
}
