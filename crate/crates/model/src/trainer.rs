//! Mini-batch training of the flow estimator.
//!
//! Every sample is one demand row of one scenario. The pipeline is applied
//! K times (K redrawn uniformly each epoch), the three-term loss is taken on
//! the final application, and batches of per-sample gradients are averaged,
//! clipped in global L2 norm, and fed to Adam. The learning rate follows an
//! exact step decay. Each scenario carries its own diameter perturbation, so
//! a per-scenario network variant with its own resistances backs every
//! sample of that scenario.
//!
//! Samples run sequentially on independent tapes; gradient reduction sums in
//! sample order, so a fixed seed reproduces the loss history bit for bit.

use hydronet_autodiff::{Tensor, ValueId};
use hydronet_core::WaterNetwork;
use hydronet_io::scenario::ScenarioSet;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fixpoint::DEFAULT_ZETA;
use crate::gcn::{EmulatorConfig, ModelParams};
use crate::pipeline::{run_pipeline, PipelineRun};
use crate::wiring::Wiring;
use crate::ModelError;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPSILON: f64 = 1e-8;

/// Training hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Base learning rate; the effective rate is lr·decay^⌊epoch/step⌋.
    pub lr: f64,
    pub scheduler_step: usize,
    pub scheduler_decay: f64,
    /// Inclusive bounds for the per-epoch draw of the application count K.
    pub k_range: (usize, usize),
    /// Fixed application count used by evaluation.
    pub eval_iterations: usize,
    /// Weight of the reconstructed-demand loss term.
    pub rho: f64,
    /// Weight of the estimated-versus-reconstructed flow loss term.
    pub delta: f64,
    pub batch_size: usize,
    /// Global L2 gradient clip applied to the batch-mean gradient.
    pub grad_clip_norm: f64,
    pub seed: u64,
    /// Cap on samples visited per epoch; `None` walks the whole set.
    pub epoch_samples: Option<usize>,
    /// Flow offset of the head recursion's reconstruction step.
    pub zeta: f64,
    /// Keep all K applications on the tape instead of only the last.
    pub full_unroll: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 3000,
            lr: 1e-4,
            scheduler_step: 300,
            scheduler_decay: 0.75,
            k_range: (10, 15),
            eval_iterations: 20,
            rho: 0.1,
            delta: 0.1,
            batch_size: 16,
            grad_clip_norm: 1.0,
            seed: 0,
            epoch_samples: None,
            zeta: DEFAULT_ZETA,
            full_unroll: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::BadConfig(msg));
        let (lo, hi) = self.k_range;
        if lo < 1 || hi > 64 || lo > hi {
            return bad(format!(
                "application range [{lo}, {hi}] must be ordered and within [1, 64]"
            ));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad(format!("rho = {} must lie in (0, 1)", self.rho));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta = {} must lie in (0, 1)", self.delta));
        }
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if self.epoch_samples == Some(0) {
            return bad("per-epoch sample cap must be positive".into());
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        if self.scheduler_step == 0 {
            return bad("scheduler step must be positive".into());
        }
        if !(self.scheduler_decay > 0.0 && self.scheduler_decay <= 1.0) {
            return bad(format!(
                "scheduler decay {} must lie in (0, 1]",
                self.scheduler_decay
            ));
        }
        if !(self.grad_clip_norm > 0.0) {
            return bad(format!(
                "gradient clip norm {} must be positive",
                self.grad_clip_norm
            ));
        }
        if self.eval_iterations < 1 || self.eval_iterations > 64 {
            return bad(format!(
                "evaluation iteration count {} must lie in [1, 64]",
                self.eval_iterations
            ));
        }
        if !(self.zeta >= 0.0) || !self.zeta.is_finite() {
            return bad(format!("zeta {} must be non-negative", self.zeta));
        }
        Ok(())
    }

    /// Effective learning rate for an epoch: lr·decay^⌊epoch/step⌋, exact.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.lr
            * self
                .scheduler_decay
                .powi((epoch / self.scheduler_step) as i32)
    }
}

/// One line of the loss history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sample loss over the samples visited this epoch.
    pub loss: f64,
    pub lr: f64,
    /// Application count drawn for this epoch.
    pub k: usize,
}

/// Fitted parameters plus the loss history.
#[derive(Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
}

/// Values of the three loss terms before weighting.
#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    /// Mean absolute consumer-demand error of the flow estimate.
    pub demand_estimate: f64,
    /// Mean absolute consumer-demand error of the reconstruction.
    pub demand_physics: f64,
    /// Mean absolute gap between estimated and reconstructed flows.
    pub flow_gap: f64,
}

/// Builds the loss on a finished run's tape and returns its handle.
///
/// `demands` is the full nodal demand row; only consumer rows enter the two
/// demand terms, while the flow term runs over every directed edge.
pub fn attach_loss(
    run: &mut PipelineRun,
    wiring: &Wiring,
    demands: &[f64],
    rho: f64,
    delta: f64,
) -> (ValueId, LossParts) {
    let demand_estimate = run.demand_estimate;
    let demand_physics = run.demands;
    let flow_estimate = run.flow_estimate;
    let flow_physics = run.flows;
    let tape = &mut run.tape;

    let true_rows: Vec<f64> = wiring.consumers.iter().map(|&v| demands[v]).collect();
    let target = tape.leaf(Tensor::column(&true_rows));
    let estimated = tape.gather_rows(demand_estimate, wiring.consumers.clone());
    let reconstructed = tape.gather_rows(demand_physics, wiring.consumers.clone());

    let estimate_term = tape.l1(estimated, target);
    let physics_term = tape.l1(reconstructed, target);
    let flow_term = tape.l1(flow_estimate, flow_physics);
    let parts = LossParts {
        demand_estimate: tape.value(estimate_term).scalar_value(),
        demand_physics: tape.value(physics_term).scalar_value(),
        flow_gap: tape.value(flow_term).scalar_value(),
    };

    let weighted_physics = tape.scale(physics_term, rho);
    let weighted_flow = tape.scale(flow_term, delta);
    let partial = tape.add(estimate_term, weighted_physics);
    let total = tape.add(partial, weighted_flow);
    (total, parts)
}

/// Loss of one sample under the given application count. Used by tests and
/// finite-difference probes; training shares the same path.
pub fn sample_loss(
    net: &WaterNetwork,
    wiring: &Wiring,
    params: &ModelParams,
    demands: &[f64],
    applications: usize,
    cfg: &TrainConfig,
) -> Result<(f64, LossParts), ModelError> {
    let mut run = run_pipeline(
        net,
        wiring,
        params,
        demands,
        applications,
        cfg.zeta,
        cfg.full_unroll,
    )?;
    let (loss, parts) = attach_loss(&mut run, wiring, demands, cfg.rho, cfg.delta);
    Ok((run.tape.value(loss).scalar_value(), parts))
}

/// Loss and parameter gradients of one sample, gradients in canonical
/// tensor order.
pub fn sample_gradients(
    net: &WaterNetwork,
    wiring: &Wiring,
    params: &ModelParams,
    demands: &[f64],
    applications: usize,
    cfg: &TrainConfig,
) -> Result<(f64, Vec<Tensor>), ModelError> {
    let mut run = run_pipeline(
        net,
        wiring,
        params,
        demands,
        applications,
        cfg.zeta,
        cfg.full_unroll,
    )?;
    let (loss, _) = attach_loss(&mut run, wiring, demands, cfg.rho, cfg.delta);
    let value = run.tape.value(loss).scalar_value();
    let grads = run.tape.backward(loss)?;
    let collected = run
        .staged
        .ids()
        .into_iter()
        .zip(params.named())
        .map(|(id, (_, t))| grads.wrt_or_zeros(id, t.rows(), t.cols()))
        .collect();
    Ok((value, collected))
}

struct Adam {
    step: i32,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Adam {
    fn new(template: &ModelParams) -> Self {
        let zeros: Vec<Tensor> = template
            .named()
            .iter()
            .map(|(_, t)| Tensor::zeros(t.rows(), t.cols()))
            .collect();
        Adam {
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    fn update(&mut self, params: &mut ModelParams, grads: &[Tensor], lr: f64) {
        self.step += 1;
        let correction1 = 1.0 - ADAM_BETA1.powi(self.step);
        let correction2 = 1.0 - ADAM_BETA2.powi(self.step);
        for (((target, momentum), scale), grad) in params
            .tensors_mut()
            .into_iter()
            .zip(&mut self.first)
            .zip(&mut self.second)
            .zip(grads)
        {
            let theta = target.as_slice_mut();
            let m = momentum.as_slice_mut();
            let v = scale.as_slice_mut();
            let g = grad.as_slice();
            for i in 0..theta.len() {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                let m_hat = m[i] / correction1;
                let v_hat = v[i] / correction2;
                theta[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
            }
        }
    }
}

struct ScenarioSlot {
    net: WaterNetwork,
    wiring: Wiring,
}

fn demand_digest(demands: &[f64]) -> String {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut finite = true;
    for &d in demands {
        finite &= d.is_finite();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    format!(
        "demand range [{lo:.6}, {hi:.6}]{}",
        if finite { "" } else { " with non-finite entries" }
    )
}

/// Fits the estimator to every sample of a scenario set.
pub fn train(
    data: &ScenarioSet,
    emulator: &EmulatorConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, ModelError> {
    cfg.validate()?;
    if data.scenarios.is_empty() || data.time_steps() == 0 {
        return Err(ModelError::BadConfig(
            "training needs at least one scenario with at least one time step".into(),
        ));
    }

    let mut slots = Vec::with_capacity(data.scenarios.len());
    let mut samples: Vec<(usize, usize)> = Vec::new();
    for (s, scenario) in data.scenarios.iter().enumerate() {
        let net = data.base.with_diameter_multipliers(&scenario.diameter_multipliers)?;
        let wiring = Wiring::new(&net);
        for (t, row) in scenario.demands.iter().enumerate() {
            if row.len() != net.n_nodes() {
                return Err(ModelError::DimensionMismatch {
                    what: "scenario demand row",
                    expected: net.n_nodes(),
                    got: row.len(),
                });
            }
            samples.push((s, t));
        }
        slots.push(ScenarioSlot { net, wiring });
    }

    let mut params = ModelParams::seeded(emulator, cfg.seed);
    let mut optimizer = Adam::new(&params);
    let shapes: Vec<(usize, usize)> = params
        .named()
        .iter()
        .map(|(_, t)| (t.rows(), t.cols()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let k = rng.gen_range(cfg.k_range.0..=cfg.k_range.1);
        let lr = cfg.learning_rate(epoch);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut rng);
        if let Some(cap) = cfg.epoch_samples {
            order.truncate(cap.min(samples.len()));
        }

        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut batch_grads: Vec<Tensor> =
                shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect();
            for &index in batch {
                let (s, t) = samples[index];
                let slot = &slots[s];
                let demands = &data.scenarios[s].demands[t];
                let (loss, grads) =
                    train_sample(slot, &params, demands, k, cfg, epoch, s, t)?;
                epoch_loss += loss;
                for (acc, g) in batch_grads.iter_mut().zip(&grads) {
                    for (a, b) in acc.as_slice_mut().iter_mut().zip(g.as_slice()) {
                        *a += b;
                    }
                }
            }

            let inverse = 1.0 / batch.len() as f64;
            let mut sq_norm = 0.0;
            for g in &mut batch_grads {
                for x in g.as_slice_mut() {
                    *x *= inverse;
                    sq_norm += *x * *x;
                }
            }
            let norm = sq_norm.sqrt();
            if !norm.is_finite() {
                let (s, t) = samples[batch[0]];
                return Err(ModelError::NonFiniteLoss {
                    epoch,
                    scenario: s,
                    step: t,
                    detail: format!("gradient norm {norm} on a batch starting here"),
                });
            }
            if norm > cfg.grad_clip_norm {
                let factor = cfg.grad_clip_norm / norm;
                for g in &mut batch_grads {
                    for x in g.as_slice_mut() {
                        *x *= factor;
                    }
                }
            }
            optimizer.update(&mut params, &batch_grads, lr);
        }

        history.push(EpochRecord {
            epoch,
            loss: epoch_loss / order.len() as f64,
            lr,
            k,
        });
    }

    Ok(TrainOutcome { params, history })
}

#[allow(clippy::too_many_arguments)]
fn train_sample(
    slot: &ScenarioSlot,
    params: &ModelParams,
    demands: &[f64],
    k: usize,
    cfg: &TrainConfig,
    epoch: usize,
    scenario: usize,
    step: usize,
) -> Result<(f64, Vec<Tensor>), ModelError> {
    let mut run = run_pipeline(
        &slot.net,
        &slot.wiring,
        params,
        demands,
        k,
        cfg.zeta,
        cfg.full_unroll,
    )?;
    let (loss, parts) = attach_loss(&mut run, &slot.wiring, demands, cfg.rho, cfg.delta);
    let value = run.tape.value(loss).scalar_value();
    if !value.is_finite() {
        return Err(ModelError::NonFiniteLoss {
            epoch,
            scenario,
            step,
            detail: format!(
                "loss {value} with terms (demand {}, reconstruction {}, flow {}), K = {k}, {}",
                parts.demand_estimate,
                parts.demand_physics,
                parts.flow_gap,
                demand_digest(demands)
            ),
        });
    }
    let grads = run.tape.backward(loss)?;
    let collected = run
        .staged
        .ids()
        .into_iter()
        .zip(params.named())
        .map(|(id, (_, t))| grads.wrt_or_zeros(id, t.rows(), t.cols()))
        .collect();
    Ok((value, collected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use hydronet_autodiff::Tape;
    use hydronet_core::NetworkBuilder;
    use hydronet_io::scenario::generate_scenarios;
    use hydronet_solver::{solve_steady_state, SolverConfig};

    fn toy() -> WaterNetwork {
        NetworkBuilder::new()
            .reservoir("R", 80.0)
            .node("a", 0.0)
            .node("b", 0.0)
            .pipe("p1", "R", "a", 600.0, 0.3, 120.0)
            .unwrap()
            .pipe("p2", "a", "b", 400.0, 0.25, 115.0)
            .unwrap()
            .pipe("p3", "R", "b", 700.0, 0.28, 125.0)
            .unwrap()
            .build()
            .unwrap()
    }

    #[test]
    fn config_rejects_out_of_range_values() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        let mut c = ok.clone();
        c.k_range = (0, 5);
        assert!(c.validate().is_err());
        c = ok.clone();
        c.k_range = (10, 70);
        assert!(c.validate().is_err());
        c = ok.clone();
        c.k_range = (12, 11);
        assert!(c.validate().is_err());
        c = ok.clone();
        c.rho = 1.0;
        assert!(c.validate().is_err());
        c = ok.clone();
        c.delta = 0.0;
        assert!(c.validate().is_err());
        c = ok.clone();
        c.batch_size = 0;
        assert!(c.validate().is_err());
        c = ok.clone();
        c.epoch_samples = Some(0);
        assert!(c.validate().is_err());
        c = ok;
        c.grad_clip_norm = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn scheduler_follows_the_step_decay_exactly() {
        let cfg = TrainConfig {
            scheduler_step: 2,
            scheduler_decay: 0.5,
            ..TrainConfig::default()
        };
        for epoch in 0..9 {
            let expected = cfg.lr * cfg.scheduler_decay.powi((epoch / 2) as i32);
            assert_eq!(cfg.learning_rate(epoch).to_bits(), expected.to_bits());
        }
        assert_eq!(cfg.learning_rate(0), 1e-4);
        assert_eq!(cfg.learning_rate(2), 0.5e-4);
        assert_eq!(cfg.learning_rate(5), 0.25e-4);
    }

    #[test]
    fn zero_parameters_give_finite_loss_and_gradients() {
        let net = toy();
        let wiring = Wiring::new(&net);
        let params = ModelParams::zeros(&EmulatorConfig::new(4, 2));
        let cfg = TrainConfig::default();
        let demands = vec![0.0, 1.3, 0.6];
        let (loss, grads) = sample_gradients(&net, &wiring, &params, &demands, 2, &cfg).unwrap();
        assert!(loss.is_finite());
        assert_eq!(grads.len(), params.named().len());
        for g in &grads {
            assert!(g.all_finite());
        }
    }

    #[test]
    fn oracle_flows_collapse_the_loss_to_the_offset_term() {
        let net = toy();
        let wiring = Wiring::new(&net);
        let demands = vec![0.0, 1.5, 0.7];
        let solver_cfg = SolverConfig {
            head_tolerance: 1e-12,
            ..SolverConfig::default()
        };
        let state = solve_steady_state(&net, &demands, &solver_cfg).unwrap();

        // Feed the oracle's own flows through the loss path: the estimate
        // terms vanish and the flow gap is exactly the reconstruction
        // offset, so the loss collapses to delta times that offset.
        let zeta = 1e-9;
        let rho = 0.1;
        let delta = 0.1;
        let mut tape = Tape::new();
        let staged = ModelParams::zeros(&EmulatorConfig::new(2, 1)).stage(&mut tape);
        let flow_estimate = tape.leaf(Tensor::column(&state.flows));
        let demand_estimate = crate::gcn::demands_from_flows(&mut tape, &wiring, flow_estimate);
        let fixed =
            crate::fixpoint::fixpoint_on_tape(&mut tape, &net, &wiring, flow_estimate, zeta)
                .unwrap();
        let mut run = PipelineRun {
            tape,
            staged,
            flow_estimate,
            demand_estimate,
            heads: fixed.heads,
            flows: fixed.flows,
            demands: fixed.demands,
        };
        let (loss, parts) = attach_loss(&mut run, &wiring, &demands, rho, delta);
        let total = run.tape.value(loss).scalar_value();

        assert!((total - delta * zeta).abs() <= 1e-9, "total {total}");
        assert!(parts.demand_estimate <= 1e-10);
        assert!(parts.demand_physics <= 3.0 * zeta);
        assert!((parts.flow_gap - zeta).abs() <= 1e-12 * zeta.max(1.0));
    }

    #[test]
    fn same_seed_reproduces_the_loss_history() {
        let net = toy();
        let data = generate_scenarios(&net, 2, 1, 11);
        let emulator = EmulatorConfig::new(4, 1);
        let cfg = TrainConfig {
            epochs: 3,
            k_range: (1, 2),
            batch_size: 2,
            epoch_samples: Some(4),
            seed: 42,
            ..TrainConfig::default()
        };
        let first = train(&data, &emulator, &cfg).unwrap();
        let second = train(&data, &emulator, &cfg).unwrap();
        assert_eq!(first.history.len(), 3);
        for (a, b) in first.history.iter().zip(&second.history) {
            assert_eq!(a.loss.to_bits(), b.loss.to_bits());
            assert_eq!(a.k, b.k);
            assert_eq!(a.lr.to_bits(), b.lr.to_bits());
        }
        for ((_, x), (_, y)) in first.params.named().iter().zip(second.params.named().iter()) {
            for (a, b) in x.as_slice().iter().zip(y.as_slice()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        // A different seed changes the trajectory.
        let other = train(
            &data,
            &emulator,
            &TrainConfig {
                seed: 43,
                ..cfg.clone()
            },
        )
        .unwrap();
        assert_ne!(
            first.history[0].loss.to_bits(),
            other.history[0].loss.to_bits()
        );
    }

    #[test]
    fn training_steps_change_every_tensor() {
        let net = toy();
        let data = generate_scenarios(&net, 1, 1, 5);
        let emulator = EmulatorConfig::new(4, 1);
        let cfg = TrainConfig {
            epochs: 2,
            k_range: (1, 1),
            batch_size: 4,
            epoch_samples: Some(4),
            seed: 9,
            ..TrainConfig::default()
        };
        let outcome = train(&data, &emulator, &cfg).unwrap();
        let fresh = ModelParams::seeded(&emulator, cfg.seed);
        for ((_, after), (_, before)) in outcome.params.named().iter().zip(fresh.named().iter()) {
            let moved = after
                .as_slice()
                .iter()
                .zip(before.as_slice())
                .any(|(a, b)| a != b);
            assert!(moved, "a tensor was never updated");
        }
    }

    #[test]
    fn non_finite_demands_abort_with_the_offending_sample() {
        let net = toy();
        let mut data = generate_scenarios(&net, 1, 1, 3);
        data.scenarios[0].demands[0][1] = f64::INFINITY;
        let cfg = TrainConfig {
            epochs: 1,
            k_range: (1, 1),
            batch_size: 1,
            epoch_samples: None,
            seed: 0,
            ..TrainConfig::default()
        };
        // Walk the full set so the poisoned row is always visited.
        let err = train(&data, &EmulatorConfig::new(4, 1), &cfg).unwrap_err();
        match err {
            ModelError::NonFiniteLoss { scenario, step, detail, .. } => {
                assert_eq!(scenario, 0);
                assert_eq!(step, 0);
                assert!(detail.contains("non-finite"), "{detail}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }
}
