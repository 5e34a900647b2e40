//! Accuracy metrics for a fitted estimator against the reference solver.
//!
//! Every time step of every scenario is one sample. The solver produces the
//! reference state, the emulator runs a fixed number of applications, and
//! three mean-relative-absolute errors are recorded per sample: consumer
//! demands against the estimate, heads and flows against the reference.
//! Conformity counts sign disagreements between reconstructed head drops and
//! reconstructed flows; a faithful reconstruction keeps it at zero.
//!
//! Each metric is reported twice: over all samples and with the worst 5% of
//! samples for that same metric dropped. The spread is the population
//! standard deviation.

use std::time::Instant;

use hydronet_core::WaterNetwork;
use hydronet_io::scenario::ScenarioSet;
use hydronet_solver::{solve_steady_state, SolverConfig};

use crate::gcn::ModelParams;
use crate::pipeline::emulate;
use crate::trainer::TrainConfig;
use crate::wiring::Wiring;
use crate::ModelError;

/// Consumers with |true demand| at or below this never enter a relative
/// error; the same floor guards head and flow denominators.
pub const DEMAND_FLOOR: f64 = 1e-6;

/// Share of samples dropped by the trimmed variant, in percent.
pub const OUTLIER_PERCENT: usize = 5;

/// Mean and population standard deviation of one metric over samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spread {
    pub mean: f64,
    pub std: f64,
}

/// One metric with and without outlier exclusion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metric {
    /// Over every sample that defines the metric.
    pub full: Spread,
    /// With the worst `OUTLIER_PERCENT` of those samples dropped, ranked by
    /// this metric itself.
    pub trimmed: Spread,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    /// Evaluated samples (scenario count times time steps).
    pub samples: usize,
    pub demand_mrae: Metric,
    pub head_mrae: Metric,
    pub flow_mrae: Metric,
    /// Signed sum of sign mismatches over every sample and directed edge.
    pub conformity: i64,
    /// Conformity with the samples of largest absolute contribution dropped.
    pub conformity_trimmed: i64,
    pub emulator_seconds: f64,
    pub oracle_seconds: f64,
    pub emulator_seconds_per_sample: f64,
    pub oracle_seconds_per_sample: f64,
}

/// Mathematical sign: zero maps to zero.
fn sgn(x: f64) -> i64 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Mean relative absolute error over entries whose reference magnitude
/// clears the floor. `None` when no entry qualifies.
pub fn mrae(truth: &[f64], estimate: &[f64], floor: f64) -> Option<f64> {
    debug_assert_eq!(truth.len(), estimate.len());
    let mut sum = 0.0;
    let mut count = 0usize;
    for (&t, &e) in truth.iter().zip(estimate) {
        if t.abs() > floor {
            sum += (t - e).abs() / t.abs();
            count += 1;
        }
    }
    (count > 0).then(|| sum / count as f64)
}

/// Sign-mismatch count between per-edge head drops and flows.
pub fn conformity(wiring: &Wiring, heads: &[f64], flows: &[f64]) -> i64 {
    let mut total = 0i64;
    for e in 0..wiring.n_edges {
        let drop = heads[wiring.from[e]] - heads[wiring.to[e]];
        total += sgn(drop) - sgn(flows[e]);
    }
    total
}

pub fn mean_std(values: &[f64]) -> Spread {
    if values.is_empty() {
        return Spread { mean: 0.0, std: 0.0 };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Spread {
        mean,
        std: var.sqrt(),
    }
}

/// Number of samples the trimmed variant drops.
pub fn outlier_count(samples: usize) -> usize {
    samples * OUTLIER_PERCENT / 100
}

/// Summarizes one metric, trimming the largest values.
pub fn summarize(values: &[f64]) -> Metric {
    let full = mean_std(values);
    let drop = outlier_count(values.len());
    let trimmed = if drop == 0 {
        full
    } else {
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("metric values are finite"));
        sorted.truncate(values.len() - drop);
        mean_std(&sorted)
    };
    Metric { full, trimmed }
}

fn trimmed_conformity(per_sample: &[i64]) -> i64 {
    let drop = outlier_count(per_sample.len());
    if drop == 0 {
        return per_sample.iter().sum();
    }
    let mut sorted = per_sample.to_vec();
    sorted.sort_by_key(|c| c.abs());
    sorted[..per_sample.len() - drop].iter().sum()
}

/// Scores the estimator on every sample of a scenario set.
///
/// The application count is `cfg.eval_iterations` for every sample; the
/// solver runs with its default settings as the reference.
pub fn evaluate(
    data: &ScenarioSet,
    params: &ModelParams,
    cfg: &TrainConfig,
) -> Result<EvalReport, ModelError> {
    cfg.validate()?;
    let solver_cfg = SolverConfig::default();

    let mut demand_errors = Vec::new();
    let mut head_errors = Vec::new();
    let mut flow_errors = Vec::new();
    let mut conformities = Vec::new();
    let mut emulator_seconds = 0.0;
    let mut oracle_seconds = 0.0;
    let mut samples = 0usize;

    for scenario in &data.scenarios {
        let net: WaterNetwork = data
            .base
            .with_diameter_multipliers(&scenario.diameter_multipliers)?;
        let wiring = Wiring::new(&net);
        for demands in &scenario.demands {
            let clock = Instant::now();
            let reference = solve_steady_state(&net, demands, &solver_cfg)?;
            oracle_seconds += clock.elapsed().as_secs_f64();

            let clock = Instant::now();
            let emulation = emulate(
                &net,
                &wiring,
                params,
                demands,
                cfg.eval_iterations,
                cfg.zeta,
            )?;
            emulator_seconds += clock.elapsed().as_secs_f64();
            samples += 1;

            let truth: Vec<f64> = wiring.consumers.iter().map(|&v| demands[v]).collect();
            let estimate: Vec<f64> = wiring
                .consumers
                .iter()
                .map(|&v| emulation.demand_estimate[v])
                .collect();
            if let Some(e) = mrae(&truth, &estimate, DEMAND_FLOOR) {
                demand_errors.push(e);
            }
            if let Some(e) = mrae(&reference.heads, &emulation.heads, DEMAND_FLOOR) {
                head_errors.push(e);
            }
            if let Some(e) = mrae(&reference.flows, &emulation.flows, DEMAND_FLOOR) {
                flow_errors.push(e);
            }
            conformities.push(conformity(&wiring, &emulation.heads, &emulation.flows));
        }
    }

    let per_sample = |total: f64| if samples == 0 { 0.0 } else { total / samples as f64 };
    Ok(EvalReport {
        samples,
        demand_mrae: summarize(&demand_errors),
        head_mrae: summarize(&head_errors),
        flow_mrae: summarize(&flow_errors),
        conformity: conformities.iter().sum(),
        conformity_trimmed: trimmed_conformity(&conformities),
        emulator_seconds,
        oracle_seconds,
        emulator_seconds_per_sample: per_sample(emulator_seconds),
        oracle_seconds_per_sample: per_sample(oracle_seconds),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixpoint::fixpoint_apply;
    use crate::gcn::EmulatorConfig;
    use hydronet_core::NetworkBuilder;
    use hydronet_io::scenario::generate_scenarios;

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
    fn identical_predictions_give_zero_error() {
        let truth = vec![1.0, 2.0, 0.0, -3.0];
        assert_eq!(mrae(&truth, &truth, DEMAND_FLOOR), Some(0.0));
        // Entries under the floor never contribute.
        assert_eq!(mrae(&[0.0, 0.0], &[5.0, 5.0], DEMAND_FLOOR), None);
    }

    #[test]
    fn sign_mismatch_counting_uses_the_mathematical_sign() {
        assert_eq!(sgn(0.0), 0);
        assert_eq!(sgn(-0.0), 0);
        assert_eq!(sgn(3.0), 1);
        assert_eq!(sgn(-2.5), -1);
    }

    #[test]
    fn reconstructed_states_have_zero_conformity() {
        let net = toy();
        let wiring = Wiring::new(&net);
        let demands = vec![0.0, 1.5, 0.7];
        let state = solve_steady_state(&net, &demands, &SolverConfig::default()).unwrap();
        let solution = fixpoint_apply(&net, &state.flows, 1e-8).unwrap();
        assert_eq!(conformity(&wiring, &solution.heads, &solution.flows), 0);
        // Flipping one flow's sign breaks two comparisons.
        let mut broken = solution.flows.clone();
        broken[0] = -broken[0];
        assert_ne!(conformity(&wiring, &solution.heads, &broken), 0);
    }

    #[test]
    fn trimming_drops_the_integer_share_and_shrinks_heavy_tails() {
        assert_eq!(outlier_count(40), 2);
        assert_eq!(outlier_count(19), 0);
        assert_eq!(outlier_count(100), 5);

        // Heavy-tailed errors: trimming removes the tail, so both moments
        // shrink.
        let mut values: Vec<f64> = (0..95).map(|i| 0.01 + 1e-4 * i as f64).collect();
        values.extend([0.9, 1.1, 1.3, 1.7, 2.5]);
        let metric = summarize(&values);
        assert!(metric.trimmed.mean < metric.full.mean);
        assert!(metric.trimmed.std <= metric.full.std);

        // Below the trim threshold the variants coincide.
        let small = summarize(&values[..10]);
        assert_eq!(small.full, small.trimmed);
    }

    #[test]
    fn evaluation_runs_end_to_end_on_an_untrained_model() {
        let net = toy();
        let data = generate_scenarios(&net, 2, 1, 17);
        let params = ModelParams::seeded(&EmulatorConfig::new(4, 1), 1);
        let cfg = TrainConfig {
            eval_iterations: 3,
            ..TrainConfig::default()
        };
        let report = evaluate(&data, &params, &cfg).unwrap();
        assert_eq!(report.samples, 96);
        assert!(report.demand_mrae.full.mean.is_finite());
        assert!(report.head_mrae.full.mean.is_finite());
        assert!(report.flow_mrae.full.mean.is_finite());
        assert!(report.oracle_seconds > 0.0);
        assert!(report.emulator_seconds > 0.0);
        let per_sample = report.emulator_seconds_per_sample;
        assert!((per_sample - report.emulator_seconds / 96.0).abs() < 1e-12);
    }
}
