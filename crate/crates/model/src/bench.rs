//! Wall-clock comparison of the reference solver and the emulator.
//!
//! For each requested sample count the same demand rows are solved by the
//! Newton reference and emulated by the fitted model, and the two total
//! times are reported. Counts beyond the scenario set's size cycle through
//! its samples, which keeps the workload shape while scaling the volume.

use std::time::Instant;

use hydronet_io::scenario::ScenarioSet;
use hydronet_solver::{batch_solve, SolverConfig};

use crate::gcn::ModelParams;
use crate::pipeline::emulate;
use crate::trainer::TrainConfig;
use crate::wiring::Wiring;
use crate::ModelError;

/// One line of the timing table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub samples: usize,
    pub oracle_s: f64,
    pub emulator_s: f64,
}

/// Times the solver and the emulator over increasing sample counts.
///
/// An empty scenario set or an empty count list yields no rows. The oracle
/// side runs through its batch interface per scenario variant; the emulator
/// side runs sample by sample with `cfg.eval_iterations` applications.
pub fn benchmark(
    data: &ScenarioSet,
    params: &ModelParams,
    cfg: &TrainConfig,
    sample_counts: &[usize],
) -> Result<Vec<BenchRow>, ModelError> {
    cfg.validate()?;
    let mut slots = Vec::with_capacity(data.scenarios.len());
    let mut samples: Vec<(usize, usize)> = Vec::new();
    for (s, scenario) in data.scenarios.iter().enumerate() {
        let net = data
            .base
            .with_diameter_multipliers(&scenario.diameter_multipliers)?;
        let wiring = Wiring::new(&net);
        for t in 0..scenario.demands.len() {
            samples.push((s, t));
        }
        slots.push((net, wiring));
    }
    if samples.is_empty() {
        return Ok(Vec::new());
    }

    let solver_cfg = SolverConfig::default();
    let mut rows = Vec::with_capacity(sample_counts.len());
    for &count in sample_counts {
        if count == 0 {
            continue;
        }
        // Cycle the sample list and group the selection by scenario so the
        // oracle can run each group as one batch.
        let mut grouped: Vec<Vec<Vec<f64>>> = vec![Vec::new(); slots.len()];
        for i in 0..count {
            let (s, t) = samples[i % samples.len()];
            grouped[s].push(data.scenarios[s].demands[t].clone());
        }

        let clock = Instant::now();
        for (s, group) in grouped.iter().enumerate() {
            if group.is_empty() {
                continue;
            }
            let solved = batch_solve(&slots[s].0, group, &solver_cfg);
            for state in solved.states {
                state?;
            }
        }
        let oracle_s = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        for (s, group) in grouped.iter().enumerate() {
            let (net, wiring) = &slots[s];
            for demands in group {
                emulate(net, wiring, params, demands, cfg.eval_iterations, cfg.zeta)?;
            }
        }
        let emulator_s = clock.elapsed().as_secs_f64();

        rows.push(BenchRow {
            samples: count,
            oracle_s,
            emulator_s,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcn::EmulatorConfig;
    use hydronet_core::NetworkBuilder;
    use hydronet_io::scenario::generate_scenarios;

    #[test]
    fn empty_inputs_produce_no_rows() {
        let net = NetworkBuilder::new()
            .reservoir("R", 40.0)
            .node("a", 0.0)
            .pipe("p", "R", "a", 500.0, 0.3, 120.0)
            .unwrap()
            .build()
            .unwrap();
        let params = ModelParams::zeros(&EmulatorConfig::new(2, 1));
        let cfg = TrainConfig::default();

        let empty = ScenarioSet {
            base: net.clone(),
            scenarios: Vec::new(),
            sampling_minutes: 30,
        };
        assert!(benchmark(&empty, &params, &cfg, &[10]).unwrap().is_empty());

        let data = generate_scenarios(&net, 1, 1, 1);
        assert!(benchmark(&data, &params, &cfg, &[]).unwrap().is_empty());
    }

    #[test]
    fn counts_cycle_past_the_set_size() {
        let net = NetworkBuilder::new()
            .reservoir("R", 60.0)
            .node("a", 0.0)
            .node("b", 0.0)
            .pipe("p1", "R", "a", 600.0, 0.3, 120.0)
            .unwrap()
            .pipe("p2", "a", "b", 400.0, 0.25, 115.0)
            .unwrap()
            .build()
            .unwrap();
        let data = generate_scenarios(&net, 1, 1, 2);
        let params = ModelParams::seeded(&EmulatorConfig::new(3, 1), 4);
        let cfg = TrainConfig {
            eval_iterations: 2,
            ..TrainConfig::default()
        };
        let rows = benchmark(&data, &params, &cfg, &[5, 100]).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].samples, 5);
        assert_eq!(rows[1].samples, 100);
        assert!(rows[1].emulator_s > 0.0);
        assert!(rows[1].oracle_s > 0.0);
    }
}
