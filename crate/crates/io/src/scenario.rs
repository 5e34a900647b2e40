//! Demand and diameter scenario generation.
//!
//! Each scenario owns a derived seed (`seed ^ scenario_index`), so scenarios
//! are independent of generation order and of one another. Within a scenario
//! the draw order is fixed: diameter noise for every pipe first, then the
//! demand draws. Because the diameter standard deviation only scales already
//! drawn values, regenerating with a different diameter sigma reproduces the
//! identical demand series, which keeps robustness sweeps paired.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use hydronet_core::WaterNetwork;

/// Demand profile taken from a parsed network file: per node, a base demand
/// and an optional multiplier sequence that cycles over time steps.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandBasis {
    pub per_node: Vec<(f64, Vec<f64>)>,
}

impl DemandBasis {
    /// Demand for a node at a time step, before noise.
    pub fn value(&self, node: usize, t: usize) -> f64 {
        let (base, multipliers) = &self.per_node[node];
        if multipliers.is_empty() {
            *base
        } else {
            base * multipliers[t % multipliers.len()]
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub n_scenarios: usize,
    pub days: usize,
    pub seed: u64,
    /// Standard deviation of the multiplicative diameter perturbation.
    pub diameter_sigma: f64,
    /// Standard deviation of the additive per-step demand noise.
    pub demand_noise_sigma: f64,
    pub samples_per_day: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_scenarios: 1,
            days: 1,
            seed: 0,
            diameter_sigma: 1.0 / 30.0,
            demand_noise_sigma: 0.1,
            samples_per_day: 48,
        }
    }
}

/// One scenario: a time series of nodal demands under one fixed diameter
/// perturbation.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    /// Row per time step, column per node; zero at reservoirs. m³/h.
    pub demands: Vec<Vec<f64>>,
    /// Multiplier per physical pipe, all ≥ 0.5.
    pub diameter_multipliers: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ScenarioSet {
    pub base: WaterNetwork,
    pub scenarios: Vec<Scenario>,
    pub sampling_minutes: u32,
}

impl ScenarioSet {
    pub fn time_steps(&self) -> usize {
        self.scenarios.first().map(|s| s.demands.len()).unwrap_or(0)
    }
}

/// Chronological 60/20/20 split of `t` time steps.
pub fn split_ranges(
    t: usize,
) -> (
    std::ops::Range<usize>,
    std::ops::Range<usize>,
    std::ops::Range<usize>,
) {
    let train_end = 6 * t / 10;
    let val_end = 8 * t / 10;
    (0..train_end, train_end..val_end, val_end..t)
}

/// Synthetic scenarios with default sigmas: the per-scenario base demand is
/// a rectified standard normal per consumer, held for the whole horizon.
pub fn generate_scenarios(
    net: &WaterNetwork,
    n_scenarios: usize,
    days: usize,
    seed: u64,
) -> ScenarioSet {
    generate_scenarios_with(
        net,
        None,
        &ScenarioConfig {
            n_scenarios,
            days,
            seed,
            ..ScenarioConfig::default()
        },
    )
}

/// Scenario generation with an optional file-provided demand basis. With a
/// basis the base profile is read from it; otherwise each consumer's base is
/// |N(0,1)| drawn once per scenario. Either way the per-step noise is
/// N(0, demand_noise_sigma) and demands are clamped at zero.
pub fn generate_scenarios_with(
    net: &WaterNetwork,
    basis: Option<&DemandBasis>,
    cfg: &ScenarioConfig,
) -> ScenarioSet {
    assert!(cfg.n_scenarios >= 1, "need at least one scenario");
    assert!(cfg.days >= 1, "need at least one day");
    let t_steps = cfg.days * cfg.samples_per_day;
    let consumers: Vec<usize> = (0..net.n_nodes()).filter(|&v| !net.is_reservoir(v)).collect();

    let scenarios = (0..cfg.n_scenarios)
        .map(|s| {
            let scenario_seed = cfg.seed ^ (s as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(scenario_seed);

            // Diameter draws come first so the demand stream below is
            // unaffected by diameter_sigma.
            let diameter_multipliers: Vec<f64> = (0..net.n_pipes())
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    (1.0 + cfg.diameter_sigma * z).max(0.5)
                })
                .collect();

            let base: Vec<f64> = match basis {
                Some(_) => Vec::new(),
                None => consumers
                    .iter()
                    .map(|_| {
                        let z: f64 = rng.sample(StandardNormal);
                        z.abs()
                    })
                    .collect(),
            };

            let mut demands = Vec::with_capacity(t_steps);
            for t in 0..t_steps {
                let mut row = vec![0.0; net.n_nodes()];
                for (i, &v) in consumers.iter().enumerate() {
                    let nominal = match basis {
                        Some(b) => b.value(v, t),
                        None => base[i],
                    };
                    let z: f64 = rng.sample(StandardNormal);
                    row[v] = (nominal + cfg.demand_noise_sigma * z).max(0.0);
                }
                demands.push(row);
            }

            Scenario {
                seed: scenario_seed,
                demands,
                diameter_multipliers,
            }
        })
        .collect();

    ScenarioSet {
        base: net.clone(),
        scenarios,
        sampling_minutes: 30,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hydronet_core::synth::random_connected;
    use hydronet_core::synth::SynthConfig;

    fn net() -> WaterNetwork {
        random_connected(&SynthConfig {
            n_nodes: 10,
            extra_pipes: 3,
            n_reservoirs: 2,
            seed: 5,
        })
    }

    #[test]
    fn shapes_match_the_sampling_rate() {
        let net = net();
        let set = generate_scenarios(&net, 20, 2, 7);
        assert_eq!(set.scenarios.len(), 20);
        assert_eq!(set.sampling_minutes, 30);
        let total: usize = set.scenarios.iter().map(|s| s.demands.len()).sum();
        assert_eq!(total, 1920);
        for s in &set.scenarios {
            assert_eq!(s.demands.len(), 96);
            assert_eq!(s.demands[0].len(), net.n_nodes());
            assert_eq!(s.diameter_multipliers.len(), net.n_pipes());
        }

        let eval = generate_scenarios(&net, 30, 14, 7);
        let total: usize = eval.scenarios.iter().map(|s| s.demands.len()).sum();
        assert_eq!(total, 20160);
    }

    #[test]
    fn demands_nonnegative_and_zero_at_reservoirs() {
        let net = net();
        let set = generate_scenarios(&net, 5, 1, 3);
        for s in &set.scenarios {
            for row in &s.demands {
                for (v, &d) in row.iter().enumerate() {
                    assert!(d >= 0.0);
                    if net.is_reservoir(v) {
                        assert_eq!(d, 0.0);
                    }
                }
            }
            for &m in &s.diameter_multipliers {
                assert!(m >= 0.5);
            }
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let net = net();
        let a = generate_scenarios(&net, 4, 1, 99);
        let b = generate_scenarios(&net, 4, 1, 99);
        for (sa, sb) in a.scenarios.iter().zip(&b.scenarios) {
            assert_eq!(sa.seed, sb.seed);
            for (ra, rb) in sa.demands.iter().zip(&sb.demands) {
                for (x, y) in ra.iter().zip(rb) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
            for (x, y) in sa.diameter_multipliers.iter().zip(&sb.diameter_multipliers) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn diameter_sigma_does_not_disturb_demand_draws() {
        let net = net();
        let mild = generate_scenarios_with(
            &net,
            None,
            &ScenarioConfig {
                n_scenarios: 3,
                days: 1,
                seed: 11,
                diameter_sigma: 0.0,
                ..ScenarioConfig::default()
            },
        );
        let wild = generate_scenarios_with(
            &net,
            None,
            &ScenarioConfig {
                n_scenarios: 3,
                days: 1,
                seed: 11,
                diameter_sigma: 0.1,
                ..ScenarioConfig::default()
            },
        );
        for (a, b) in mild.scenarios.iter().zip(&wild.scenarios) {
            for (ra, rb) in a.demands.iter().zip(&b.demands) {
                for (x, y) in ra.iter().zip(rb) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
            assert!(a.diameter_multipliers.iter().all(|&m| m == 1.0));
            assert!(b.diameter_multipliers.iter().any(|&m| m != 1.0));
        }
    }

    #[test]
    fn basis_mode_follows_the_pattern() {
        let net = net();
        let consumers: Vec<usize> =
            (0..net.n_nodes()).filter(|&v| !net.is_reservoir(v)).collect();
        let mut per_node = vec![(0.0, Vec::new()); net.n_nodes()];
        for &v in &consumers {
            per_node[v] = (2.0, vec![1.0, 0.25]);
        }
        let basis = DemandBasis { per_node };
        let set = generate_scenarios_with(
            &net,
            Some(&basis),
            &ScenarioConfig {
                n_scenarios: 1,
                days: 1,
                seed: 0,
                demand_noise_sigma: 0.0,
                ..ScenarioConfig::default()
            },
        );
        let s = &set.scenarios[0];
        for t in 0..s.demands.len() {
            let expected = if t % 2 == 0 { 2.0 } else { 0.5 };
            for &v in &consumers {
                assert_eq!(s.demands[t][v], expected);
            }
        }
    }

    #[test]
    fn split_boundaries_are_chronological() {
        let (train, val, test) = split_ranges(96);
        assert_eq!(train, 0..57);
        assert_eq!(val, 57..76);
        assert_eq!(test, 76..96);
        let (train, val, test) = split_ranges(10);
        assert_eq!(train, 0..6);
        assert_eq!(val, 6..8);
        assert_eq!(test, 8..10);
    }
}
