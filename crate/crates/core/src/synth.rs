//! Seeded random network generation.
//!
//! Small connected networks with realistic attribute ranges, used by property
//! tests and benchmarks. Generation is deterministic under the seed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph::{NetworkBuilder, WaterNetwork};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_nodes: usize,
    /// Pipes added on top of the random spanning tree (cycles).
    pub extra_pipes: usize,
    pub n_reservoirs: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_nodes: 12,
            extra_pipes: 4,
            n_reservoirs: 1,
            seed: 0,
        }
    }
}

/// A random connected network: a uniform random attachment tree plus
/// `extra_pipes` chords, with `n_reservoirs` nodes promoted to reservoirs.
pub fn random_connected(cfg: &SynthConfig) -> WaterNetwork {
    assert!(cfg.n_nodes >= 2, "need at least two nodes");
    assert!(
        cfg.n_reservoirs >= 1 && cfg.n_reservoirs < cfg.n_nodes,
        "reservoir count must be in 1..n_nodes"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut reservoir_at = vec![false; cfg.n_nodes];
    let mut promoted = 0;
    while promoted < cfg.n_reservoirs {
        let v = rng.gen_range(0..cfg.n_nodes);
        if !reservoir_at[v] {
            reservoir_at[v] = true;
            promoted += 1;
        }
    }

    let mut b = NetworkBuilder::new();
    for v in 0..cfg.n_nodes {
        let id = format!("N{v}");
        if reservoir_at[v] {
            b = b.reservoir(&id, 60.0 + 90.0 * rng.gen::<f64>());
        } else {
            b = b.node(&id, 20.0 * rng.gen::<f64>());
        }
    }

    let mut have = std::collections::HashSet::new();
    let mut pipe_no = 0;
    let mut add = |b: NetworkBuilder, rng: &mut ChaCha8Rng, u: usize, v: usize| {
        let id = format!("P{pipe_no}");
        pipe_no += 1;
        let length = 50.0 + 1950.0 * rng.gen::<f64>();
        let diameter = 0.3 + 0.9 * rng.gen::<f64>();
        let roughness = 80.0 + 70.0 * rng.gen::<f64>();
        b.pipe(&id, &format!("N{u}"), &format!("N{v}"), length, diameter, roughness)
            .expect("synthetic pipe attributes are positive")
    };

    for v in 1..cfg.n_nodes {
        let u = rng.gen_range(0..v);
        have.insert((u.min(v), u.max(v)));
        b = add(b, &mut rng, u, v);
    }
    let mut remaining = cfg.extra_pipes;
    let mut attempts = 0;
    while remaining > 0 && attempts < 100 * cfg.extra_pipes.max(1) {
        attempts += 1;
        let u = rng.gen_range(0..cfg.n_nodes);
        let v = rng.gen_range(0..cfg.n_nodes);
        if u == v || have.contains(&(u.min(v), u.max(v))) {
            continue;
        }
        have.insert((u.min(v), u.max(v)));
        b = add(b, &mut rng, u, v);
        remaining -= 1;
    }

    b.build().expect("synthetic networks are valid by construction")
}

/// A random tree with a single reservoir at node 0.
pub fn random_tree(n_nodes: usize, seed: u64) -> WaterNetwork {
    random_connected(&SynthConfig {
        n_nodes,
        extra_pipes: 0,
        n_reservoirs: 1,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let cfg = SynthConfig {
            n_nodes: 20,
            extra_pipes: 6,
            n_reservoirs: 2,
            seed: 42,
        };
        let a = random_connected(&cfg);
        let b = random_connected(&cfg);
        assert_eq!(a.n_pipes(), b.n_pipes());
        for p in 0..a.n_pipes() {
            assert_eq!(a.pipe(p).attr, b.pipe(p).attr);
        }
    }

    #[test]
    fn tree_has_exactly_n_minus_one_pipes() {
        let net = random_tree(15, 7);
        assert_eq!(net.n_pipes(), 14);
        assert_eq!(net.reservoirs().len(), 1);
    }

    #[test]
    fn sweep_of_seeds_builds_valid_networks() {
        for seed in 0..25 {
            let net = random_connected(&SynthConfig {
                n_nodes: 5 + (seed as usize * 7) % 30,
                extra_pipes: (seed as usize) % 5,
                n_reservoirs: 1 + (seed as usize) % 3,
                seed,
            });
            assert!(net.n_edges() == 2 * net.n_pipes());
        }
    }
}
