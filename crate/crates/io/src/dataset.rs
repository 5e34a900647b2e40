//! Dataset container: scenario sets bound to a specific network.
//!
//! Layout: magic "WDSD", u32 version, 32-byte network digest, u64 scenario
//! count, then per scenario the seed, the time×nodes demand matrix and the
//! per-pipe diameter multipliers. The digest covers node ids, kinds and
//! elevations plus pipe ids, endpoints and geometry, so loading a dataset
//! against any structurally different network fails up front.

use std::path::Path;

use sha2::{Digest, Sha256};

use hydronet_core::{NodeKind, WaterNetwork};

use crate::container::{Reader, Writer};
use crate::scenario::{Scenario, ScenarioSet};
use crate::ContainerError;

const MAGIC: &str = "WDSD";
const VERSION: u32 = 1;

/// Digest of the network's structure and geometry.
pub fn network_hash(net: &WaterNetwork) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(b"HYDRONET-NET-V1");
    hasher.update((net.n_nodes() as u64).to_le_bytes());
    for node in net.nodes() {
        hasher.update((node.id.len() as u64).to_le_bytes());
        hasher.update(node.id.as_bytes());
        hasher.update([match node.kind {
            NodeKind::Consumer => 0u8,
            NodeKind::Reservoir { .. } => 1u8,
        }]);
        hasher.update(node.elevation.to_le_bytes());
    }
    hasher.update((net.n_pipes() as u64).to_le_bytes());
    for p in 0..net.n_pipes() {
        let pipe = net.pipe(p);
        let edge = net.edge(2 * p);
        for id in [
            pipe.id.as_str(),
            net.node(edge.from).id.as_str(),
            net.node(edge.to).id.as_str(),
        ] {
            hasher.update((id.len() as u64).to_le_bytes());
            hasher.update(id.as_bytes());
        }
        hasher.update(pipe.attr.length.to_le_bytes());
        hasher.update(pipe.attr.diameter.to_le_bytes());
        hasher.update(pipe.attr.roughness.to_le_bytes());
    }
    hasher.finalize().into()
}

pub fn save_dataset(path: &Path, set: &ScenarioSet) -> Result<(), ContainerError> {
    let mut w = Writer::new(b"WDSD", VERSION);
    w.bytes(&network_hash(&set.base));
    w.u64(set.sampling_minutes as u64);
    w.u64(set.scenarios.len() as u64);
    for s in &set.scenarios {
        w.u64(s.seed);
        w.u64(s.demands.len() as u64);
        w.u64(set.base.n_nodes() as u64);
        for row in &s.demands {
            w.f64s(row);
        }
        w.u64(s.diameter_multipliers.len() as u64);
        w.f64s(&s.diameter_multipliers);
    }
    std::fs::write(path, w.into_bytes())?;
    Ok(())
}

/// Load a dataset and bind it to `net`, which must hash-match the network
/// the dataset was generated from.
pub fn load_dataset(path: &Path, net: &WaterNetwork) -> Result<ScenarioSet, ContainerError> {
    let bytes = std::fs::read(path)?;
    let mut r = Reader::new(&bytes, MAGIC, VERSION)?;
    let stored: [u8; 32] = r.bytes(32, "network hash")?.try_into().unwrap();
    if stored != network_hash(net) {
        return Err(ContainerError::HashMismatch);
    }
    let sampling_minutes = r.u64("sampling rate")? as u32;
    let n_scenarios = r.count("scenario count", 8)?;
    let mut scenarios = Vec::with_capacity(n_scenarios);
    for _ in 0..n_scenarios {
        let seed = r.u64("scenario seed")?;
        let rows = r.count("demand rows", 8)?;
        let cols = r.count("demand columns", 8)?;
        if cols != net.n_nodes() {
            return Err(ContainerError::BadValue {
                what: "demand columns",
                value: cols as u64,
            });
        }
        let mut demands = Vec::with_capacity(rows);
        for _ in 0..rows {
            demands.push(r.f64s(cols, "demand row")?);
        }
        let n_mult = r.count("multiplier count", 8)?;
        if n_mult != net.n_pipes() {
            return Err(ContainerError::BadValue {
                what: "multiplier count",
                value: n_mult as u64,
            });
        }
        let diameter_multipliers = r.f64s(n_mult, "diameter multipliers")?;
        scenarios.push(Scenario {
            seed,
            demands,
            diameter_multipliers,
        });
    }
    r.finish()?;
    Ok(ScenarioSet {
        base: net.clone(),
        scenarios,
        sampling_minutes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::generate_scenarios;
    use hydronet_core::synth::{random_connected, SynthConfig};

    fn net(seed: u64) -> WaterNetwork {
        random_connected(&SynthConfig {
            n_nodes: 7,
            extra_pipes: 2,
            n_reservoirs: 1,
            seed,
        })
    }

    #[test]
    fn round_trip_is_field_exact() {
        let net = net(1);
        let set = generate_scenarios(&net, 3, 1, 42);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.wdsd");
        save_dataset(&path, &set).unwrap();
        let loaded = load_dataset(&path, &net).unwrap();
        assert_eq!(loaded.sampling_minutes, set.sampling_minutes);
        assert_eq!(loaded.scenarios.len(), set.scenarios.len());
        for (a, b) in loaded.scenarios.iter().zip(&set.scenarios) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn wrong_network_is_rejected() {
        let set = generate_scenarios(&net(1), 2, 1, 0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.wdsd");
        save_dataset(&path, &set).unwrap();
        assert!(matches!(
            load_dataset(&path, &net(2)).unwrap_err(),
            ContainerError::HashMismatch
        ));
    }

    #[test]
    fn truncation_is_detected_with_no_partial_result() {
        let net = net(3);
        let set = generate_scenarios(&net, 2, 1, 0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.wdsd");
        save_dataset(&path, &set).unwrap();
        let full = std::fs::read(&path).unwrap();
        for cut in [3, 7, 20, 60, full.len() - 1] {
            let short = dir.path().join("short.wdsd");
            std::fs::write(&short, &full[..cut]).unwrap();
            let err = load_dataset(&short, &net).unwrap_err();
            assert!(
                matches!(
                    err,
                    ContainerError::Truncated { .. } | ContainerError::BadMagic { .. }
                ),
                "cut {cut}: unexpected {err:?}"
            );
        }
    }

    #[test]
    fn version_drift_is_rejected() {
        let net = net(4);
        let set = generate_scenarios(&net, 1, 1, 0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.wdsd");
        save_dataset(&path, &set).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 9;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_dataset(&path, &net).unwrap_err(),
            ContainerError::Version {
                expected: 1,
                got: 9
            }
        ));
    }

    #[test]
    fn hash_tracks_geometry_changes() {
        let a = net(5);
        let h1 = network_hash(&a);
        let b = a.with_diameter_multipliers(&vec![1.01; a.n_pipes()]).unwrap();
        assert_ne!(h1, network_hash(&b));
        assert_eq!(h1, network_hash(&net(5)));
    }
}
