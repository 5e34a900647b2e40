//! Topological measures used to size iteration budgets.

use std::collections::VecDeque;

use crate::error::NetworkError;
use crate::graph::WaterNetwork;

fn bfs_distances(net: &WaterNetwork, sources: &[usize]) -> Vec<usize> {
    let mut dist = vec![usize::MAX; net.n_nodes()];
    let mut queue = VecDeque::new();
    for &s in sources {
        dist[s] = 0;
        queue.push_back(s);
    }
    while let Some(v) = queue.pop_front() {
        for &e in net.out_edges(v) {
            let u = net.edge(e).to;
            if dist[u] == usize::MAX {
                dist[u] = dist[v] + 1;
                queue.push_back(u);
            }
        }
    }
    dist
}

/// Hop-count diameter of the network: the longest shortest path between any
/// two nodes. Errors if some node pair is disconnected (cannot happen for a
/// validated network, but the check is cheap and keeps the function total).
pub fn graph_diameter(net: &WaterNetwork) -> Result<usize, NetworkError> {
    let mut diameter = 0;
    for v in 0..net.n_nodes() {
        let dist = bfs_distances(net, &[v]);
        for (u, &d) in dist.iter().enumerate() {
            if d == usize::MAX {
                return Err(NetworkError::Unreachable(net.node(u).id.clone()));
            }
            diameter = diameter.max(d);
        }
    }
    Ok(diameter)
}

/// Largest hop distance from the reservoir set to any node. On a tree this is
/// also the longest simple path from a reservoir, since paths in trees are
/// unique.
pub fn max_reservoir_distance(net: &WaterNetwork) -> usize {
    bfs_distances(net, net.reservoirs())
        .into_iter()
        .max()
        .unwrap_or(0)
}
