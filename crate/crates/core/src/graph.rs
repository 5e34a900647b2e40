//! Network topology: nodes, pipes, and the doubled directed-edge view.

use std::collections::{HashMap, VecDeque};

use crate::error::NetworkError;
use crate::hydraulics::resistance_coefficient;

/// What a node does in the network.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    /// Draws water; its demand is an input of every solve.
    Consumer,
    /// Holds its hydraulic head fixed at `head` (meters) and supplies or
    /// absorbs whatever flow the network requires.
    Reservoir { head: f64 },
}

#[derive(Debug, Clone)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    /// Ground elevation in meters. For reservoirs this equals the fixed head.
    pub elevation: f64,
}

/// Physical attributes of one pipe.
#[derive(Debug, Clone, PartialEq)]
pub struct PipeAttr {
    /// Length in meters.
    pub length: f64,
    /// Inner diameter in meters.
    pub diameter: f64,
    /// Hazen-Williams roughness coefficient.
    pub roughness: f64,
    /// Cached resistance coefficient derived from the three fields above.
    pub resistance: f64,
}

impl PipeAttr {
    pub fn new(length: f64, diameter: f64, roughness: f64) -> Result<Self, NetworkError> {
        let resistance = resistance_coefficient(length, diameter, roughness)?;
        Ok(PipeAttr {
            length,
            diameter,
            roughness,
            resistance,
        })
    }
}

/// A physical pipe between two nodes. Stored once; the directed view exposes
/// it as two antiparallel edges.
#[derive(Debug, Clone)]
pub struct Pipe {
    pub id: String,
    pub attr: PipeAttr,
}

/// One direction of a pipe. `pipe` indexes the physical pipe, and the partner
/// edge travelling the opposite way is always `edge_index ^ 1`.
#[derive(Debug, Clone)]
pub struct DirectedEdge {
    pub from: usize,
    pub to: usize,
    pub pipe: usize,
    /// Exactly one edge of each pair is canonical; it is the representative
    /// direction used when a single value per pipe is needed. Chosen as the
    /// direction whose `(from, to)` node-id pair sorts lexicographically
    /// smaller, so the choice survives renumbering of node indices.
    pub canonical: bool,
}

/// An immutable, validated water distribution network.
///
/// Invariants established at construction time:
/// - directed edges come in antiparallel pairs `(2p, 2p + 1)` for pipe `p`;
/// - no self loops, all endpoints exist, ids are unique;
/// - at least one reservoir exists and every node is reachable from one.
#[derive(Debug, Clone)]
pub struct WaterNetwork {
    nodes: Vec<Node>,
    pipes: Vec<Pipe>,
    edges: Vec<DirectedEdge>,
    /// Outgoing directed edges per node.
    out_edges: Vec<Vec<usize>>,
    reservoirs: Vec<usize>,
    id_to_node: HashMap<String, usize>,
    id_to_pipe: HashMap<String, usize>,
    warnings: Vec<String>,
}

impl WaterNetwork {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Number of directed edges (twice the pipe count).
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_pipes(&self) -> usize {
        self.pipes.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, v: usize) -> &Node {
        &self.nodes[v]
    }

    pub fn pipes(&self) -> &[Pipe] {
        &self.pipes
    }

    pub fn pipe(&self, p: usize) -> &Pipe {
        &self.pipes[p]
    }

    pub fn edges(&self) -> &[DirectedEdge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &DirectedEdge {
        &self.edges[e]
    }

    /// The antiparallel partner of a directed edge.
    #[inline]
    pub fn pair(&self, e: usize) -> usize {
        e ^ 1
    }

    /// Resistance coefficient of the pipe underlying a directed edge.
    #[inline]
    pub fn edge_resistance(&self, e: usize) -> f64 {
        self.pipes[self.edges[e].pipe].attr.resistance
    }

    /// Directed edges leaving node `v`.
    pub fn out_edges(&self, v: usize) -> &[usize] {
        &self.out_edges[v]
    }

    pub fn is_reservoir(&self, v: usize) -> bool {
        matches!(self.nodes[v].kind, NodeKind::Reservoir { .. })
    }

    pub fn reservoir_head(&self, v: usize) -> Option<f64> {
        match self.nodes[v].kind {
            NodeKind::Reservoir { head } => Some(head),
            NodeKind::Consumer => None,
        }
    }

    /// Node indices of all reservoirs, in node order.
    pub fn reservoirs(&self) -> &[usize] {
        &self.reservoirs
    }

    /// Smallest fixed head over all reservoirs.
    pub fn min_reservoir_head(&self) -> f64 {
        self.reservoirs
            .iter()
            .map(|&v| self.reservoir_head(v).unwrap())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.id_to_node.get(id).copied()
    }

    pub fn pipe_index(&self, id: &str) -> Option<usize> {
        self.id_to_pipe.get(id).copied()
    }

    /// Non-fatal observations recorded during validation.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// A copy of the network with every pipe diameter scaled by the matching
    /// multiplier and resistances recomputed. Used to perturb a base network
    /// into per-scenario variants.
    pub fn with_diameter_multipliers(
        &self,
        multipliers: &[f64],
    ) -> Result<WaterNetwork, NetworkError> {
        if multipliers.len() != self.pipes.len() {
            return Err(NetworkError::DimensionMismatch {
                what: "diameter multipliers",
                expected: self.pipes.len(),
                got: multipliers.len(),
            });
        }
        let mut out = self.clone();
        for (pipe, &m) in out.pipes.iter_mut().zip(multipliers) {
            if !(m > 0.0) || !m.is_finite() {
                return Err(NetworkError::BadMultiplier {
                    pipe: pipe.id.clone(),
                    value: m,
                });
            }
            let a = &pipe.attr;
            pipe.attr = PipeAttr::new(a.length, a.diameter * m, a.roughness)?;
        }
        Ok(out)
    }
}

/// Incremental construction of a [`WaterNetwork`]; `build` runs validation.
#[derive(Debug, Default)]
pub struct NetworkBuilder {
    nodes: Vec<Node>,
    pipes: Vec<(String, String, String, PipeAttr)>,
}

impl NetworkBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add a consumer node.
    pub fn node(mut self, id: &str, elevation: f64) -> Self {
        self.nodes.push(Node {
            id: id.to_string(),
            kind: NodeKind::Consumer,
            elevation,
        });
        self
    }

    /// Add a reservoir with a fixed head.
    pub fn reservoir(mut self, id: &str, head: f64) -> Self {
        self.nodes.push(Node {
            id: id.to_string(),
            kind: NodeKind::Reservoir { head },
            elevation: head,
        });
        self
    }

    /// Add a pipe; resistance is derived from the geometry immediately so a
    /// bad pipe fails here rather than at build time.
    pub fn pipe(
        mut self,
        id: &str,
        from: &str,
        to: &str,
        length: f64,
        diameter: f64,
        roughness: f64,
    ) -> Result<Self, NetworkError> {
        let attr = PipeAttr::new(length, diameter, roughness)?;
        self.pipes
            .push((id.to_string(), from.to_string(), to.to_string(), attr));
        Ok(self)
    }

    pub fn build(self) -> Result<WaterNetwork, NetworkError> {
        if self.nodes.is_empty() {
            return Err(NetworkError::Empty);
        }

        let mut id_to_node = HashMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if id_to_node.insert(node.id.clone(), i).is_some() {
                return Err(NetworkError::DuplicateNode(node.id.clone()));
            }
        }

        let mut id_to_pipe = HashMap::new();
        let mut pipes = Vec::with_capacity(self.pipes.len());
        let mut edges = Vec::with_capacity(self.pipes.len() * 2);
        let mut out_edges = vec![Vec::new(); self.nodes.len()];

        for (p, (id, from_id, to_id, attr)) in self.pipes.into_iter().enumerate() {
            if id_to_pipe.insert(id.clone(), p).is_some() {
                return Err(NetworkError::DuplicatePipe(id));
            }
            let from = *id_to_node
                .get(&from_id)
                .ok_or_else(|| NetworkError::UnknownEndpoint {
                    pipe: id.clone(),
                    node: from_id.clone(),
                })?;
            let to = *id_to_node
                .get(&to_id)
                .ok_or_else(|| NetworkError::UnknownEndpoint {
                    pipe: id.clone(),
                    node: to_id.clone(),
                })?;
            if from == to {
                return Err(NetworkError::SelfLoop(id));
            }

            let forward_is_canonical = (&from_id, &to_id) < (&to_id, &from_id);
            let e = edges.len();
            edges.push(DirectedEdge {
                from,
                to,
                pipe: p,
                canonical: forward_is_canonical,
            });
            edges.push(DirectedEdge {
                from: to,
                to: from,
                pipe: p,
                canonical: !forward_is_canonical,
            });
            out_edges[from].push(e);
            out_edges[to].push(e + 1);
            pipes.push(Pipe { id, attr });
        }

        let reservoirs: Vec<usize> = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.kind, NodeKind::Reservoir { .. }))
            .map(|(i, _)| i)
            .collect();
        if reservoirs.is_empty() {
            return Err(NetworkError::NoReservoir);
        }

        // Every node must be able to receive water from somewhere.
        let mut seen = vec![false; self.nodes.len()];
        let mut queue: VecDeque<usize> = reservoirs.iter().copied().collect();
        for &r in &reservoirs {
            seen[r] = true;
        }
        while let Some(v) = queue.pop_front() {
            for &e in &out_edges[v] {
                let u = edges[e].to;
                if !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
        if let Some(v) = seen.iter().position(|s| !s) {
            return Err(NetworkError::Unreachable(self.nodes[v].id.clone()));
        }

        let mut warnings = Vec::new();
        if edges.len() <= self.nodes.len() {
            warnings.push(format!(
                "directed edge count ({}) does not exceed node count ({}); \
                 flow fields on such networks are uniquely determined by demands",
                edges.len(),
                self.nodes.len()
            ));
        }

        Ok(WaterNetwork {
            nodes: self.nodes,
            pipes,
            edges,
            out_edges,
            reservoirs,
            id_to_node,
            id_to_pipe,
            warnings,
        })
    }
}
