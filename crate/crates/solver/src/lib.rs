//! Reference steady-state solver.
//!
//! Solves mass balance on the nodal heads with Newton's method: unknowns are
//! the heads at non-reservoir nodes, each equation is the flow sum plus
//! demand at one node, and the Jacobian is a weighted graph Laplacian
//! restricted to the unknowns (symmetric positive definite whenever the
//! network touches a reservoir, which validation guarantees). The linear
//! step is solved matrix-free with Jacobi-preconditioned conjugate
//! gradients; a backtracking line search on the residual norm keeps the
//! iteration stable from the flat start.
//!
//! This solver is the ground truth the learned emulator is measured against,
//! so it favors tight tolerances over speed.

use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use hydronet_core::{
    flow_from_headloss, node_imbalance, HydraulicState, NetworkError, WaterNetwork, FLOW_EXPONENT,
};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("demand at consumer `{node}` must be a finite non-negative value, got {value}")]
    BadDemand { node: String, value: f64 },

    #[error("expected one demand per node ({expected}), got {got}")]
    DemandLength { expected: usize, got: usize },

    #[error("no convergence after {iterations} iterations (mass residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("linear step failed: Jacobian is numerically singular")]
    Singular,

    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Tolerances and limits for [`solve_steady_state`].
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Convergence bound on the infinity norm of the head update.
    pub head_tolerance: f64,
    /// Convergence bound on the worst nodal mass imbalance.
    pub mass_tolerance: f64,
    /// Added to `|q|^(x-1)` when forming edge conductances so the Jacobian
    /// stays finite where a pipe carries no flow.
    pub regularization: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            head_tolerance: 1e-8,
            mass_tolerance: 1e-6,
            regularization: 1e-10,
            max_iterations: 200,
        }
    }
}

/// Solve for the steady state under the given nodal demands.
///
/// `demands` carries one entry per node; entries at reservoir nodes are
/// ignored (their demand is whatever balances the network and is filled in
/// on the returned state). Consumer demands must be finite and non-negative.
pub fn solve_steady_state(
    net: &WaterNetwork,
    demands: &[f64],
    cfg: &SolverConfig,
) -> Result<HydraulicState, SolveError> {
    if demands.len() != net.n_nodes() {
        return Err(SolveError::DemandLength {
            expected: net.n_nodes(),
            got: demands.len(),
        });
    }
    for v in 0..net.n_nodes() {
        if !net.is_reservoir(v) && (!demands[v].is_finite() || demands[v] < 0.0) {
            return Err(SolveError::BadDemand {
                node: net.node(v).id.clone(),
                value: demands[v],
            });
        }
    }

    let unknowns: Vec<usize> = (0..net.n_nodes()).filter(|&v| !net.is_reservoir(v)).collect();
    let mut slot_of_node = vec![usize::MAX; net.n_nodes()];
    for (i, &v) in unknowns.iter().enumerate() {
        slot_of_node[v] = i;
    }

    // Flat start: every unknown head one meter below the lowest reservoir.
    let mut heads = vec![0.0; net.n_nodes()];
    for v in 0..net.n_nodes() {
        heads[v] = match net.reservoir_head(v) {
            Some(h) => h,
            None => net.min_reservoir_head() - 1.0,
        };
    }

    let residual = |heads: &[f64]| -> Vec<f64> {
        unknowns
            .iter()
            .map(|&v| {
                let outflow: f64 = net
                    .out_edges(v)
                    .iter()
                    .map(|&e| {
                        let edge = net.edge(e);
                        flow_from_headloss(net.edge_resistance(e), heads[v] - heads[edge.to])
                    })
                    .sum();
                outflow + demands[v]
            })
            .collect()
    };
    let inf_norm = |f: &[f64]| f.iter().fold(0.0_f64, |m, v| m.max(v.abs()));

    if unknowns.is_empty() {
        return Ok(assemble_state(net, demands, heads));
    }

    let mut f = residual(&heads);
    let mut f_norm = inf_norm(&f);
    let mut step_norm = f64::INFINITY;

    for iteration in 0..cfg.max_iterations {
        if f_norm <= cfg.mass_tolerance && step_norm <= cfg.head_tolerance {
            let state = assemble_state(net, demands, heads);
            debug_assert!(
                node_imbalance(net, &state)
                    .map(|r| inf_norm(&r) <= cfg.mass_tolerance * 10.0)
                    .unwrap_or(false)
            );
            return Ok(state);
        }

        // Edge conductance dq/d(Δh), regularized near zero flow.
        let conductance: Vec<f64> = (0..net.n_edges())
            .map(|e| {
                let edge = net.edge(e);
                let r = net.edge_resistance(e);
                let q = flow_from_headloss(r, heads[edge.from] - heads[edge.to]);
                1.0 / (FLOW_EXPONENT * r * (q.abs().powf(FLOW_EXPONENT - 1.0) + cfg.regularization))
            })
            .collect();

        let neg_f: Vec<f64> = f.iter().map(|v| -v).collect();
        let direction = conjugate_gradient(net, &unknowns, &slot_of_node, &conductance, &neg_f)?;

        // Backtracking line search on the residual norm.
        let mut alpha = 1.0;
        let (accepted_heads, accepted_f) = loop {
            let mut trial = heads.clone();
            for (i, &v) in unknowns.iter().enumerate() {
                trial[v] += alpha * direction[i];
            }
            let trial_f = residual(&trial);
            if inf_norm(&trial_f) <= (1.0 - 1e-4 * alpha) * f_norm || alpha < 1e-4 {
                break (trial, trial_f);
            }
            alpha *= 0.5;
        };

        heads = accepted_heads;
        f = accepted_f;
        f_norm = inf_norm(&f);
        step_norm = alpha * inf_norm(&direction);
        let _ = iteration;
    }

    Err(SolveError::NonConvergence {
        iterations: cfg.max_iterations,
        residual: f_norm,
    })
}

/// Solve many demand vectors against one network. Failures are collected per
/// row rather than aborting the batch; per-row wall-clock times come along
/// for benchmarking.
pub struct BatchSolve {
    pub states: Vec<Result<HydraulicState, SolveError>>,
    pub seconds: Vec<f64>,
}

pub fn batch_solve(net: &WaterNetwork, rows: &[Vec<f64>], cfg: &SolverConfig) -> BatchSolve {
    let solved: Vec<(Result<HydraulicState, SolveError>, f64)> = rows
        .par_iter()
        .map(|demands| {
            let start = Instant::now();
            let out = solve_steady_state(net, demands, cfg);
            (out, start.elapsed().as_secs_f64())
        })
        .collect();
    let mut states = Vec::with_capacity(solved.len());
    let mut seconds = Vec::with_capacity(solved.len());
    for (state, secs) in solved {
        states.push(state);
        seconds.push(secs);
    }
    BatchSolve { states, seconds }
}

/// Jacobi-preconditioned conjugate gradients on the head-update system.
/// The operator is applied matrix-free straight off the edge list.
fn conjugate_gradient(
    net: &WaterNetwork,
    unknowns: &[usize],
    slot_of_node: &[usize],
    conductance: &[f64],
    b: &[f64],
) -> Result<Vec<f64>, SolveError> {
    let n = unknowns.len();
    let apply = |p: &[f64], out: &mut Vec<f64>| {
        out.clear();
        for (i, &v) in unknowns.iter().enumerate() {
            let mut acc = 0.0;
            for &e in net.out_edges(v) {
                let edge = net.edge(e);
                let g = conductance[e];
                let p_other = if slot_of_node[edge.to] == usize::MAX {
                    0.0
                } else {
                    p[slot_of_node[edge.to]]
                };
                acc += g * (p[i] - p_other);
            }
            out.push(acc);
        }
    };

    let diag: Vec<f64> = unknowns
        .iter()
        .map(|&v| net.out_edges(v).iter().map(|&e| conductance[e]).sum::<f64>())
        .collect();
    if diag.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
        return Err(SolveError::Singular);
    }

    let b_norm = b.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if b_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let tol = 1e-13 * b_norm;

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = Vec::with_capacity(n);

    for _ in 0..10 * n.max(8) {
        apply(&p, &mut ap);
        let p_ap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(p_ap > 0.0) || !p_ap.is_finite() {
            return Err(SolveError::Singular);
        }
        let alpha = rz / p_ap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if r.iter().fold(0.0_f64, |m, v| m.max(v.abs())) <= tol {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_next / rz;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rz = rz_next;
    }
    // CG on an SPD system of size n converges in at most n steps in exact
    // arithmetic; running long past that without meeting the tolerance means
    // the system is effectively singular.
    Err(SolveError::Singular)
}

/// Build the returned state: per-pipe flows from the head field (one
/// evaluation per pipe so antiparallel edges are exact negations) and
/// balancing demands at the reservoirs.
fn assemble_state(net: &WaterNetwork, demands: &[f64], heads: Vec<f64>) -> HydraulicState {
    let mut flows = vec![0.0; net.n_edges()];
    for p in 0..net.n_pipes() {
        let e = 2 * p;
        let edge = net.edge(e);
        let q = flow_from_headloss(net.edge_resistance(e), heads[edge.from] - heads[edge.to]);
        flows[e] = q;
        flows[e + 1] = -q;
    }
    let mut out_demands = demands.to_vec();
    for &v in net.reservoirs() {
        out_demands[v] = -net.out_edges(v).iter().map(|&e| flows[e]).sum::<f64>();
    }
    HydraulicState {
        heads,
        demands: out_demands,
        flows,
        physical: true,
    }
}
