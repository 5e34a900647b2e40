//! Hazen-Williams head loss relations.
//!
//! Head loss along a pipe follows the empirical power law
//! `Δh = r · sgn(q) · |q|^x` with exponent `x = 1.852`. The resistance
//! coefficient `r` bundles pipe length, diameter and roughness and is
//! precomputed once per pipe; it is strictly positive for any physically
//! meaningful pipe, which makes the relation strictly monotone in `q` and
//! therefore invertible.

use crate::error::NetworkError;
use crate::graph::WaterNetwork;
use crate::state::HydraulicState;

/// Exponent of the Hazen-Williams head loss power law.
pub const FLOW_EXPONENT: f64 = 1.852;

/// Sign-preserving power: `sgn(v) · |v|^p`.
///
/// Odd in `v` for every exponent, which is what keeps head loss and the
/// inverse flow relation antisymmetric under flow reversal.
#[inline]
pub fn signed_power(v: f64, p: f64) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    v.abs().powf(p).copysign(v)
}

/// Resistance coefficient of a pipe from length (m), diameter (m) and the
/// dimensionless Hazen-Williams roughness.
///
/// All three inputs must be strictly positive; the offending field is named
/// in the error otherwise.
pub fn resistance_coefficient(
    length: f64,
    diameter: f64,
    roughness: f64,
) -> Result<f64, NetworkError> {
    for (field, value) in [
        ("length", length),
        ("diameter", diameter),
        ("roughness", roughness),
    ] {
        if !(value > 0.0) || !value.is_finite() {
            return Err(NetworkError::NonPositive { field, value });
        }
    }
    Ok(10.667 * length * diameter.powf(-4.871) * roughness.powf(-FLOW_EXPONENT))
}

/// Head loss `r · sgn(q) · |q|^x` along an edge carrying flow `q`.
#[inline]
pub fn headloss(resistance: f64, flow: f64) -> f64 {
    resistance * signed_power(flow, FLOW_EXPONENT)
}

/// Flow through an edge given the head drop `Δh` across it: the inverse of
/// [`headloss`], `sgn(Δh) · (|Δh| / r)^(1/x)`.
#[inline]
pub fn flow_from_headloss(resistance: f64, head_drop: f64) -> f64 {
    signed_power(head_drop / resistance, 1.0 / FLOW_EXPONENT)
}

/// Mass balance residual per node: the sum of flows leaving `v` plus the
/// demand at `v`. Zero everywhere iff the state conserves mass.
pub fn node_imbalance(
    net: &WaterNetwork,
    state: &HydraulicState,
) -> Result<Vec<f64>, NetworkError> {
    state.check_dims(net)?;
    let mut residual = Vec::with_capacity(net.n_nodes());
    for v in 0..net.n_nodes() {
        let outflow: f64 = net.out_edges(v).iter().map(|&e| state.flows[e]).sum();
        residual.push(outflow + state.demands[v]);
    }
    Ok(residual)
}
