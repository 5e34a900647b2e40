//! Reverse-mode automatic differentiation over a flat tape.
//!
//! Values are rank-1 or rank-2 `f64` tensors (vectors are single-column
//! matrices). Operations execute eagerly, appending a node that stores both
//! the forward value and whatever the backward pass needs (inputs by id,
//! argmax positions, masks). `Tape::backward` then walks the nodes once in
//! reverse, accumulating gradients in a fixed order so that repeated runs of
//! the same graph are bit-identical.
//!
//! The operation set is small on purpose: linear maps without bias, the
//! activations and sign/power primitives used by the hydraulic layers, gather
//! and segment reductions keyed by edge index maps, and L1-style reductions.

mod tape;
mod tensor;

pub use tape::{Gradients, Tape, ValueId};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("backward requires a scalar loss, got a {rows}x{cols} value")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("segment {segment} of {count} receives no rows in segment_max")]
    EmptySegment { segment: usize, count: usize },
}

/// Slope of SeLU for positive inputs.
pub const SELU_SCALE: f64 = 1.0507009873554805;
/// Negative-branch saturation constant of SeLU.
pub const SELU_ALPHA: f64 = 1.6732632423543772;

/// `|v|` is clamped to this before raising to a negative power in the
/// gradient of `signed_power` with exponent below one.
pub const POWER_GRAD_CLAMP: f64 = 1e-12;
