use thiserror::Error;

/// Errors raised while constructing or interrogating a network.
#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),

    #[error("duplicate pipe id `{0}`")]
    DuplicatePipe(String),

    #[error("pipe `{pipe}` references unknown node `{node}`")]
    UnknownEndpoint { pipe: String, node: String },

    #[error("pipe `{0}` connects a node to itself")]
    SelfLoop(String),

    #[error("network has no reservoir; at least one fixed-head node is required")]
    NoReservoir,

    #[error("node `{0}` is not reachable from any reservoir")]
    Unreachable(String),

    #[error("network is empty")]
    Empty,

    #[error("{field} must be positive, got {value}")]
    NonPositive { field: &'static str, value: f64 },

    #[error("expected {expected} {what}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("diameter multiplier for pipe `{pipe}` must be positive, got {value}")]
    BadMultiplier { pipe: String, value: f64 },
}
