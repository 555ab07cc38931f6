use thiserror::Error;

use crate::mesh::Orders;

#[derive(Debug, Error)]
pub enum Error {
    #[error("polynomial order {order} exceeds the configured maximum {max}")]
    OrderTooHigh { order: usize, max: usize },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("inadmissible state: density {rho:e}, pressure {pressure:e}")]
    Inadmissible { rho: f64, pressure: f64 },

    #[error("element {element}: cannot interpolate from {native} up to {target}")]
    Upscale {
        element: usize,
        native: Orders,
        target: Orders,
    },

    #[error("solution does not match mesh: {0}")]
    Mismatch(String),

    #[error("degenerate regression input: {0}")]
    DegenerateFit(String),

    #[error(
        "order {order} in direction {direction} is outside the directional series range 1..={max}"
    )]
    OutsideSeries {
        direction: usize,
        order: usize,
        max: usize,
    },

    #[error("malformed truncation error map: {0}")]
    MalformedMap(String),

    #[error("snapshot parse error at line {line}: {msg}")]
    Snapshot { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
