use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("graph is disconnected: station {from} cannot reach station {to}")]
    Disconnected { from: usize, to: usize },

    #[error("hop distances have not been computed for this backbone")]
    MissingDistances,

    #[error("position ({x}, {y}) lies outside the square [0, {side}]^2")]
    InvalidPosition { x: f64, y: f64, side: f64 },

    #[error("degenerate topology: maximum betweenness is zero")]
    DegenerateTopology,

    #[error("network is congested even at rho = {rho}; no free-flow regime found")]
    NoFreeFlow { rho: f64 },

    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}
