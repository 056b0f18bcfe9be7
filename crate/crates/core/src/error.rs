use thiserror::Error;

use crate::overlay::{ChannelId, NodeId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate ledger: maximum throughput is zero")]
    ZeroThroughput,

    #[error("channel endpoints must differ (node {0})")]
    SelfChannel(NodeId),

    #[error("a channel between {0} and {1} already exists")]
    DuplicateChannel(NodeId, NodeId),

    #[error("channel funding must be positive")]
    ZeroFunding,

    #[error("unknown channel {0}")]
    UnknownChannel(ChannelId),

    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("hop {hop} lacks liquidity: needs {required}, has {available}")]
    AtomicityFailure { hop: usize, required: f64, available: f64 },

    #[error("malformed path: {0}")]
    InvalidPath(String),

    #[error("graph has {nodes} nodes, above the exhaustive-search cap of {cap}")]
    AboveOracleCap { nodes: usize, cap: usize },

    #[error("no path exists between {0} and {1} even with unlimited liquidity")]
    Disconnected(NodeId, NodeId),

    #[error("fee window is empty")]
    EmptyWindow,

    #[error("value {0} lies outside the open interval (0, 1)")]
    OutOfUnitInterval(f64),

    #[error("monopoly pricing has no interior optimum for elasticity {0}; a finite fee cap is required")]
    NoInteriorOptimum(f64),

    #[error("lightning fee is zero; migration pressure diverges")]
    DivergentPressure,

    #[error("total outbound liquidity is zero")]
    NoLiquidity,

    #[error("all values are zero")]
    AllZero,

    #[error("exact rebalancing search exceeded its budget of {0} states")]
    SearchBudget(u64),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}
