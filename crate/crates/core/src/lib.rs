//! Deterministic discrete-time simulator of a throughput-capped base ledger
//! with an off-chain payment-channel overlay.

// `!(x > 0.0)` is the NaN-rejecting form used for every range check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod baselayer;
pub mod check;
pub mod config;
pub mod engine;
pub mod equilibrium;
pub mod error;
pub mod metrics;
pub mod overlay;
pub mod par;
pub mod rebalance;
pub mod routing;
pub mod snapshot;
pub mod sweep;

pub use error::{Error, Result};
