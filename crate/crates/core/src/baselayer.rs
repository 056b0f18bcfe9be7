//! Base ledger fee model.
//!
//! The base layer is reduced to a throughput cap and a congestion-priced fee
//! function of aggregate demand. No mempool or per-transaction state lives here.

use crate::error::{Error, Result};

/// Which congestion cost curve the ledger uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CostModel {
    /// `f0 · max(1, D / T_max)^γ`
    #[default]
    Multiplicative,
    /// Linear up to saturation, then `α·T_max + β·(D − T_max)^γ`.
    PiecewiseRamp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseParams {
    pub block_size_bytes: u64,
    pub mean_tx_bytes: f64,
    pub block_interval_s: f64,
    /// Uncongested fee, also the minimum inclusion fee.
    pub base_fee_floor: f64,
    pub congestion_elasticity: f64,
    pub ramp_linear_rate: f64,
    pub ramp_penalty_coeff: f64,
    pub cost_model: CostModel,
    /// Display label for fee amounts. Nothing computes with it.
    pub fee_unit: String,
}

impl Default for BaseParams {
    fn default() -> Self {
        Self {
            block_size_bytes: 1_000_000,
            mean_tx_bytes: 333.0,
            block_interval_s: 600.0,
            base_fee_floor: 1.0,
            congestion_elasticity: 2.0,
            ramp_linear_rate: 0.1,
            ramp_penalty_coeff: 0.5,
            cost_model: CostModel::Multiplicative,
            fee_unit: "usd".to_string(),
        }
    }
}

impl BaseParams {
    pub fn validate(&self) -> Result<()> {
        if self.block_size_bytes == 0 {
            return Err(Error::Config("block_size_bytes must be positive".into()));
        }
        if !(self.mean_tx_bytes > 0.0 && self.mean_tx_bytes.is_finite()) {
            return Err(Error::Config("mean_tx_bytes must be positive".into()));
        }
        if !(self.block_interval_s > 0.0 && self.block_interval_s.is_finite()) {
            return Err(Error::Config("block_interval_s must be positive".into()));
        }
        if !(self.base_fee_floor >= 0.0 && self.base_fee_floor.is_finite()) {
            return Err(Error::Config("base_fee_floor must be non-negative".into()));
        }
        if !(self.congestion_elasticity >= 1.0 && self.congestion_elasticity.is_finite()) {
            return Err(Error::Config("congestion_elasticity must be at least 1".into()));
        }
        if !(self.ramp_linear_rate >= 0.0 && self.ramp_penalty_coeff >= 0.0) {
            return Err(Error::Config("ramp coefficients must be non-negative".into()));
        }
        Ok(())
    }

    /// Default fee parameters with a one-byte transaction, a one-second
    /// block and a throughput cap of exactly `tps`.
    pub fn with_throughput(tps: u64) -> Self {
        Self { mean_tx_bytes: 1.0, block_interval_s: 1.0, block_size_bytes: tps, ..Self::default() }
    }
}

/// Transactions per second the ledger can confirm: `⌊s / (t̄_tx · Δt)⌋`.
pub fn max_throughput(p: &BaseParams) -> u64 {
    let ratio = p.block_size_bytes as f64 / (p.mean_tx_bytes * p.block_interval_s);
    ratio.floor() as u64
}

/// Per-transaction fee at aggregate demand `demand_tps`.
///
/// Non-decreasing in demand under both cost models.
pub fn base_fee(demand_tps: f64, p: &BaseParams) -> Result<f64> {
    if !(demand_tps >= 0.0) {
        return Err(Error::Config(format!("demand must be non-negative, got {demand_tps}")));
    }
    let t_max = max_throughput(p);
    if t_max == 0 {
        return Err(Error::ZeroThroughput);
    }
    let t_max = t_max as f64;
    let gamma = p.congestion_elasticity;
    let fee = match p.cost_model {
        CostModel::Multiplicative => p.base_fee_floor * (demand_tps / t_max).max(1.0).powf(gamma),
        CostModel::PiecewiseRamp => {
            if demand_tps <= t_max {
                p.ramp_linear_rate * demand_tps
            } else {
                p.ramp_linear_rate * t_max + p.ramp_penalty_coeff * (demand_tps - t_max).powf(gamma)
            }
        }
    };
    Ok(fee)
}

/// Demand over confirmed supply, `θ = D / S`.
pub fn pressure_ratio(demand_tps: f64, supply_tps: f64) -> Result<f64> {
    if !(supply_tps > 0.0) {
        return Err(Error::Config(format!("supply must be positive, got {supply_tps}")));
    }
    Ok(demand_tps / supply_tps)
}

/// Mean fee over an observation window.
pub fn expected_window_fee(fees: &[f64]) -> Result<f64> {
    if fees.is_empty() {
        return Err(Error::EmptyWindow);
    }
    Ok(fees.iter().sum::<f64>() / fees.len() as f64)
}
