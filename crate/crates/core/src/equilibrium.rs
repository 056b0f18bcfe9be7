//! Closed-form cost comparisons between the base ledger and the channel
//! overlay. Nothing here touches the simulator.

use crate::baselayer::{base_fee, BaseParams};
use crate::error::{Error, Result};

/// Amortised per-payment channel cost.
#[derive(Debug, Clone, PartialEq)]
pub struct LnFeeModel {
    pub channel_open_cost: f64,
    pub route_fee: f64,
    pub rebalance_fee: f64,
}

impl LnFeeModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("channel_open_cost", self.channel_open_cost),
            ("route_fee", self.route_fee),
            ("rebalance_fee", self.rebalance_fee),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Long-run channel cost model `l/μ + α/D^β`.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticLnModel {
    pub mean_path_len: f64,
    pub liquidity_per_node: f64,
    pub penalty_scale: f64,
    pub penalty_exponent: f64,
}

/// `c_channel / n + f_route + f_rebalance`
pub fn amortized_ln_fee(m: &LnFeeModel, tx_count: u64) -> Result<f64> {
    if tx_count == 0 {
        return Err(Error::Config("tx_count must be at least 1".into()));
    }
    Ok(m.channel_open_cost / tx_count as f64 + m.route_fee + m.rebalance_fee)
}

/// Migration pressure `f_B / f_L`.
pub fn migration_pressure(base_fee: f64, ln_fee: f64) -> Result<f64> {
    if !(ln_fee > 0.0) {
        return Err(Error::DivergentPressure);
    }
    Ok(base_fee / ln_fee)
}

/// Evaluation grid and bisection tolerance for [`crossover_demand`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossoverSearch {
    pub d_max: f64,
    pub grid_points: usize,
    pub tolerance: f64,
}

impl CrossoverSearch {
    pub fn new(d_max: f64) -> Self {
        Self { d_max, grid_points: 1000, tolerance: 1e-9 }
    }

    fn grid(&self, i: usize) -> f64 {
        self.d_max * i as f64 / self.grid_points as f64
    }
}

/// Smallest demand in `(0, d_max]` at which the base fee strictly exceeds
/// `ln_fee`, refined by bisection. `None` when the base fee never crosses.
pub fn crossover_demand(base: &BaseParams, ln_fee: f64, search: CrossoverSearch) -> Result<Option<f64>> {
    if !(search.d_max > 0.0 && search.d_max.is_finite()) || search.grid_points == 0 {
        return Err(Error::Config("crossover search needs a positive d_max and grid".into()));
    }
    let above = |d: f64| -> Result<bool> { Ok(base_fee(d, base)? > ln_fee) };
    let first = search.grid(1);
    if above(first)? {
        return Ok(Some(first));
    }
    let mut prev = first;
    for i in 2..=search.grid_points {
        let d = search.grid(i);
        if above(d)? {
            let (mut lo, mut hi) = (prev, d);
            while hi - lo > search.tolerance {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if above(mid)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(Some(0.5 * (lo + hi)));
        }
        prev = d;
    }
    Ok(None)
}

/// `l/μ + α / D^β`
pub fn asymptotic_ln_cost(m: &AsymptoticLnModel, demand: f64) -> Result<f64> {
    if !(demand > 0.0) {
        return Err(Error::Config(format!("demand must be positive, got {demand}")));
    }
    Ok(m.mean_path_len / m.liquidity_per_node + m.penalty_scale / demand.powf(m.penalty_exponent))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostRow {
    pub demand: f64,
    pub cost_btc: f64,
    pub cost_ln: f64,
    pub cost_combined: f64,
}

pub const COST_CURVE_HEADER: &str = "demand,cost_btc,cost_ln,cost_combined";

/// Base and channel cost per demand level plus their blended cost.
///
/// The blend keeps demand up to the crossover on the base ledger (priced at
/// that load) and sends the rest to channels.
pub fn cost_curves(base: &BaseParams, m: &LnFeeModel, tx_count: u64, demand_grid: &[f64]) -> Result<Vec<CostRow>> {
    if demand_grid.is_empty() {
        return Err(Error::Config("demand grid is empty".into()));
    }
    if demand_grid.iter().any(|d| !(*d > 0.0)) || demand_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("demand grid must be positive and increasing".into()));
    }
    let cost_ln = amortized_ln_fee(m, tx_count)?;
    let d_max = *demand_grid.last().unwrap();
    let crossover = crossover_demand(base, cost_ln, CrossoverSearch::new(d_max))?;
    demand_grid
        .iter()
        .map(|&d| {
            let cost_btc = base_fee(d, base)?;
            let cost_combined = match crossover {
                Some(star) if d > star => {
                    let onchain_share = star / d;
                    onchain_share * base_fee(star, base)? + (1.0 - onchain_share) * cost_ln
                }
                _ => cost_btc,
            };
            Ok(CostRow { demand: d, cost_btc, cost_ln, cost_combined })
        })
        .collect()
}

pub fn cost_curves_csv(rows: &[CostRow]) -> String {
    let mut out = String::from(COST_CURVE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.demand, r.cost_btc, r.cost_ln, r.cost_combined));
    }
    out
}
