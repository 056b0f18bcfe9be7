//! Strategic decision rules for users and hubs.

use crate::error::{Error, Result};
use crate::routing::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct UserPolicy {
    /// Per-epoch discount applied to future savings, in (0, 1].
    pub discount_factor: f64,
    /// Weight on expected risk cost when comparing a channel route to the
    /// base ledger.
    pub risk_weight: f64,
}

impl Default for UserPolicy {
    fn default() -> Self {
        Self { discount_factor: 0.95, risk_weight: 0.0 }
    }
}

impl UserPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.discount_factor > 0.0 && self.discount_factor <= 1.0) {
            return Err(Error::Config(format!("discount_factor must lie in (0, 1], got {}", self.discount_factor)));
        }
        if !(self.risk_weight >= 0.0) {
            return Err(Error::Config("risk_weight must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PricingMode {
    Monopoly,
    #[default]
    Competitive,
    /// Fee proportional to `sensitivity / outbound liquidity`.
    InverseLiquidity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HubPolicy {
    pub pricing_mode: PricingMode,
    /// Fixed part `c0` of the reserve cost `c_r(f) = c0 + c1·λ(f)`.
    pub reserve_fixed: f64,
    /// Marginal part `c1` of the reserve cost.
    pub reserve_marginal: f64,
    /// Scale `λ0` of the iso-elastic routed volume `λ(f) = λ0·f^(−η)`.
    pub demand_scale: f64,
    pub demand_elasticity: f64,
    pub competitive_slack: f64,
    /// Opportunity cost per unit of locked liquidity per epoch.
    pub lock_cost_rate: f64,
    /// Cost per unit of liquidity moved by a rebalancing cycle hop.
    pub rebalance_cost_rate: f64,
    /// Proportional fee `β` quoted alongside the base fee.
    pub fee_rate: f64,
    /// Fee grid for monopoly pricing. `fee_cap` may be infinite.
    pub fee_floor: f64,
    pub fee_cap: f64,
    pub fee_grid_points: usize,
    /// Numerator for [`PricingMode::InverseLiquidity`].
    pub liquidity_sensitivity: f64,
}

impl Default for HubPolicy {
    fn default() -> Self {
        Self {
            pricing_mode: PricingMode::Competitive,
            reserve_fixed: 0.0,
            reserve_marginal: 0.05,
            demand_scale: 1.0,
            demand_elasticity: 2.0,
            competitive_slack: 0.01,
            lock_cost_rate: 0.0,
            rebalance_cost_rate: 0.001,
            fee_rate: 0.0,
            fee_floor: 0.01,
            fee_cap: 100.0,
            fee_grid_points: 10_001,
            liquidity_sensitivity: 5.0,
        }
    }
}

impl HubPolicy {
    pub fn validate(&self) -> Result<()> {
        let non_neg = [
            ("reserve_fixed", self.reserve_fixed),
            ("reserve_marginal", self.reserve_marginal),
            ("competitive_slack", self.competitive_slack),
            ("lock_cost_rate", self.lock_cost_rate),
            ("rebalance_cost_rate", self.rebalance_cost_rate),
            ("fee_rate", self.fee_rate),
            ("liquidity_sensitivity", self.liquidity_sensitivity),
        ];
        for (name, v) in non_neg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(self.demand_scale > 0.0 && self.demand_elasticity > 0.0) {
            return Err(Error::Config("demand_scale and demand_elasticity must be positive".into()));
        }
        if !(self.fee_floor > 0.0 && self.fee_cap > self.fee_floor) {
            return Err(Error::Config("fee grid needs 0 < fee_floor < fee_cap".into()));
        }
        if self.fee_grid_points < 2 {
            return Err(Error::Config("fee_grid_points must be at least 2".into()));
        }
        Ok(())
    }

    /// Routed volume at fee `f`: `λ0·f^(−η)`.
    pub fn routed_volume(&self, fee: f64) -> f64 {
        self.demand_scale * fee.powf(-self.demand_elasticity)
    }

    /// Per-epoch profit `f·λ(f) − c_r(f)`.
    pub fn profit(&self, fee: f64) -> f64 {
        let volume = self.routed_volume(fee);
        fee * volume - (self.reserve_fixed + self.reserve_marginal * volume)
    }

    /// Closed-form monopoly markup `c1·η/(η − 1)`, defined for `η > 1`.
    pub fn monopoly_markup(&self) -> Option<f64> {
        let eta = self.demand_elasticity;
        (eta > 1.0).then(|| self.reserve_marginal * eta / (eta - 1.0))
    }
}

/// Fee a hub posts for the coming epoch.
///
/// Competitive hubs undercut to `c1 + slack`; monopolists take the grid
/// argmax of `f·λ(f) − c_r(f)`.
pub fn hub_set_fee(policy: &HubPolicy) -> Result<f64> {
    match policy.pricing_mode {
        PricingMode::Competitive => Ok(policy.reserve_marginal + policy.competitive_slack),
        PricingMode::Monopoly => monopoly_fee(policy),
        PricingMode::InverseLiquidity => Err(Error::Config(
            "inverse-liquidity pricing depends on outbound liquidity; use inverse_liquidity_fee".into(),
        )),
    }
}

fn monopoly_fee(policy: &HubPolicy) -> Result<f64> {
    let eta = policy.demand_elasticity;
    let cap = if policy.fee_cap.is_finite() {
        policy.fee_cap
    } else {
        match policy.monopoly_markup() {
            Some(m) if eta > 1.0 => (4.0 * m).max(2.0 * policy.fee_floor),
            _ => return Err(Error::NoInteriorOptimum(eta)),
        }
    };
    let n = policy.fee_grid_points;
    let step = (cap - policy.fee_floor) / (n - 1) as f64;
    let mut best = (policy.fee_floor, f64::NEG_INFINITY);
    for i in 0..n {
        let f = policy.fee_floor + step * i as f64;
        let profit = policy.profit(f);
        if profit > best.1 {
            best = (f, profit);
        }
    }
    Ok(best.0)
}

/// Fee that falls as the hub's outbound liquidity grows.
pub fn inverse_liquidity_fee(policy: &HubPolicy, outbound_liquidity: f64) -> f64 {
    let fee = policy.liquidity_sensitivity / outbound_liquidity.max(1e-9);
    fee.clamp(policy.fee_floor, policy.fee_cap)
}

/// Venue a user settles a transaction on.
#[derive(Debug, Clone, PartialEq)]
pub enum VenueDecision {
    Lightning(Path),
    OnChain,
    Abstain,
}

/// Cheapest venue whose cost stays below the valuation. Channel routes win
/// exact ties.
pub fn user_choose_venue(valuation: f64, ln_quote: Option<(Path, f64)>, onchain_fee: f64) -> VenueDecision {
    let onchain_ok = onchain_fee < valuation;
    match ln_quote {
        Some((path, cost)) if cost < valuation && (!onchain_ok || cost <= onchain_fee) => {
            VenueDecision::Lightning(path)
        }
        _ if onchain_ok => VenueDecision::OnChain,
        _ => VenueDecision::Abstain,
    }
}

/// Discounted saving over `horizon` epochs: `Σ_{t<H} δ^t · saving`.
pub fn discounted_saving(est_saving_per_epoch: f64, horizon_epochs: u32, discount_factor: f64) -> f64 {
    let mut total = 0.0;
    let mut weight = 1.0;
    for _ in 0..horizon_epochs {
        total += weight * est_saving_per_epoch;
        weight *= discount_factor;
    }
    total
}

/// Open a channel to a hub when the discounted saving strictly exceeds the
/// on-chain opening fee.
pub fn attach_decision(
    est_saving_per_epoch: f64,
    horizon_epochs: u32,
    discount_factor: f64,
    onchain_open_fee: f64,
) -> bool {
    discounted_saving(est_saving_per_epoch, horizon_epochs, discount_factor) > onchain_open_fee
}

/// Abandon when expected revenue falls strictly below the reserve cost.
pub fn abandon_decision(expected_epoch_revenue: f64, reserve_cost: f64) -> bool {
    expected_epoch_revenue < reserve_cost
}

/// Running totals for one hub. All fields only grow.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HubLedger {
    pub fee_revenue: f64,
    pub routed_count: u64,
    pub lock_costs: f64,
    pub reb_costs: f64,
}

/// Net epoch payoff: revenue minus carrying cost of locked liquidity minus
/// rebalancing spend.
pub fn hub_epoch_payoff(epoch_revenue: f64, liquidity_out: f64, epoch_reb_costs: f64, policy: &HubPolicy) -> f64 {
    epoch_revenue - policy.lock_cost_rate * liquidity_out - epoch_reb_costs
}

impl HubLedger {
    /// Payoff of the epoch between `before` and `self`.
    pub fn epoch_payoff(&self, before: &HubLedger, liquidity_out: f64, policy: &HubPolicy) -> f64 {
        hub_epoch_payoff(
            self.fee_revenue - before.fee_revenue,
            liquidity_out,
            self.reb_costs - before.reb_costs,
            policy,
        )
    }
}
