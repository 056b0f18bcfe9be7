//! Scenario files: sectioned `key = value` text in TOML syntax.
//!
//! Syntax problems surface as [`Error::Parse`] with a line number. Missing
//! required keys, unknown keys and out-of-range values surface as
//! [`Error::Config`]. Per-agent overrides live in `[hub.N]` and `[user.N]`
//! tables and inherit every key they do not set from `[hub]` / `[user]`.

use std::collections::BTreeMap;

use toml::{Table, Value};

use crate::agents::{HubPolicy, PricingMode, UserPolicy};
use crate::baselayer::{BaseParams, CostModel};
use crate::engine::{
    AbandonConfig, AttachConfig, DemandSchedule, FlowPattern, LogUniform, RebalanceConfig, SimConfig, Topology,
};
use crate::equilibrium::LnFeeModel;
use crate::error::{Error, Result};
use crate::routing::{RouteView, SuccessModel};

const SECTIONS: &[(&str, &[&str])] = &[
    (
        "sim",
        &[
            "seed",
            "epochs",
            "users",
            "hubs",
            "topology",
            "edge_prob",
            "channel_capacity",
            "quote_view",
            "rng",
            "topk_fraction",
            "user_fee_base",
            "user_fee_rate",
        ],
    ),
    (
        "base",
        &[
            "block_size_bytes",
            "mean_tx_bytes",
            "block_interval_s",
            "base_fee_floor",
            "congestion_elasticity",
            "ramp_linear_rate",
            "ramp_penalty_coeff",
            "cost_model",
            "fee_unit",
        ],
    ),
    (
        "demand",
        &["schedule", "d0", "growth", "slope", "txs_per_demand", "max_txs_per_epoch", "flow", "payer_fraction", "bias"],
    ),
    ("payments", &["amount_min", "amount_max", "valuation_min", "valuation_max", "margin"]),
    ("success_model", &["enabled", "decay_rate"]),
    ("user", USER_KEYS),
    ("hub", HUB_KEYS),
    ("attach", &["enabled", "window", "sample_fraction", "horizon", "user_funding", "hub_match"]),
    ("abandon", &["enabled", "min_age", "window"]),
    ("rebalance", &["enabled", "trigger", "quantum", "max_cycles"]),
    ("ln_fees", &["channel_open_cost", "route_fee", "rebalance_fee", "tx_count"]),
    ("curves", &["d_min", "d_max", "points", "spacing"]),
];

const USER_KEYS: &[&str] = &["discount_factor", "risk_weight"];

const HUB_KEYS: &[&str] = &[
    "pricing_mode",
    "reserve_fixed",
    "reserve_marginal",
    "demand_scale",
    "demand_elasticity",
    "competitive_slack",
    "lock_cost_rate",
    "rebalance_cost_rate",
    "fee_rate",
    "fee_floor",
    "fee_cap",
    "fee_grid_points",
    "liquidity_sensitivity",
];

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// A parsed, key-checked scenario file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigDoc {
    table: Table,
}

impl ConfigDoc {
    pub fn parse(text: &str) -> Result<Self> {
        let table = text.parse::<Table>().map_err(|e| Error::Parse {
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().trim().to_string(),
        })?;
        let doc = Self { table };
        doc.check_keys()?;
        Ok(doc)
    }

    fn check_keys(&self) -> Result<()> {
        for (section, value) in &self.table {
            let Some((_, keys)) = SECTIONS.iter().find(|(s, _)| s == section) else {
                return Err(Error::Config(format!("unknown section [{section}]")));
            };
            let Value::Table(t) = value else {
                return Err(Error::Config(format!("`{section}` must be a section")));
            };
            for (key, v) in t {
                let agent_table = matches!(section.as_str(), "hub" | "user") && key.parse::<usize>().is_ok();
                if agent_table {
                    let Value::Table(inner) = v else {
                        return Err(Error::Config(format!("`{section}.{key}` must be a section")));
                    };
                    for k in inner.keys() {
                        if !keys.contains(&k.as_str()) {
                            return Err(Error::Config(format!("unknown key `{section}.{key}.{k}`")));
                        }
                    }
                } else if !keys.contains(&key.as_str()) {
                    return Err(Error::Config(format!("unknown key `{section}.{key}`")));
                }
            }
        }
        Ok(())
    }

    /// Sets a dotted key such as `demand.d0` or `hub.2.fee_rate`. The value
    /// is read as a TOML literal, falling back to a bare string.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let parts: Vec<&str> = key.split('.').collect();
        if !(2..=3).contains(&parts.len()) {
            return Err(Error::Config(format!("`{key}` is not a section.key name")));
        }
        let value = format!("v = {raw}")
            .parse::<Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(raw.to_string()));
        let mut table = &mut self.table;
        for part in &parts[..parts.len() - 1] {
            let entry = table.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
            table = match entry {
                Value::Table(t) => t,
                _ => return Err(Error::Config(format!("`{part}` in `{key}` is not a section"))),
            };
        }
        table.insert(parts[parts.len() - 1].to_string(), value);
        self.check_keys()
    }

    fn section(&self, name: &str) -> Option<&Table> {
        self.table.get(name).and_then(Value::as_table)
    }

    pub fn has_section(&self, name: &str) -> bool {
        self.section(name).is_some()
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let d = SimConfig::default();
        let sim = Reader::new(self.section("sim"), "sim");
        let demand = Reader::new(self.section("demand"), "demand");
        let pay = Reader::new(self.section("payments"), "payments");
        let sm = Reader::new(self.section("success_model"), "success_model");
        let att = Reader::new(self.section("attach"), "attach");
        let ab = Reader::new(self.section("abandon"), "abandon");
        let reb = Reader::new(self.section("rebalance"), "rebalance");

        let seed = sim.req_uint("seed")?;
        let epochs = sim.req_uint("epochs")?;
        let topology = match sim.string("topology", "random")?.as_str() {
            "star" => Topology::Star,
            "ring" => Topology::Ring,
            "random" => Topology::Random { edge_prob: sim.float("edge_prob", 0.1)? },
            other => return Err(sim.bad("topology", other)),
        };
        let quote_view = match sim.string("quote_view", "capacity")?.as_str() {
            "capacity" => RouteView::Capacity,
            "liquidity" => RouteView::Liquidity,
            "unlimited" => RouteView::Unlimited,
            other => return Err(sim.bad("quote_view", other)),
        };
        let d0 = demand.float("d0", 3.0)?;
        let schedule = match demand.string("schedule", "constant")?.as_str() {
            "constant" => DemandSchedule::Constant { d0 },
            "geometric" => DemandSchedule::Geometric { d0, growth: demand.float("growth", 1.01)? },
            "linear" => DemandSchedule::Linear { d0, slope: demand.float("slope", 0.0)? },
            other => return Err(demand.bad("schedule", other)),
        };
        let flow = match demand.string("flow", "uniform")?.as_str() {
            "uniform" => FlowPattern::Uniform,
            "directed" => FlowPattern::Directed {
                payer_fraction: demand.float("payer_fraction", 0.5)?,
                bias: demand.float("bias", 1.0)?,
            },
            other => return Err(demand.bad("flow", other)),
        };

        let hub_policy = hub_policy(self.section("hub"), "hub", &HubPolicy::default())?;
        let user_policy = user_policy(self.section("user"), "user", &UserPolicy::default())?;
        let mut hub_overrides = BTreeMap::new();
        for (i, t) in agent_tables(self.section("hub")) {
            hub_overrides.insert(i, hub_policy_from(t, &format!("hub.{i}"), &hub_policy)?);
        }
        let mut user_overrides = BTreeMap::new();
        for (i, t) in agent_tables(self.section("user")) {
            user_overrides.insert(i, user_policy_from(t, &format!("user.{i}"), &user_policy)?);
        }

        let cfg = SimConfig {
            seed,
            epochs,
            user_count: sim.uint("users", d.user_count as u64)? as usize,
            initial_hub_count: sim.uint("hubs", d.initial_hub_count as u64)? as usize,
            base: self.base_params()?,
            success_model: SuccessModel { decay_rate: sm.float("decay_rate", d.success_model.decay_rate)? },
            hazard_enabled: sm.boolean("enabled", d.hazard_enabled)?,
            demand_schedule: schedule,
            txs_per_demand: demand.float("txs_per_demand", d.txs_per_demand)?,
            max_txs_per_epoch: demand.uint("max_txs_per_epoch", d.max_txs_per_epoch as u64)? as usize,
            valuation_distribution: LogUniform {
                min: pay.float("valuation_min", d.valuation_distribution.min)?,
                max: pay.float("valuation_max", d.valuation_distribution.max)?,
            },
            amount_distribution: LogUniform {
                min: pay.float("amount_min", d.amount_distribution.min)?,
                max: pay.float("amount_max", d.amount_distribution.max)?,
            },
            margin: pay.float("margin", d.margin)?,
            user_policy,
            hub_policy,
            user_overrides,
            hub_overrides,
            initial_topology: topology,
            channel_capacity: sim.float("channel_capacity", d.channel_capacity)?,
            user_fee_base: sim.float("user_fee_base", d.user_fee_base)?,
            user_fee_rate: sim.float("user_fee_rate", d.user_fee_rate)?,
            flow,
            quote_view,
            attach: AttachConfig {
                enabled: att.boolean("enabled", d.attach.enabled)?,
                window: att.uint("window", d.attach.window)?,
                sample_fraction: att.float("sample_fraction", d.attach.sample_fraction)?,
                horizon: att.uint("horizon", d.attach.horizon as u64)? as u32,
                user_funding: att.float("user_funding", d.attach.user_funding)?,
                hub_match: att.float("hub_match", d.attach.hub_match)?,
            },
            abandon: AbandonConfig {
                enabled: ab.boolean("enabled", d.abandon.enabled)?,
                min_age: ab.uint("min_age", d.abandon.min_age)?,
                window: ab.uint("window", d.abandon.window)?,
            },
            rebalance: RebalanceConfig {
                enabled: reb.boolean("enabled", d.rebalance.enabled)?,
                trigger: reb.float("trigger", d.rebalance.trigger)?,
                quantum: reb.float("quantum", d.rebalance.quantum)?,
                max_cycles: reb.uint("max_cycles", d.rebalance.max_cycles as u64)? as usize,
            },
            topk_fraction: sim.float("topk_fraction", d.topk_fraction)?,
            rng: sim.string("rng", &d.rng)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn base_params(&self) -> Result<BaseParams> {
        let d = BaseParams::default();
        let r = Reader::new(self.section("base"), "base");
        let cost_model = match r.string("cost_model", "multiplicative")?.as_str() {
            "multiplicative" => CostModel::Multiplicative,
            "piecewise_ramp" => CostModel::PiecewiseRamp,
            other => return Err(r.bad("cost_model", other)),
        };
        let p = BaseParams {
            block_size_bytes: r.uint("block_size_bytes", d.block_size_bytes)?,
            mean_tx_bytes: r.float("mean_tx_bytes", d.mean_tx_bytes)?,
            block_interval_s: r.float("block_interval_s", d.block_interval_s)?,
            base_fee_floor: r.float("base_fee_floor", d.base_fee_floor)?,
            congestion_elasticity: r.float("congestion_elasticity", d.congestion_elasticity)?,
            ramp_linear_rate: r.float("ramp_linear_rate", d.ramp_linear_rate)?,
            ramp_penalty_coeff: r.float("ramp_penalty_coeff", d.ramp_penalty_coeff)?,
            cost_model,
            fee_unit: r.string("fee_unit", &d.fee_unit)?,
        };
        p.validate()?;
        Ok(p)
    }

    /// Channel fee model and the transaction count it is amortised over.
    pub fn ln_fee_model(&self) -> Result<(LnFeeModel, u64)> {
        let r = Reader::new(self.section("ln_fees"), "ln_fees");
        let m = LnFeeModel {
            channel_open_cost: r.float("channel_open_cost", 10.0)?,
            route_fee: r.float("route_fee", 0.01)?,
            rebalance_fee: r.float("rebalance_fee", 0.005)?,
        };
        m.validate()?;
        let n = r.uint("tx_count", 1000)?;
        if n == 0 {
            return Err(r.bad("tx_count", "0"));
        }
        Ok((m, n))
    }

    /// Demand grid for cost curves, linear or geometric between the bounds.
    pub fn curve_grid(&self) -> Result<Vec<f64>> {
        let r = Reader::new(self.section("curves"), "curves");
        let (lo, hi) = (r.float("d_min", 0.1)?, r.float("d_max", 100.0)?);
        let points = r.uint("points", 200)? as usize;
        if !(lo > 0.0 && hi > lo && points >= 2) {
            return Err(Error::Config("curves need 0 < d_min < d_max and at least 2 points".into()));
        }
        let t = |i: usize| i as f64 / (points - 1) as f64;
        match r.string("spacing", "linear")?.as_str() {
            "linear" => Ok((0..points).map(|i| lo + (hi - lo) * t(i)).collect()),
            "geometric" => Ok((0..points).map(|i| lo * (hi / lo).powf(t(i))).collect()),
            other => Err(r.bad("spacing", other)),
        }
    }
}

fn agent_tables(t: Option<&Table>) -> impl Iterator<Item = (usize, &Table)> {
    t.into_iter().flatten().filter_map(|(k, v)| Some((k.parse().ok()?, v.as_table()?)))
}

fn hub_policy(t: Option<&Table>, ctx: &str, base: &HubPolicy) -> Result<HubPolicy> {
    match t {
        Some(t) => hub_policy_from(t, ctx, base),
        None => Ok(base.clone()),
    }
}

fn hub_policy_from(t: &Table, ctx: &str, base: &HubPolicy) -> Result<HubPolicy> {
    let r = Reader::new(Some(t), ctx);
    let pricing_mode = match r.opt_string("pricing_mode")?.as_deref() {
        None => base.pricing_mode,
        Some("competitive") => PricingMode::Competitive,
        Some("monopoly") => PricingMode::Monopoly,
        Some("inverse_liquidity") => PricingMode::InverseLiquidity,
        Some(other) => return Err(r.bad("pricing_mode", other)),
    };
    let p = HubPolicy {
        pricing_mode,
        reserve_fixed: r.float("reserve_fixed", base.reserve_fixed)?,
        reserve_marginal: r.float("reserve_marginal", base.reserve_marginal)?,
        demand_scale: r.float("demand_scale", base.demand_scale)?,
        demand_elasticity: r.float("demand_elasticity", base.demand_elasticity)?,
        competitive_slack: r.float("competitive_slack", base.competitive_slack)?,
        lock_cost_rate: r.float("lock_cost_rate", base.lock_cost_rate)?,
        rebalance_cost_rate: r.float("rebalance_cost_rate", base.rebalance_cost_rate)?,
        fee_rate: r.float("fee_rate", base.fee_rate)?,
        fee_floor: r.float("fee_floor", base.fee_floor)?,
        fee_cap: r.float("fee_cap", base.fee_cap)?,
        fee_grid_points: r.uint("fee_grid_points", base.fee_grid_points as u64)? as usize,
        liquidity_sensitivity: r.float("liquidity_sensitivity", base.liquidity_sensitivity)?,
    };
    p.validate().map_err(|e| Error::Config(format!("[{ctx}] {e}")))?;
    Ok(p)
}

fn user_policy(t: Option<&Table>, ctx: &str, base: &UserPolicy) -> Result<UserPolicy> {
    match t {
        Some(t) => user_policy_from(t, ctx, base),
        None => Ok(base.clone()),
    }
}

fn user_policy_from(t: &Table, ctx: &str, base: &UserPolicy) -> Result<UserPolicy> {
    let r = Reader::new(Some(t), ctx);
    let p = UserPolicy {
        discount_factor: r.float("discount_factor", base.discount_factor)?,
        risk_weight: r.float("risk_weight", base.risk_weight)?,
    };
    p.validate().map_err(|e| Error::Config(format!("[{ctx}] {e}")))?;
    Ok(p)
}

/// Typed access to one section with defaults.
struct Reader<'a> {
    table: Option<&'a Table>,
    ctx: &'a str,
}

impl<'a> Reader<'a> {
    fn new(table: Option<&'a Table>, ctx: &'a str) -> Self {
        Self { table, ctx }
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        self.table.and_then(|t| t.get(key))
    }

    fn bad(&self, key: &str, got: &str) -> Error {
        Error::Config(format!("invalid value for `{}.{key}`: {got}", self.ctx))
    }

    fn typed(&self, key: &str, want: &str, v: &Value) -> Error {
        Error::Config(format!("`{}.{key}` must be {want}, got {v}", self.ctx))
    }

    fn float(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Float(f)) => Ok(*f),
            Some(Value::Integer(i)) => Ok(*i as f64),
            Some(v) => Err(self.typed(key, "a number", v)),
        }
    }

    fn uint(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Integer(i)) if *i >= 0 => Ok(*i as u64),
            Some(v) => Err(self.typed(key, "a non-negative integer", v)),
        }
    }

    fn req_uint(&self, key: &str) -> Result<u64> {
        if self.get(key).is_none() {
            return Err(Error::Config(format!("missing required key `{}.{key}`", self.ctx)));
        }
        self.uint(key, 0)
    }

    fn boolean(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(*b),
            Some(v) => Err(self.typed(key, "true or false", v)),
        }
    }

    fn opt_string(&self, key: &str) -> Result<Option<String>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => Err(self.typed(key, "a string", v)),
        }
    }

    fn string(&self, key: &str, default: &str) -> Result<String> {
        Ok(self.opt_string(key)?.unwrap_or_else(|| default.to_string()))
    }
}
