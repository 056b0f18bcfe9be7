//! Epoch-by-epoch orchestration of users, hubs and the two settlement venues.
//!
//! Nodes `0..hubs` are hubs and the remaining `users` nodes are users. Every
//! random draw comes from a ChaCha8 stream keyed by the config seed, one stream
//! per purpose, so a trace is a pure function of the config.

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agents::{
    abandon_decision, attach_decision, hub_set_fee, inverse_liquidity_fee, user_choose_venue, HubLedger, HubPolicy,
    PricingMode, UserPolicy, VenueDecision,
};
use crate::baselayer::{base_fee, max_throughput, BaseParams};
use crate::error::{Error, Result};
use crate::metrics::{gini, topk_of};
use crate::overlay::{enforcement_feasible, ChannelId, Direction, NodeId, OverlayGraph};
use crate::par::{self, Execution};
use crate::rebalance::{apply_plan, deviation, greedy_rebalance, RebalanceProblem};
use crate::routing::{best_path_in_view, path_cost, success_probability, RouteView, SuccessModel};

/// The only generator this build implements.
pub const RNG_ALGORITHM: &str = "chacha8";

const STREAM_TOPOLOGY: u64 = 0;
const STREAM_DEMAND: u64 = 1;
const STREAM_HAZARD: u64 = 2;
const STREAM_ATTACH: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DemandSchedule {
    Constant { d0: f64 },
    Geometric { d0: f64, growth: f64 },
    Linear { d0: f64, slope: f64 },
}

impl DemandSchedule {
    pub fn at(&self, epoch: u64) -> f64 {
        match *self {
            DemandSchedule::Constant { d0 } => d0,
            DemandSchedule::Geometric { d0, growth } => d0 * growth.powf(epoch as f64),
            DemandSchedule::Linear { d0, slope } => (d0 + slope * epoch as f64).max(0.0),
        }
    }

    fn validate(&self) -> Result<()> {
        let (d0, ok) = match *self {
            DemandSchedule::Constant { d0 } => (d0, true),
            DemandSchedule::Geometric { d0, growth } => (d0, growth > 0.0 && growth.is_finite()),
            DemandSchedule::Linear { d0, slope } => (d0, slope.is_finite()),
        };
        if !(d0 >= 0.0 && d0.is_finite() && ok) {
            return Err(Error::Config(format!("invalid demand schedule {self:?}")));
        }
        Ok(())
    }
}

/// Log-uniform distribution on `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogUniform {
    pub min: f64,
    pub max: f64,
}

impl LogUniform {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        let d = Self { min, max };
        d.validate("distribution")?;
        Ok(d)
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.min > 0.0 && self.max >= self.min && self.max.is_finite()) {
            return Err(Error::Config(format!(
                "{name} bounds must satisfy 0 < min <= max, got [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.min == self.max {
            return self.min;
        }
        let (lo, hi) = (self.min.ln(), self.max.ln());
        (lo + rng.random::<f64>() * (hi - lo)).exp().clamp(self.min, self.max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Topology {
    /// Users attach round-robin to hubs; hubs form a clique.
    Star,
    /// One cycle through all nodes in id order.
    Ring,
    /// Each node pair is linked independently with probability `edge_prob`.
    Random { edge_prob: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowPattern {
    /// Source and destination drawn uniformly among users.
    Uniform,
    /// The first `payer_fraction` of users pay the rest with probability
    /// `bias`; other transactions are uniform.
    Directed { payer_fraction: f64, bias: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttachConfig {
    pub enabled: bool,
    /// Epochs of transaction history used to estimate savings.
    pub window: u64,
    pub sample_fraction: f64,
    pub horizon: u32,
    pub user_funding: f64,
    pub hub_match: f64,
}

impl Default for AttachConfig {
    fn default() -> Self {
        Self { enabled: true, window: 10, sample_fraction: 0.1, horizon: 20, user_funding: 50.0, hub_match: 50.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbandonConfig {
    pub enabled: bool,
    pub min_age: u64,
    pub window: u64,
}

impl Default for AbandonConfig {
    fn default() -> Self {
        Self { enabled: true, min_age: 20, window: 10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RebalanceConfig {
    pub enabled: bool,
    /// Rebalance once deviation exceeds this fraction of total capacity.
    pub trigger: f64,
    pub quantum: f64,
    pub max_cycles: usize,
}

impl Default for RebalanceConfig {
    fn default() -> Self {
        Self { enabled: true, trigger: 0.1, quantum: 1.0, max_cycles: 20 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub epochs: u64,
    pub user_count: usize,
    pub initial_hub_count: usize,
    pub base: BaseParams,
    pub success_model: SuccessModel,
    /// Fail each channel payment with probability `1 − S(path)` before execution.
    pub hazard_enabled: bool,
    pub demand_schedule: DemandSchedule,
    /// Transactions drawn per unit of demand per epoch.
    pub txs_per_demand: f64,
    pub max_txs_per_epoch: usize,
    pub valuation_distribution: LogUniform,
    pub amount_distribution: LogUniform,
    pub margin: f64,
    pub user_policy: UserPolicy,
    pub hub_policy: HubPolicy,
    pub user_overrides: BTreeMap<usize, UserPolicy>,
    pub hub_overrides: BTreeMap<usize, HubPolicy>,
    pub initial_topology: Topology,
    pub channel_capacity: f64,
    pub user_fee_base: f64,
    pub user_fee_rate: f64,
    pub flow: FlowPattern,
    /// What users see when quoting a route. Payments always execute against
    /// true balances.
    pub quote_view: RouteView,
    pub attach: AttachConfig,
    pub abandon: AbandonConfig,
    pub rebalance: RebalanceConfig,
    pub topk_fraction: f64,
    pub rng: String,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 200,
            user_count: 50,
            initial_hub_count: 5,
            base: BaseParams::default(),
            success_model: SuccessModel::default(),
            hazard_enabled: false,
            demand_schedule: DemandSchedule::Constant { d0: 3.0 },
            txs_per_demand: 10.0,
            max_txs_per_epoch: 1000,
            valuation_distribution: LogUniform { min: 0.5, max: 50.0 },
            amount_distribution: LogUniform { min: 1.0, max: 10.0 },
            margin: 0.0,
            user_policy: UserPolicy::default(),
            hub_policy: HubPolicy::default(),
            user_overrides: BTreeMap::new(),
            hub_overrides: BTreeMap::new(),
            initial_topology: Topology::Random { edge_prob: 0.1 },
            channel_capacity: 100.0,
            user_fee_base: 0.1,
            user_fee_rate: 0.0,
            flow: FlowPattern::Uniform,
            quote_view: RouteView::Capacity,
            attach: AttachConfig::default(),
            abandon: AbandonConfig::default(),
            rebalance: RebalanceConfig::default(),
            topk_fraction: 0.1,
            rng: RNG_ALGORITHM.to_string(),
        }
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(msg()))
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        check(self.epochs >= 1, || "epochs must be at least 1".into())?;
        check(self.rng == RNG_ALGORITHM, || format!("unsupported rng {:?}, expected {RNG_ALGORITHM}", self.rng))?;
        self.base.validate()?;
        check(max_throughput(&self.base) >= 1, || "base layer throughput rounds down to zero".into())?;
        SuccessModel::new(self.success_model.decay_rate)?;
        self.demand_schedule.validate()?;
        check(self.txs_per_demand >= 0.0 && self.txs_per_demand.is_finite(), || {
            "txs_per_demand must be non-negative".into()
        })?;
        self.valuation_distribution.validate("valuation")?;
        self.amount_distribution.validate("amount")?;
        check(self.margin >= 0.0 && self.margin.is_finite(), || "margin must be non-negative".into())?;
        self.user_policy.validate()?;
        self.hub_policy.validate()?;
        for (&i, p) in &self.user_overrides {
            check(i < self.user_count, || format!("override for user {i} but only {} users", self.user_count))?;
            p.validate()?;
        }
        for (&i, p) in &self.hub_overrides {
            check(i < self.initial_hub_count, || {
                format!("override for hub {i} but only {} hubs", self.initial_hub_count)
            })?;
            p.validate()?;
        }
        if let Topology::Random { edge_prob } = self.initial_topology {
            check((0.0..=1.0).contains(&edge_prob), || format!("edge_prob must lie in [0, 1], got {edge_prob}"))?;
        }
        check(self.channel_capacity > 0.0 && self.channel_capacity.is_finite(), || {
            "channel_capacity must be positive".into()
        })?;
        check(self.user_fee_base >= 0.0 && self.user_fee_rate >= 0.0, || "user fees must be non-negative".into())?;
        if let FlowPattern::Directed { payer_fraction, bias } = self.flow {
            check(payer_fraction > 0.0 && payer_fraction < 1.0, || "payer_fraction must lie in (0, 1)".into())?;
            check((0.0..=1.0).contains(&bias), || "bias must lie in [0, 1]".into())?;
        }
        let a = &self.attach;
        check(a.window >= 1, || "attach window must be at least 1".into())?;
        check((0.0..=1.0).contains(&a.sample_fraction), || "attach sample_fraction must lie in [0, 1]".into())?;
        check(a.user_funding >= 0.0 && a.hub_match >= 0.0 && a.user_funding + a.hub_match > 0.0, || {
            "attach funding must be non-negative with a positive total".into()
        })?;
        check(self.abandon.window >= 1, || "abandon window must be at least 1".into())?;
        let r = &self.rebalance;
        check(r.trigger >= 0.0 && r.quantum > 0.0, || "rebalance trigger must be >= 0 and quantum > 0".into())?;
        check(self.topk_fraction > 0.0 && self.topk_fraction <= 1.0, || "topk_fraction must lie in (0, 1]".into())?;
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.initial_hub_count + self.user_count
    }

    /// Number of nodes counted by `topk_liquidity_share`.
    pub fn topk(&self) -> usize {
        ((self.topk_fraction * self.node_count() as f64).ceil() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsFrame {
    pub epoch: u64,
    pub demand: f64,
    pub onchain_fee: f64,
    /// Mean fee over successful channel payments; 0 when there were none.
    pub ln_mean_fee: f64,
    pub ln_route_failures: u64,
    pub ln_attempts: u64,
    pub abstentions: u64,
    pub onchain_count: u64,
    pub ln_count: u64,
    pub top1_liquidity_share: f64,
    pub topk_liquidity_share: f64,
    pub gini_liquidity: f64,
    pub channel_count: u64,
    pub opens: u64,
    pub closes: u64,
}

pub const TRACE_HEADER: &str = "epoch,demand,onchain_fee,ln_mean_fee,ln_route_failures,ln_attempts,abstentions,onchain_count,ln_count,top1_liquidity_share,topk_liquidity_share,gini_liquidity,channel_count,opens,closes";

impl MetricsFrame {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.demand,
            self.onchain_fee,
            self.ln_mean_fee,
            self.ln_route_failures,
            self.ln_attempts,
            self.abstentions,
            self.onchain_count,
            self.ln_count,
            self.top1_liquidity_share,
            self.topk_liquidity_share,
            self.gini_liquidity,
            self.channel_count,
            self.opens,
            self.closes
        )
    }
}

pub fn trace_csv(frames: &[MetricsFrame]) -> String {
    let mut out = format!("{TRACE_HEADER}\n");
    for f in frames {
        out.push_str(&f.csv_row());
        out.push('\n');
    }
    out
}

/// Capacity bookkeeping for one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CapacityAudit {
    pub epoch: u64,
    pub start: f64,
    pub opened: f64,
    pub closed: f64,
    pub end: f64,
}

impl CapacityAudit {
    pub fn conserved(&self) -> bool {
        let expected = self.start + self.opened - self.closed;
        (expected - self.end).abs() <= 1e-9 * expected.abs().max(1.0)
    }
}

#[derive(Debug, Clone, Copy)]
struct TxRecord {
    src: NodeId,
    dst: NodeId,
    amount: f64,
    /// Cheapest cost the user saw, on either venue.
    best_cost: f64,
}

/// Full simulator state between epochs.
#[derive(Debug, Clone)]
pub struct Simulation {
    cfg: SimConfig,
    epoch: u64,
    graph: OverlayGraph,
    hub_policies: Vec<HubPolicy>,
    user_policies: Vec<UserPolicy>,
    fixed_fees: Vec<Option<f64>>,
    hub_fees: Vec<f64>,
    ledgers: Vec<HubLedger>,
    demand_rng: ChaCha8Rng,
    hazard_rng: ChaCha8Rng,
    attach_rng: ChaCha8Rng,
    history: VecDeque<Vec<TxRecord>>,
    earned_history: VecDeque<BTreeMap<ChannelId, f64>>,
    demand_override: Option<f64>,
    audits: Vec<CapacityAudit>,
    shares: Vec<Vec<f64>>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn stochastic_round(x: f64, rng: &mut impl Rng) -> usize {
    let floor = x.floor();
    let extra = if rng.random::<f64>() < x - floor { 1 } else { 0 };
    floor as usize + extra
}

impl Simulation {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let hubs = cfg.initial_hub_count;
        let hub_policies: Vec<HubPolicy> =
            (0..hubs).map(|h| cfg.hub_overrides.get(&h).unwrap_or(&cfg.hub_policy).clone()).collect();
        let user_policies =
            (0..cfg.user_count).map(|u| cfg.user_overrides.get(&u).unwrap_or(&cfg.user_policy).clone()).collect();
        let fixed_fees = hub_policies
            .iter()
            .map(|p| match p.pricing_mode {
                PricingMode::InverseLiquidity => Ok(None),
                _ => hub_set_fee(p).map(Some),
            })
            .collect::<Result<Vec<_>>>()?;
        let mut sim = Self {
            epoch: 0,
            graph: OverlayGraph::new(cfg.node_count()),
            hub_fees: vec![0.0; hubs],
            ledgers: vec![HubLedger::default(); hubs],
            hub_policies,
            user_policies,
            fixed_fees,
            demand_rng: stream(cfg.seed, STREAM_DEMAND),
            hazard_rng: stream(cfg.seed, STREAM_HAZARD),
            attach_rng: stream(cfg.seed, STREAM_ATTACH),
            history: VecDeque::new(),
            earned_history: VecDeque::new(),
            demand_override: None,
            audits: Vec::new(),
            shares: Vec::new(),
            cfg,
        };
        sim.build_topology();
        sim.reprice();
        Ok(sim)
    }

    fn build_topology(&mut self) {
        let n = self.cfg.node_count() as u32;
        let hubs = self.cfg.initial_hub_count as u32;
        let mut pairs = Vec::new();
        match self.cfg.initial_topology {
            Topology::Star => {
                for a in 0..hubs {
                    for b in a + 1..hubs {
                        pairs.push((a, b));
                    }
                }
                if hubs > 0 {
                    for u in hubs..n {
                        pairs.push(((u - hubs) % hubs, u));
                    }
                } else {
                    // Without hubs the first user is the centre.
                    for u in 1..n {
                        pairs.push((0, u));
                    }
                }
            }
            Topology::Ring => {
                if n == 2 {
                    pairs.push((0, 1));
                } else if n > 2 {
                    for a in 0..n {
                        pairs.push((a, (a + 1) % n));
                    }
                }
            }
            Topology::Random { edge_prob } => {
                let mut rng = stream(self.cfg.seed, STREAM_TOPOLOGY);
                for a in 0..n {
                    for b in a + 1..n {
                        if rng.random::<f64>() < edge_prob {
                            pairs.push((a, b));
                        }
                    }
                }
            }
        }
        let half = self.cfg.channel_capacity / 2.0;
        for (a, b) in pairs {
            self.graph
                .open_channel(NodeId(a), NodeId(b), half, half, 0.0)
                .expect("initial topology has distinct, unique pairs");
        }
        // The initial network is given, not paid for.
        self.graph.onchain_op_count = 0;
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn graph(&self) -> &OverlayGraph {
        &self.graph
    }

    pub fn graph_mut(&mut self) -> &mut OverlayGraph {
        &mut self.graph
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn ledgers(&self) -> &[HubLedger] {
        &self.ledgers
    }

    pub fn hub_fees(&self) -> &[f64] {
        &self.hub_fees
    }

    pub fn audits(&self) -> &[CapacityAudit] {
        &self.audits
    }

    /// Per-epoch liquidity share of every node, indexed by node id.
    pub fn share_trajectory(&self) -> &[Vec<f64>] {
        &self.shares
    }

    pub fn is_hub(&self, node: NodeId) -> bool {
        node.index() < self.cfg.initial_hub_count
    }

    /// Replaces the demand schedule until cleared.
    pub fn set_demand_override(&mut self, demand: Option<f64>) {
        self.demand_override = demand;
    }

    pub fn demand(&self) -> f64 {
        self.demand_override.unwrap_or_else(|| self.cfg.demand_schedule.at(self.epoch))
    }

    fn fee_of(&self, node: NodeId) -> (f64, f64) {
        if self.is_hub(node) {
            (self.hub_fees[node.index()], self.hub_policies[node.index()].fee_rate)
        } else {
            (self.cfg.user_fee_base, self.cfg.user_fee_rate)
        }
    }

    fn reprice(&mut self) {
        for h in 0..self.cfg.initial_hub_count {
            self.hub_fees[h] = match self.fixed_fees[h] {
                Some(f) => f,
                None => inverse_liquidity_fee(&self.hub_policies[h], self.graph.outbound_liquidity(NodeId(h as u32))),
            };
        }
        let ids: Vec<ChannelId> = self.graph.channels().map(|(id, _)| id).collect();
        for id in ids {
            let c = self.graph.channel(id).expect("listed");
            let (ab, ba) = (self.fee_of(c.endpoint_a), self.fee_of(c.endpoint_b));
            let c = self.graph.channel_mut(id).expect("listed");
            c.set_fees(Direction::AtoB, ab.0, ab.1);
            c.set_fees(Direction::BtoA, ba.0, ba.1);
        }
    }

    fn draw_pair(&mut self) -> (NodeId, NodeId) {
        let users = self.cfg.user_count;
        let offset = self.cfg.initial_hub_count as u32;
        let rng = &mut self.demand_rng;
        let (src, dst) = match self.cfg.flow {
            FlowPattern::Directed { payer_fraction, bias } if rng.random::<f64>() < bias => {
                let payers = ((payer_fraction * users as f64).ceil() as usize).clamp(1, users - 1);
                (rng.random_range(0..payers), rng.random_range(payers..users))
            }
            _ => {
                let src = rng.random_range(0..users);
                let mut dst = rng.random_range(0..users - 1);
                if dst >= src {
                    dst += 1;
                }
                (src, dst)
            }
        };
        (NodeId(offset + src as u32), NodeId(offset + dst as u32))
    }

    fn quote(&self, src: NodeId, dst: NodeId, amount: f64) -> Option<(crate::routing::Path, f64)> {
        let path = best_path_in_view(&self.graph, src, dst, amount, self.cfg.margin, self.cfg.quote_view).ok()??;
        let mut cost = path_cost(&self.graph, &path, amount).ok()?;
        let risk = self.user_policies[src.index() - self.cfg.initial_hub_count].risk_weight;
        if risk > 0.0 {
            let s = success_probability(&self.graph, &path, &self.cfg.success_model).ok()?;
            cost += risk * (1.0 - s) * amount;
        }
        Some((path, cost))
    }

    /// Advances one epoch and returns its metrics.
    pub fn step(&mut self) -> Result<MetricsFrame> {
        self.graph.epoch = self.epoch;
        let start_capacity = self.graph.total_capacity();
        let mut audit = CapacityAudit { epoch: self.epoch, start: start_capacity, ..CapacityAudit::default() };
        let mut frame = MetricsFrame { epoch: self.epoch, ..MetricsFrame::default() };

        // (1) pricing
        self.reprice();

        // (2) demand and transactions
        let demand = self.demand();
        let onchain_fee = base_fee(demand, &self.cfg.base)?;
        frame.demand = demand;
        frame.onchain_fee = onchain_fee;
        let tx_count = if self.cfg.user_count < 2 {
            0
        } else {
            stochastic_round(demand * self.cfg.txs_per_demand, &mut self.demand_rng).min(self.cfg.max_txs_per_epoch)
        };
        let mut txs = Vec::with_capacity(tx_count);
        for _ in 0..tx_count {
            let (src, dst) = self.draw_pair();
            let amount = self.cfg.amount_distribution.sample(&mut self.demand_rng);
            let valuation = self.cfg.valuation_distribution.sample(&mut self.demand_rng);
            txs.push((src, dst, amount, valuation));
        }

        // (3)-(4) venue choice, hazard, execution
        let revenue_before: Vec<f64> =
            (0..self.cfg.initial_hub_count).map(|h| self.graph.fee_revenue(NodeId(h as u32))).collect();
        let mut fees_paid = 0.0;
        let mut records = Vec::with_capacity(tx_count);
        for (src, dst, amount, valuation) in txs {
            let quote = self.quote(src, dst, amount);
            let best_cost = quote.as_ref().map_or(onchain_fee, |q| q.1.min(onchain_fee));
            records.push(TxRecord { src, dst, amount, best_cost });
            match user_choose_venue(valuation, quote, onchain_fee) {
                VenueDecision::Lightning(path) => {
                    frame.ln_attempts += 1;
                    if self.cfg.hazard_enabled {
                        let s = success_probability(&self.graph, &path, &self.cfg.success_model)?;
                        if self.hazard_rng.random::<f64>() >= s {
                            frame.ln_route_failures += 1;
                            continue;
                        }
                    }
                    match self.graph.execute_payment(&path, amount, self.cfg.margin) {
                        Ok(receipt) => {
                            frame.ln_count += 1;
                            fees_paid += receipt.total_fee;
                            let nodes = path.validate(&self.graph)?;
                            let hubs = self.cfg.initial_hub_count;
                            for hub in nodes[1..nodes.len() - 1].iter().filter(|n| n.index() < hubs) {
                                self.ledgers[hub.index()].routed_count += 1;
                            }
                        }
                        Err(Error::AtomicityFailure { .. }) => frame.ln_route_failures += 1,
                        Err(e) => return Err(e),
                    }
                }
                VenueDecision::OnChain => {
                    frame.onchain_count += 1;
                    self.graph.onchain_fee_paid += onchain_fee;
                }
                VenueDecision::Abstain => frame.abstentions += 1,
            }
        }
        if frame.ln_count > 0 {
            frame.ln_mean_fee = fees_paid / frame.ln_count as f64;
        }
        for (h, before) in revenue_before.iter().enumerate() {
            let now = self.graph.fee_revenue(NodeId(h as u32));
            self.ledgers[h].fee_revenue += now - before;
        }
        self.history.push_back(records);
        while self.history.len() as u64 > self.cfg.attach.window {
            self.history.pop_front();
        }

        // (5) attachment
        if self.cfg.attach.enabled && self.cfg.initial_hub_count > 0 {
            let opened = self.attach(onchain_fee);
            frame.opens = opened.len() as u64;
            audit.opened = opened.iter().sum();
        }

        // (6) abandonment
        if self.cfg.abandon.enabled {
            let closed = self.abandon(onchain_fee)?;
            frame.closes = closed.len() as u64;
            audit.closed = closed.iter().sum();
        }
        self.record_earned();

        // (7) rebalancing
        if self.cfg.rebalance.enabled {
            self.rebalance()?;
        }

        for h in 0..self.cfg.initial_hub_count {
            let out = self.graph.outbound_liquidity(NodeId(h as u32));
            self.ledgers[h].lock_costs += self.hub_policies[h].lock_cost_rate * out;
        }

        // (8) metrics
        let outbound = self.graph.outbound_by_node();
        let total: f64 = outbound.iter().sum();
        let shares: Vec<f64> =
            if total > 0.0 { outbound.iter().map(|l| l / total).collect() } else { vec![0.0; outbound.len()] };
        frame.top1_liquidity_share = topk_of(&shares, 1);
        frame.topk_liquidity_share = topk_of(&shares, self.cfg.topk());
        frame.gini_liquidity = gini(&outbound).unwrap_or(0.0);
        frame.channel_count = self.graph.channel_count() as u64;
        self.shares.push(shares);

        audit.end = self.graph.total_capacity();
        self.audits.push(audit);
        self.epoch += 1;
        Ok(frame)
    }

    /// Savings a user would see per epoch from a channel to `hub`.
    fn estimated_saving(&self, user: NodeId, hub: NodeId) -> f64 {
        let mut total = 0.0;
        for rec in self.history.iter().flatten().filter(|r| r.src == user) {
            let first_hop = self.cfg.user_fee_base + self.cfg.user_fee_rate * rec.amount;
            let via = if rec.dst == hub {
                Some(first_hop)
            } else {
                best_path_in_view(&self.graph, hub, rec.dst, rec.amount, self.cfg.margin, self.cfg.quote_view)
                    .ok()
                    .flatten()
                    .and_then(|p| path_cost(&self.graph, &p, rec.amount).ok())
                    .map(|c| c + first_hop)
            };
            if let Some(cost) = via {
                total += (rec.best_cost - cost).max(0.0);
            }
        }
        total / self.history.len().max(1) as f64
    }

    fn attach(&mut self, onchain_fee: f64) -> Vec<f64> {
        let hubs = self.cfg.initial_hub_count;
        let sampled: Vec<usize> = (0..self.cfg.user_count)
            .filter(|_| self.attach_rng.random::<f64>() < self.cfg.attach.sample_fraction)
            .collect();
        let mut opened = Vec::new();
        for u in sampled {
            let user = NodeId((hubs + u) as u32);
            let mut best: Option<(f64, NodeId)> = None;
            for h in 0..hubs {
                let hub = NodeId(h as u32);
                if self.graph.channel_between(user, hub).is_some() {
                    continue;
                }
                let saving = self.estimated_saving(user, hub);
                if best.is_none_or(|(s, _)| saving > s) {
                    best = Some((saving, hub));
                }
            }
            let Some((saving, hub)) = best else { continue };
            let policy = &self.user_policies[u];
            if !attach_decision(saving, self.cfg.attach.horizon, policy.discount_factor, onchain_fee) {
                continue;
            }
            let a = &self.cfg.attach;
            let (fund_user, fund_hub) = (a.user_funding, a.hub_match);
            let (ua, ub) = (self.fee_of(user), self.fee_of(hub));
            let id = self.graph.open_channel(user, hub, fund_user, fund_hub, onchain_fee).expect("checked pair");
            let c = self.graph.channel_mut(id).expect("just opened");
            let dir = c.direction_from(user).expect("endpoint");
            c.set_fees(dir, ua.0, ua.1);
            c.set_fees(dir.reverse(), ub.0, ub.1);
            opened.push(fund_user + fund_hub);
            log::debug!("epoch {}: user {user} attached to hub {hub} (saving {saving})", self.epoch);
        }
        opened
    }

    fn hub_side(&self, id: ChannelId) -> Option<(NodeId, Direction)> {
        let c = self.graph.channel(id)?;
        if self.is_hub(c.endpoint_a) {
            Some((c.endpoint_a, Direction::AtoB))
        } else if self.is_hub(c.endpoint_b) {
            Some((c.endpoint_b, Direction::BtoA))
        } else {
            None
        }
    }

    fn abandon(&mut self, onchain_fee: f64) -> Result<Vec<f64>> {
        let window = self.cfg.abandon.window;
        let past = if self.earned_history.len() as u64 >= window {
            self.earned_history.get(self.earned_history.len() - window as usize)
        } else {
            None
        };
        let mut closing = Vec::new();
        for (id, c) in self.graph.channels() {
            let Some((hub, dir)) = self.hub_side(id) else { continue };
            if self.epoch.saturating_sub(c.opened_epoch) < self.cfg.abandon.min_age {
                continue;
            }
            let Some(past) = past else { continue };
            let revenue = (c.earned(dir) - past.get(&id).copied().unwrap_or(0.0)) / window as f64;
            let policy = &self.hub_policies[hub.index()];
            let held = c.liquidity(dir);
            let reserve_cost = policy.reserve_fixed + policy.lock_cost_rate * held;
            if abandon_decision(revenue, reserve_cost) && enforcement_feasible(held, onchain_fee) {
                closing.push((id, c.capacity));
            }
        }
        let mut closed = Vec::with_capacity(closing.len());
        for (id, capacity) in closing {
            self.graph.close_channel(id, onchain_fee)?;
            closed.push(capacity);
            log::debug!("epoch {}: closed channel {id}", self.epoch);
        }
        Ok(closed)
    }

    fn record_earned(&mut self) {
        let snapshot =
            self.graph.channels().filter_map(|(id, c)| self.hub_side(id).map(|(_, dir)| (id, c.earned(dir)))).collect();
        self.earned_history.push_back(snapshot);
        while self.earned_history.len() as u64 > self.cfg.abandon.window {
            self.earned_history.pop_front();
        }
    }

    fn rebalance(&mut self) -> Result<()> {
        let capacity = self.graph.total_capacity();
        if capacity <= 0.0 {
            return Ok(());
        }
        let plan = {
            let problem = RebalanceProblem::balanced(&self.graph, self.cfg.rebalance.quantum)?;
            if deviation(&self.graph, &problem.target_ab) <= self.cfg.rebalance.trigger * capacity {
                return Ok(());
            }
            greedy_rebalance(&problem, self.cfg.rebalance.max_cycles)
        };
        apply_plan(&mut self.graph, &plan)?;
        for cycle in &plan.cycles {
            for node in cycle.nodes.iter().filter(|n| n.index() < self.hub_policies.len()) {
                let rate = self.hub_policies[node.index()].rebalance_cost_rate;
                self.ledgers[node.index()].reb_costs += rate * cycle.amount;
            }
        }
        Ok(())
    }

    /// Adds `per_direction` to both balances of every open channel.
    pub fn inject_liquidity(&mut self, per_direction: f64) -> Result<()> {
        let ids: Vec<ChannelId> = self.graph.channels().map(|(id, _)| id).collect();
        for id in ids {
            self.graph.splice_in(id, per_direction, per_direction)?;
        }
        Ok(())
    }

    /// Runs the remaining epochs of the configured horizon.
    pub fn run_to_end(&mut self) -> Result<Vec<MetricsFrame>> {
        let mut frames = Vec::with_capacity(self.cfg.epochs.saturating_sub(self.epoch) as usize);
        while self.epoch < self.cfg.epochs {
            frames.push(self.step()?);
        }
        Ok(frames)
    }

    /// Runs `n` further epochs regardless of the configured horizon.
    pub fn run_epochs(&mut self, n: u64) -> Result<Vec<MetricsFrame>> {
        (0..n).map(|_| self.step()).collect()
    }
}

pub fn run(cfg: &SimConfig) -> Result<Vec<MetricsFrame>> {
    Simulation::new(cfg.clone())?.run_to_end()
}

/// A finished run together with its end state.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub frames: Vec<MetricsFrame>,
    pub audits: Vec<CapacityAudit>,
    pub shares: Vec<Vec<f64>>,
    pub graph: OverlayGraph,
    pub ledgers: Vec<HubLedger>,
}

pub fn run_full(cfg: &SimConfig) -> Result<RunOutput> {
    let mut sim = Simulation::new(cfg.clone())?;
    let frames = sim.run_to_end()?;
    Ok(RunOutput {
        frames,
        audits: sim.audits.clone(),
        shares: sim.shares.clone(),
        graph: sim.graph.clone(),
        ledgers: sim.ledgers.clone(),
    })
}

/// Runs every config on the chosen executor, keeping input order.
pub fn run_many(cfgs: &[SimConfig], exec: Execution) -> Vec<Result<RunOutput>> {
    par::map(exec, cfgs, run_full)
}

/// Accounting identities every frame must satisfy.
pub fn check_frame(frame: &MetricsFrame, sampled: Option<u64>) -> Result<()> {
    if frame.ln_attempts != frame.ln_count + frame.ln_route_failures {
        return Err(Error::Config(format!("epoch {}: attempts != successes + failures", frame.epoch)));
    }
    if let Some(n) = sampled {
        if n != frame.ln_attempts + frame.onchain_count + frame.abstentions {
            return Err(Error::Config(format!("epoch {}: decisions do not partition transactions", frame.epoch)));
        }
    }
    for s in [frame.top1_liquidity_share, frame.topk_liquidity_share] {
        if !(-1e-12..=1.0 + 1e-12).contains(&s) {
            return Err(Error::Config(format!("epoch {}: share {s} outside [0, 1]", frame.epoch)));
        }
    }
    Ok(())
}
