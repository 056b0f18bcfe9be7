//! Liquidity-aware path selection over the channel graph.
//!
//! Paths are ranked by the additive selection cost `Σ (α + β·x)` and ties are
//! broken by hop count, then by the lexicographic order of the node sequence.
//! Feasibility checks use the exact backward-accumulated forward amounts from
//! [`OverlayGraph::forward_amounts`].

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use crate::error::{Error, Result};
use crate::overlay::{ChannelState, Direction, Hop, NodeId, OverlayGraph};

/// Node cap for exhaustive path enumeration.
pub const ORACLE_NODE_CAP: usize = 10;

/// Upper bound on partial paths popped by the fallback enumeration in
/// [`best_path`]. Never reached on graphs within the oracle cap.
pub const DEFAULT_MAX_EXPANSIONS: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Path {
    pub source: NodeId,
    pub dest: NodeId,
    pub hops: Vec<Hop>,
}

impl Path {
    pub fn new(source: NodeId, dest: NodeId, hops: Vec<Hop>) -> Self {
        Self { source, dest, hops }
    }

    pub fn empty(node: NodeId) -> Self {
        Self::new(node, node, Vec::new())
    }

    pub fn len(&self) -> usize {
        self.hops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hops.is_empty()
    }

    /// Checks that the hops chain from source to dest without revisiting a
    /// node, returning the visited node sequence.
    pub fn validate(&self, g: &OverlayGraph) -> Result<Vec<NodeId>> {
        if !g.contains(self.source) {
            return Err(Error::UnknownNode(self.source));
        }
        if !g.contains(self.dest) {
            return Err(Error::UnknownNode(self.dest));
        }
        if self.hops.is_empty() {
            if self.source != self.dest {
                return Err(Error::InvalidPath(format!("empty path cannot connect {} to {}", self.source, self.dest)));
            }
            return Ok(vec![self.source]);
        }
        let mut nodes = vec![self.source];
        for hop in &self.hops {
            let c = g.hop_state(*hop)?;
            let at = *nodes.last().unwrap();
            if c.source(hop.dir) != at {
                return Err(Error::InvalidPath(format!("hop {} does not start at {at}", hop.channel)));
            }
            let next = c.target(hop.dir);
            if nodes.contains(&next) {
                return Err(Error::InvalidPath(format!("node {next} repeats")));
            }
            nodes.push(next);
        }
        if *nodes.last().unwrap() != self.dest {
            return Err(Error::InvalidPath(format!("path ends away from {}", self.dest)));
        }
        Ok(nodes)
    }
}

/// Decay constant `k` of the per-hop success model `1 − e^{−kℓ}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuccessModel {
    pub decay_rate: f64,
}

impl SuccessModel {
    pub fn new(decay_rate: f64) -> Result<Self> {
        if !(decay_rate > 0.0 && decay_rate.is_finite()) {
            return Err(Error::Config(format!("decay_rate must be positive, got {decay_rate}")));
        }
        Ok(Self { decay_rate })
    }

    /// `S(ℓ) = 1 − e^{−kℓ}`
    pub fn hop_success(&self, liquidity: f64) -> f64 {
        -(-self.decay_rate * liquidity.max(0.0)).exp_m1()
    }
}

impl Default for SuccessModel {
    fn default() -> Self {
        Self { decay_rate: 1.0 }
    }
}

/// Selection cost `Σ (α + β·amount)`, summed from the source side.
pub fn path_cost(g: &OverlayGraph, path: &Path, amount: f64) -> Result<f64> {
    let mut cost = 0.0;
    for hop in &path.hops {
        cost += g.hop_state(*hop)?.hop_fee(hop.dir, amount);
    }
    Ok(cost)
}

/// Whether every hop holds its forward amount plus `margin`.
pub fn feasible(g: &OverlayGraph, path: &Path, amount: f64, margin: f64) -> Result<bool> {
    feasible_with(g, path, amount, margin, liquidity_view)
}

fn feasible_with(
    g: &OverlayGraph,
    path: &Path,
    amount: f64,
    margin: f64,
    avail: impl Fn(&ChannelState, Direction) -> f64,
) -> Result<bool> {
    let forwarded = g.forward_amounts(&path.hops, amount)?;
    for (hop, need) in path.hops.iter().zip(forwarded) {
        if avail(g.hop_state(*hop)?, hop.dir) < need + margin {
            return Ok(false);
        }
    }
    Ok(true)
}

fn liquidity_view(c: &ChannelState, dir: Direction) -> f64 {
    c.liquidity(dir)
}

fn capacity_view(c: &ChannelState, _: Direction) -> f64 {
    c.capacity
}

fn unlimited_view(_: &ChannelState, _: Direction) -> f64 {
    f64::INFINITY
}

/// What a path search may assume about channel balances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RouteView {
    /// True directional balances.
    #[default]
    Liquidity,
    /// Publicly known channel capacities only.
    Capacity,
    /// Ignore balances entirely.
    Unlimited,
}

impl RouteView {
    fn avail(self) -> fn(&ChannelState, Direction) -> f64 {
        match self {
            RouteView::Liquidity => liquidity_view,
            RouteView::Capacity => capacity_view,
            RouteView::Unlimited => unlimited_view,
        }
    }
}

/// Total order used to rank candidate paths.
#[derive(Debug, Clone)]
struct Rank {
    cost: f64,
    nodes: Vec<NodeId>,
}

impl Rank {
    fn cmp_key(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then(self.nodes.len().cmp(&other.nodes.len()))
            .then_with(|| self.nodes.cmp(&other.nodes))
    }
}

#[derive(Debug, Clone)]
struct Partial {
    rank: Rank,
    hops: Vec<Hop>,
}

impl PartialEq for Partial {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Partial {}

impl PartialOrd for Partial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Partial {
    // Reversed so that BinaryHeap pops the smallest rank.
    fn cmp(&self, other: &Self) -> Ordering {
        other.rank.cmp_key(&self.rank)
    }
}

fn check_endpoints(g: &OverlayGraph, src: NodeId, dst: NodeId) -> Result<()> {
    for n in [src, dst] {
        if !g.contains(n) {
            return Err(Error::UnknownNode(n));
        }
    }
    Ok(())
}

/// Minimum-cost feasible path, or `None` when no feasible path exists.
pub fn best_path(g: &OverlayGraph, src: NodeId, dst: NodeId, amount: f64, margin: f64) -> Result<Option<Path>> {
    best_path_in_view(g, src, dst, amount, margin, RouteView::Liquidity)
}

pub fn best_path_in_view(
    g: &OverlayGraph,
    src: NodeId,
    dst: NodeId,
    amount: f64,
    margin: f64,
    view: RouteView,
) -> Result<Option<Path>> {
    check_endpoints(g, src, dst)?;
    if src == dst {
        return Ok(Some(Path::empty(src)));
    }
    let avail = view.avail();
    // Every hop carries at least `amount`, so thinner hops can never be used.
    let usable = |c: &ChannelState, dir: Direction| avail(c, dir) >= amount + margin;
    if !reachable(g, src, dst, &usable) {
        return Ok(None);
    }
    if let Some(candidate) = label_setting(g, src, dst, amount, &usable) {
        if feasible_with(g, &candidate, amount, margin, avail)? {
            return Ok(Some(candidate));
        }
    }
    ranked_enumeration(g, src, dst, amount, margin, &usable, avail, DEFAULT_MAX_EXPANSIONS)
}

fn reachable(g: &OverlayGraph, src: NodeId, dst: NodeId, usable: &impl Fn(&ChannelState, Direction) -> bool) -> bool {
    let mut seen = vec![false; g.node_count()];
    let mut queue = VecDeque::from([src]);
    seen[src.index()] = true;
    while let Some(at) = queue.pop_front() {
        if at == dst {
            return true;
        }
        for (hop, next) in g.out_hops(at) {
            if !seen[next.index()] && usable(g.channel(hop.channel).unwrap(), hop.dir) {
                seen[next.index()] = true;
                queue.push_back(next);
            }
        }
    }
    false
}

/// Dijkstra over the per-hop selection cost with the full tie-break order.
fn label_setting(
    g: &OverlayGraph,
    src: NodeId,
    dst: NodeId,
    amount: f64,
    usable: &impl Fn(&ChannelState, Direction) -> bool,
) -> Option<Path> {
    let mut best: Vec<Option<Rank>> = vec![None; g.node_count()];
    let mut settled = vec![false; g.node_count()];
    let mut heap = BinaryHeap::new();
    let start = Rank { cost: 0.0, nodes: vec![src] };
    best[src.index()] = Some(start.clone());
    heap.push(Partial { rank: start, hops: Vec::new() });

    while let Some(Partial { rank, hops }) = heap.pop() {
        let at = *rank.nodes.last().unwrap();
        if settled[at.index()] {
            continue;
        }
        settled[at.index()] = true;
        if at == dst {
            return Some(Path::new(src, dst, hops));
        }
        for (hop, next) in g.out_hops(at) {
            if settled[next.index()] {
                continue;
            }
            let c = g.channel(hop.channel).unwrap();
            if !usable(c, hop.dir) {
                continue;
            }
            let mut nodes = rank.nodes.clone();
            nodes.push(next);
            let cand = Rank { cost: rank.cost + c.hop_fee(hop.dir, amount), nodes };
            let better = match &best[next.index()] {
                None => true,
                Some(cur) => cand.cmp_key(cur) == Ordering::Less,
            };
            if better {
                best[next.index()] = Some(cand.clone());
                let mut h = hops.clone();
                h.push(hop);
                heap.push(Partial { rank: cand, hops: h });
            }
        }
    }
    None
}

/// Pops simple paths in rank order until one passes the full feasibility
/// check. Extensions never decrease rank, so the first feasible complete path
/// popped is optimal.
#[allow(clippy::too_many_arguments)]
fn ranked_enumeration(
    g: &OverlayGraph,
    src: NodeId,
    dst: NodeId,
    amount: f64,
    margin: f64,
    usable: &impl Fn(&ChannelState, Direction) -> bool,
    avail: fn(&ChannelState, Direction) -> f64,
    max_expansions: usize,
) -> Result<Option<Path>> {
    let mut heap = BinaryHeap::new();
    heap.push(Partial { rank: Rank { cost: 0.0, nodes: vec![src] }, hops: Vec::new() });
    let mut pops = 0usize;
    while let Some(Partial { rank, hops }) = heap.pop() {
        pops += 1;
        if pops > max_expansions {
            log::debug!("route search {src}->{dst} hit the expansion cap");
            return Ok(None);
        }
        let at = *rank.nodes.last().unwrap();
        if at == dst {
            let path = Path::new(src, dst, hops);
            if feasible_with(g, &path, amount, margin, avail)? {
                return Ok(Some(path));
            }
            continue;
        }
        for (hop, next) in g.out_hops(at) {
            if rank.nodes.contains(&next) {
                continue;
            }
            let c = g.channel(hop.channel).unwrap();
            if !usable(c, hop.dir) {
                continue;
            }
            let mut nodes = rank.nodes.clone();
            nodes.push(next);
            let mut h = hops.clone();
            h.push(hop);
            heap.push(Partial { rank: Rank { cost: rank.cost + c.hop_fee(hop.dir, amount), nodes }, hops: h });
        }
    }
    Ok(None)
}

/// Exhaustive reference for [`best_path`]: enumerates every simple path.
pub fn brute_force_best_path(
    g: &OverlayGraph,
    src: NodeId,
    dst: NodeId,
    amount: f64,
    margin: f64,
) -> Result<Option<Path>> {
    if g.node_count() > ORACLE_NODE_CAP {
        return Err(Error::AboveOracleCap { nodes: g.node_count(), cap: ORACLE_NODE_CAP });
    }
    check_endpoints(g, src, dst)?;
    if src == dst {
        return Ok(Some(Path::empty(src)));
    }
    let mut best: Option<(Rank, Path)> = None;
    let mut nodes = vec![src];
    let mut hops = Vec::new();
    enumerate(g, dst, &mut nodes, &mut hops, &mut |nodes, hops| {
        let path = Path::new(src, dst, hops.to_vec());
        if !feasible(g, &path, amount, margin).unwrap_or(false) {
            return;
        }
        let rank = Rank { cost: path_cost(g, &path, amount).unwrap(), nodes: nodes.to_vec() };
        let replace = match &best {
            None => true,
            Some((cur, _)) => rank.cmp_key(cur) == Ordering::Less,
        };
        if replace {
            best = Some((rank, path));
        }
    });
    Ok(best.map(|(_, p)| p))
}

fn enumerate(
    g: &OverlayGraph,
    dst: NodeId,
    nodes: &mut Vec<NodeId>,
    hops: &mut Vec<Hop>,
    visit: &mut impl FnMut(&[NodeId], &[Hop]),
) {
    let at = *nodes.last().unwrap();
    if at == dst {
        visit(nodes, hops);
        return;
    }
    for (hop, next) in g.out_hops(at) {
        if nodes.contains(&next) {
            continue;
        }
        nodes.push(next);
        hops.push(hop);
        enumerate(g, dst, nodes, hops, visit);
        nodes.pop();
        hops.pop();
    }
}

/// Extra cost of the best feasible path over the best path with unlimited
/// liquidity. Infinite when only the unconstrained path exists.
pub fn fragmentation_penalty(g: &OverlayGraph, src: NodeId, dst: NodeId, amount: f64, margin: f64) -> Result<f64> {
    let ideal =
        best_path_in_view(g, src, dst, amount, margin, RouteView::Unlimited)?.ok_or(Error::Disconnected(src, dst))?;
    let ideal_cost = path_cost(g, &ideal, amount)?;
    match best_path(g, src, dst, amount, margin)? {
        Some(p) => Ok((path_cost(g, &p, amount)? - ideal_cost).max(0.0)),
        None => Ok(f64::INFINITY),
    }
}

/// `Π (1 − e^{−k·ℓ_i})` over forward liquidities.
pub fn success_probability_of(liquidities: &[f64], model: &SuccessModel) -> f64 {
    liquidities.iter().map(|&l| model.hop_success(l)).product()
}

pub fn success_probability(g: &OverlayGraph, path: &Path, model: &SuccessModel) -> Result<f64> {
    let mut liqs = Vec::with_capacity(path.hops.len());
    for hop in &path.hops {
        liqs.push(g.hop_state(*hop)?.liquidity(hop.dir));
    }
    Ok(success_probability_of(&liqs, model))
}

/// Liquidity at which the success model reaches `epsilon`:
/// `ℓ_crit = −ln(1 − ε) / k`.
pub fn critical_liquidity(model: &SuccessModel, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::OutOfUnitInterval(epsilon));
    }
    Ok(-(-epsilon).ln_1p() / model.decay_rate)
}
