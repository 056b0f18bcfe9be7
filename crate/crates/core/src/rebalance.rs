//! Circular rebalancing toward a target liquidity split.
//!
//! A circular payment moves the same amount around a directed cycle and is the
//! only off-chain move that leaves every channel's capacity unchanged. Two
//! solvers are provided: an exhaustive search for small graphs and a greedy
//! heuristic that scales.

use std::collections::{BTreeMap, VecDeque};

use crate::error::{Error, Result};
use crate::overlay::{ChannelId, Direction, Hop, NodeId, OverlayGraph};

/// Default node cap for [`exact_rebalance`].
pub const EXACT_NODE_CAP: usize = 8;

/// Default bound on circulations examined by [`exact_rebalance`].
pub const EXACT_STATE_BUDGET: u64 = 20_000_000;

#[derive(Debug, Clone)]
pub struct RebalanceProblem<'a> {
    pub graph: &'a OverlayGraph,
    /// Desired `ℓ_ab` per channel; `ℓ_ba` follows from the capacity.
    pub target_ab: BTreeMap<ChannelId, f64>,
    pub flow_quantum: f64,
}

impl<'a> RebalanceProblem<'a> {
    pub fn new(graph: &'a OverlayGraph, target_ab: BTreeMap<ChannelId, f64>, flow_quantum: f64) -> Result<Self> {
        if !(flow_quantum > 0.0 && flow_quantum.is_finite()) {
            return Err(Error::Config(format!("flow_quantum must be positive, got {flow_quantum}")));
        }
        for (id, c) in graph.channels() {
            let t = target_ab.get(&id).ok_or_else(|| Error::Config(format!("no target for channel {id}")))?;
            if !(*t >= 0.0 && *t <= c.capacity) {
                return Err(Error::Config(format!("target {t} outside capacity of channel {id}")));
            }
        }
        Ok(Self { graph, target_ab, flow_quantum })
    }

    /// Target that splits every channel evenly.
    pub fn balanced(graph: &'a OverlayGraph, flow_quantum: f64) -> Result<Self> {
        let target = graph.channels().map(|(id, c)| (id, c.capacity / 2.0)).collect();
        Self::new(graph, target, flow_quantum)
    }

    fn target(&self, id: ChannelId, dir: Direction) -> f64 {
        let t = self.target_ab[&id];
        match dir {
            Direction::AtoB => t,
            Direction::BtoA => self.graph.channel(id).map_or(0.0, |c| c.capacity) - t,
        }
    }
}

/// L1 distance of the graph's directional liquidities from the target.
pub fn deviation(g: &OverlayGraph, target_ab: &BTreeMap<ChannelId, f64>) -> f64 {
    g.channels()
        .map(|(id, c)| {
            let t_ab = target_ab.get(&id).copied().unwrap_or(c.liq_ab);
            let t_ba = c.capacity - t_ab;
            (c.liq_ab - t_ab).abs() + (c.liq_ba - t_ba).abs()
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleFlow {
    /// Cycle nodes in traversal order; the first node is not repeated.
    pub nodes: Vec<NodeId>,
    pub hops: Vec<Hop>,
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RebalancePlan {
    pub cycles: Vec<CycleFlow>,
    /// Deviation after the plan is applied.
    pub deviation: f64,
}

pub const PLAN_CSV_HEADER: &str = "cycle_nodes,amount";

impl RebalancePlan {
    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }

    /// One row per cycle: semicolon-separated node list, then the amount.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{PLAN_CSV_HEADER}\n");
        for c in &self.cycles {
            let nodes: Vec<String> = c.nodes.iter().map(|n| n.to_string()).collect();
            out.push_str(&format!("{},{}\n", nodes.join(";"), c.amount));
        }
        out
    }

    /// Parses rows written by [`RebalancePlan::to_csv`]. Hops are not part of
    /// the text form and come back empty.
    pub fn from_csv(text: &str) -> Result<Vec<(Vec<NodeId>, f64)>> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 {
                if line.trim() != PLAN_CSV_HEADER {
                    return Err(Error::Parse { line: 1, message: format!("expected header {PLAN_CSV_HEADER}") });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let bad = |m: &str| Error::Parse { line: i + 1, message: m.to_string() };
            let (nodes, amount) = line.split_once(',').ok_or_else(|| bad("missing amount column"))?;
            let nodes = nodes
                .split(';')
                .map(|s| s.trim().parse::<u32>().map(NodeId).map_err(|_| bad("bad node id")))
                .collect::<Result<Vec<_>>>()?;
            let amount = amount.trim().parse::<f64>().map_err(|_| bad("bad amount"))?;
            rows.push((nodes, amount));
        }
        Ok(rows)
    }
}

fn push_cycle(g: &mut OverlayGraph, hops: &[Hop], amount: f64) -> Result<()> {
    for hop in hops {
        let c = g.hop_state(*hop)?;
        if c.liquidity(hop.dir) < amount {
            return Err(Error::AtomicityFailure { hop: 0, required: amount, available: c.liquidity(hop.dir) });
        }
    }
    for hop in hops {
        let c = g.channel_mut(hop.channel).expect("checked");
        match hop.dir {
            Direction::AtoB => {
                c.liq_ab -= amount;
                c.liq_ba += amount;
            }
            Direction::BtoA => {
                c.liq_ba -= amount;
                c.liq_ab += amount;
            }
        }
    }
    Ok(())
}

/// Executes each cycle of the plan in order. A cycle that would overdraw a hop
/// fails before touching the graph.
pub fn apply_plan(g: &mut OverlayGraph, plan: &RebalancePlan) -> Result<()> {
    for c in &plan.cycles {
        push_cycle(g, &c.hops, c.amount)?;
    }
    Ok(())
}

/// Exhaustive search over every circulation on the quantum grid.
///
/// Any sequence of circular pushes nets out to a circulation, and every
/// circulation that keeps balances within bounds can be executed as a
/// sequence of cycles, so enumerating circulations covers every plan. They are
/// parameterised by integer multiplicities on the fundamental cycles of a
/// spanning forest.
pub fn exact_rebalance(p: &RebalanceProblem<'_>) -> Result<RebalancePlan> {
    exact_rebalance_with(p, EXACT_NODE_CAP, EXACT_STATE_BUDGET)
}

pub fn exact_rebalance_with(p: &RebalanceProblem<'_>, node_cap: usize, state_budget: u64) -> Result<RebalancePlan> {
    let g = p.graph;
    if g.node_count() > node_cap {
        return Err(Error::AboveOracleCap { nodes: g.node_count(), cap: node_cap });
    }
    let q = p.flow_quantum;
    let channels: Vec<(ChannelId, NodeId, NodeId, f64, f64)> =
        g.channels().map(|(id, c)| (id, c.endpoint_a, c.endpoint_b, c.liq_ab, c.liq_ba)).collect();
    let index: BTreeMap<ChannelId, usize> = channels.iter().enumerate().map(|(i, c)| (c.0, i)).collect();

    // Spanning forest by BFS in node and channel id order.
    let mut parent: Vec<Option<(NodeId, usize)>> = vec![None; g.node_count()];
    let mut depth = vec![0usize; g.node_count()];
    let mut seen = vec![false; g.node_count()];
    let mut in_tree = vec![false; channels.len()];
    for root in g.nodes() {
        if seen[root.index()] {
            continue;
        }
        seen[root.index()] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(at) = queue.pop_front() {
            for (hop, next) in g.out_hops(at) {
                if !seen[next.index()] {
                    seen[next.index()] = true;
                    let e = index[&hop.channel];
                    in_tree[e] = true;
                    parent[next.index()] = Some((at, e));
                    depth[next.index()] = depth[at.index()] + 1;
                    queue.push_back(next);
                }
            }
        }
    }

    // Each non-tree channel a→b closes the cycle a→b→(tree path)→a.
    let chords: Vec<usize> = (0..channels.len()).filter(|&e| !in_tree[e]).collect();
    let mut coef: Vec<Vec<i64>> = vec![vec![0; chords.len()]; channels.len()];
    for (j, &e) in chords.iter().enumerate() {
        let (_, a, b, _, _) = channels[e];
        coef[e][j] = 1;
        for (from, _, edge) in tree_path(b, a, &parent, &depth) {
            let ea = channels[edge].1;
            coef[edge][j] += if from == ea { 1 } else { -1 };
        }
    }

    // Bounds on the net quanta moved a→b per channel.
    let eps = 1e-9;
    let bounds: Vec<(i64, i64)> = channels
        .iter()
        .map(|&(_, _, _, ab, ba)| (-((ba / q + eps).floor() as i64), (ab / q + eps).floor() as i64))
        .collect();
    let ranges: Vec<(i64, i64)> = chords.iter().map(|&e| bounds[e]).collect();
    let states =
        ranges.iter().try_fold(1u64, |acc, (lo, hi)| acc.checked_mul((hi - lo + 1) as u64)).unwrap_or(u64::MAX);
    if states > state_budget {
        return Err(Error::SearchBudget(state_budget));
    }

    let targets: Vec<(f64, f64)> =
        channels.iter().map(|&(id, ..)| (p.target(id, Direction::AtoB), p.target(id, Direction::BtoA))).collect();
    let evaluate = |moves: &[i64]| -> f64 {
        channels
            .iter()
            .zip(moves)
            .zip(&targets)
            .map(|((&(_, _, _, ab, ba), &k), &(t_ab, t_ba))| {
                let d = k as f64 * q;
                ((ab - d) - t_ab).abs() + ((ba + d) - t_ba).abs()
            })
            .sum()
    };

    let mut best_moves = vec![0i64; channels.len()];
    let mut best = (evaluate(&best_moves), 0i64);
    let mut ks: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    let mut moves = vec![0i64; channels.len()];
    'odometer: loop {
        let mut ok = true;
        for (e, m) in moves.iter_mut().enumerate() {
            *m = coef[e].iter().zip(&ks).map(|(c, k)| c * k).sum();
            if *m < bounds[e].0 || *m > bounds[e].1 {
                ok = false;
                break;
            }
        }
        if ok {
            let dev = evaluate(&moves);
            let volume: i64 = moves.iter().map(|m| m.abs()).sum();
            if dev < best.0 || (dev == best.0 && volume < best.1) {
                best = (dev, volume);
                best_moves.clone_from(&moves);
            }
        }
        for (j, k) in ks.iter_mut().enumerate() {
            if *k < ranges[j].1 {
                *k += 1;
                continue 'odometer;
            }
            *k = ranges[j].0;
        }
        break;
    }

    let flows: Vec<(Hop, i64)> = channels
        .iter()
        .zip(&best_moves)
        .filter(|(_, &m)| m != 0)
        .map(|(&(id, ..), &m)| {
            let dir = if m > 0 { Direction::AtoB } else { Direction::BtoA };
            (Hop { channel: id, dir }, m.abs())
        })
        .collect();
    let cycles = decompose(g, flows, q);
    Ok(RebalancePlan { cycles, deviation: best.0 })
}

/// Tree path from `from` to `to` as `(node, next node, channel index)` steps.
fn tree_path(
    from: NodeId,
    to: NodeId,
    parent: &[Option<(NodeId, usize)>],
    depth: &[usize],
) -> Vec<(NodeId, NodeId, usize)> {
    let (mut u, mut v) = (from, to);
    let mut up = Vec::new();
    let mut down = Vec::new();
    while u != v {
        if depth[u.index()] >= depth[v.index()] {
            let (pu, e) = parent[u.index()].expect("same tree");
            up.push((u, pu, e));
            u = pu;
        } else {
            let (pv, e) = parent[v.index()].expect("same tree");
            down.push((pv, v, e));
            v = pv;
        }
    }
    up.extend(down.into_iter().rev());
    up
}

/// Splits a circulation (in quanta) into simple directed cycles.
fn decompose(g: &OverlayGraph, flows: Vec<(Hop, i64)>, q: f64) -> Vec<CycleFlow> {
    let mut remaining: BTreeMap<Hop, i64> = flows.into_iter().collect();
    let mut cycles = Vec::new();
    while let Some((&first, _)) = remaining.iter().next() {
        let c = g.channel(first.channel).expect("flow on live channel");
        let mut nodes = vec![c.source(first.dir)];
        let mut hops: Vec<Hop> = Vec::new();
        let mut next_hop = first;
        let (start, cycle_hops) = loop {
            let c = g.channel(next_hop.channel).unwrap();
            hops.push(next_hop);
            let at = c.target(next_hop.dir);
            if let Some(pos) = nodes.iter().position(|&n| n == at) {
                break (pos, hops[pos..].to_vec());
            }
            nodes.push(at);
            next_hop = *remaining
                .keys()
                .find(|h| g.channel(h.channel).unwrap().source(h.dir) == at)
                .expect("circulation conserves flow at every node");
        };
        let amount = cycle_hops.iter().map(|h| remaining[h]).min().unwrap();
        for h in &cycle_hops {
            let left = remaining.get_mut(h).unwrap();
            *left -= amount;
            if *left == 0 {
                remaining.remove(h);
            }
        }
        cycles.push(CycleFlow { nodes: nodes[start..].to_vec(), hops: cycle_hops, amount: amount as f64 * q });
    }
    cycles
}

/// Greedy heuristic: take the directed channel with the largest surplus over
/// its target, close the fewest-hop cycle through it, and push the quantum
/// multiple that lowers deviation most. Stops after `max_cycles` pushes or
/// when no surplus channel admits an improving push.
pub fn greedy_rebalance(p: &RebalanceProblem<'_>, max_cycles: usize) -> RebalancePlan {
    let q = p.flow_quantum;
    let mut work = p.graph.clone();
    let mut current = deviation(&work, &p.target_ab);
    let mut cycles = Vec::new();

    while cycles.len() < max_cycles {
        let mut surplus: Vec<(f64, Hop)> = Vec::new();
        for (id, c) in work.channels() {
            for dir in [Direction::AtoB, Direction::BtoA] {
                let s = c.liquidity(dir) - p.target(id, dir);
                if s > 0.0 && c.liquidity(dir) >= q {
                    surplus.push((s, Hop { channel: id, dir }));
                }
            }
        }
        surplus.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

        let mut pushed = false;
        for &(_, start) in &surplus {
            let Some(flow) = best_push(&work, p, start) else {
                continue;
            };
            push_cycle(&mut work, &flow.hops, flow.amount).expect("bottleneck respected");
            current = deviation(&work, &p.target_ab);
            cycles.push(flow);
            pushed = true;
            break;
        }
        if !pushed {
            break;
        }
    }
    RebalancePlan { cycles, deviation: current }
}

fn best_push(work: &OverlayGraph, p: &RebalanceProblem<'_>, start: Hop) -> Option<CycleFlow> {
    let q = p.flow_quantum;
    let c = work.channel(start.channel)?;
    let (u, v) = (c.source(start.dir), c.target(start.dir));
    let back = shortest_return(work, v, u, start.channel, q)?;
    let mut hops = vec![start];
    hops.extend(back.iter().map(|(h, _)| *h));
    let mut nodes = vec![u, v];
    nodes.extend(back.iter().map(|(_, n)| *n).filter(|&n| n != u));

    let bottleneck =
        hops.iter().map(|h| work.channel(h.channel).unwrap().liquidity(h.dir)).fold(f64::INFINITY, f64::min);
    let max_k = (bottleneck / q + 1e-9).floor() as i64;
    let mut best: Option<(f64, i64)> = None;
    for k in 1..=max_k {
        let amount = k as f64 * q;
        let delta: f64 = hops
            .iter()
            .map(|h| {
                let ch = work.channel(h.channel).unwrap();
                let (fwd, rev) = (ch.liquidity(h.dir), ch.liquidity(h.dir.reverse()));
                let (t_fwd, t_rev) = (p.target(h.channel, h.dir), p.target(h.channel, h.dir.reverse()));
                ((fwd - amount) - t_fwd).abs() + ((rev + amount) - t_rev).abs()
                    - (fwd - t_fwd).abs()
                    - (rev - t_rev).abs()
            })
            .sum();
        if best.is_none_or(|(d, _)| delta < d) {
            best = Some((delta, k));
        }
    }
    let (delta, k) = best?;
    if delta >= -1e-12 {
        return None;
    }
    Some(CycleFlow { nodes, hops, amount: k as f64 * q })
}

/// Fewest-hop path `from → to` avoiding `skip`, using hops that can carry at
/// least one quantum. Ties go to the lexicographically smallest node sequence.
fn shortest_return(g: &OverlayGraph, from: NodeId, to: NodeId, skip: ChannelId, q: f64) -> Option<Vec<(Hop, NodeId)>> {
    let mut prev: Vec<Option<(NodeId, Hop)>> = vec![None; g.node_count()];
    let mut seen = vec![false; g.node_count()];
    seen[from.index()] = true;
    let mut frontier = vec![from];
    while !frontier.is_empty() && !seen[to.index()] {
        let mut next_frontier = Vec::new();
        // Frontier stays sorted by path order, so first discovery is lexicographically minimal.
        for &at in &frontier {
            let mut outs: Vec<(Hop, NodeId)> = g
                .out_hops(at)
                .filter(|(h, _)| h.channel != skip && g.channel(h.channel).unwrap().liquidity(h.dir) >= q)
                .collect();
            outs.sort_by_key(|(_, n)| *n);
            for (hop, n) in outs {
                if !seen[n.index()] {
                    seen[n.index()] = true;
                    prev[n.index()] = Some((at, hop));
                    next_frontier.push(n);
                }
            }
        }
        frontier = next_frontier;
    }
    if !seen[to.index()] {
        return None;
    }
    let mut steps = Vec::new();
    let mut at = to;
    while at != from {
        let (p, hop) = prev[at.index()].unwrap();
        steps.push((hop, at));
        at = p;
    }
    steps.reverse();
    Some(steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn n(i: u32) -> NodeId {
        NodeId(i)
    }

    /// Triangle at a 1/1 split, then one unit pushed around 0→1→2→0.
    fn skewed_triangle() -> OverlayGraph {
        let mut g = OverlayGraph::new(3);
        for (a, b) in [(0, 1), (1, 2), (2, 0)] {
            g.open_channel(n(a), n(b), 1.0, 1.0, 0.0).unwrap();
        }
        let hops: Vec<Hop> = (0..3).map(|i| Hop { channel: ChannelId(i), dir: Direction::AtoB }).collect();
        push_cycle(&mut g, &hops, 1.0).unwrap();
        g
    }

    fn capacities(g: &OverlayGraph) -> Vec<f64> {
        g.channels().map(|(_, c)| c.capacity).collect()
    }

    #[test]
    fn deviation_examples() {
        let mut g = OverlayGraph::new(2);
        g.open_channel(n(0), n(1), 50.0, 50.0, 0.0).unwrap();
        let p = RebalanceProblem::balanced(&g, 1.0).unwrap();
        assert_eq!(deviation(&g, &p.target_ab), 0.0);

        let mut g = OverlayGraph::new(2);
        g.open_channel(n(0), n(1), 60.0, 40.0, 0.0).unwrap();
        let p = RebalanceProblem::balanced(&g, 1.0).unwrap();
        assert_eq!(deviation(&g, &p.target_ab), 20.0);

        let g = OverlayGraph::new(0);
        assert_eq!(deviation(&g, &BTreeMap::new()), 0.0);
    }

    #[test]
    fn exact_inverts_a_known_cycle() {
        let g = skewed_triangle();
        let p = RebalanceProblem::balanced(&g, 1.0).unwrap();
        assert_eq!(deviation(&g, &p.target_ab), 6.0);
        let plan = exact_rebalance(&p).unwrap();
        assert_eq!(plan.cycles.len(), 1);
        assert_eq!(plan.cycles[0].nodes.len(), 3);
        assert_eq!(plan.deviation, 0.0);
        let mut after = g.clone();
        apply_plan(&mut after, &plan).unwrap();
        assert_eq!(deviation(&after, &p.target_ab), 0.0);
        assert_eq!(capacities(&after), capacities(&g));
    }

    #[test]
    fn greedy_matches_exact_on_triangle() {
        let g = skewed_triangle();
        let p = RebalanceProblem::balanced(&g, 1.0).unwrap();
        let plan = greedy_rebalance(&p, 10);
        assert_eq!(plan.deviation, 0.0);
        assert_eq!(plan.cycles.len(), 1);
    }

    #[test]
    fn balanced_state_yields_empty_plans() {
        let mut g = OverlayGraph::new(3);
        for (a, b) in [(0, 1), (1, 2), (2, 0)] {
            g.open_channel(n(a), n(b), 3.0, 3.0, 0.0).unwrap();
        }
        let p = RebalanceProblem::balanced(&g, 1.0).unwrap();
        assert!(exact_rebalance(&p).unwrap().is_empty());
        assert!(greedy_rebalance(&p, 5).is_empty());
    }

    #[test]
    fn leaf_channel_cannot_be_fixed() {
        let mut g = skewed_triangle();
        g.add_node();
        g.open_channel(n(0), n(3), 4.0, 0.0, 0.0).unwrap();
        let p = RebalanceProblem::balanced(&g, 1.0).unwrap();
        let plan = exact_rebalance(&p).unwrap();
        // The bridge to node 3 stays 2 units off in each direction.
        assert_eq!(plan.deviation, 4.0);
        assert!(plan.cycles.iter().all(|c| !c.nodes.contains(&n(3))));
        assert_eq!(greedy_rebalance(&p, 10).deviation, 4.0);
    }

    #[test]
    fn zero_cycles_budget() {
        let g = skewed_triangle();
        let p = RebalanceProblem::balanced(&g, 1.0).unwrap();
        let plan = greedy_rebalance(&p, 0);
        assert!(plan.is_empty());
        assert_eq!(plan.deviation, 6.0);
    }

    #[test]
    fn exact_refuses_large_graphs() {
        let g = OverlayGraph::new(9);
        let p = RebalanceProblem::balanced(&g, 1.0).unwrap();
        assert!(matches!(exact_rebalance(&p), Err(Error::AboveOracleCap { nodes: 9, cap: 8 })));
    }

    #[test]
    fn plan_csv_round_trip() {
        let g = skewed_triangle();
        let p = RebalanceProblem::balanced(&g, 1.0).unwrap();
        let plan = exact_rebalance(&p).unwrap();
        let csv = plan.to_csv();
        assert!(csv.starts_with("cycle_nodes,amount\n"));
        let rows = RebalancePlan::from_csv(&csv).unwrap();
        assert_eq!(rows.len(), plan.cycles.len());
        assert_eq!(rows[0].0, plan.cycles[0].nodes);
        assert_eq!(rows[0].1, plan.cycles[0].amount);
    }

    fn random_instance(rng: &mut ChaCha8Rng, nodes: usize) -> OverlayGraph {
        let mut g = OverlayGraph::new(nodes);
        for a in 0..nodes as u32 {
            for b in a + 1..nodes as u32 {
                if rng.random::<f64>() < 0.5 {
                    let cap = rng.random_range(1..=6) as f64;
                    let ab = rng.random_range(0..=cap as u32) as f64;
                    g.open_channel(n(a), n(b), ab, cap - ab, 0.0).unwrap();
                }
            }
        }
        g
    }

    #[test]
    fn solvers_conserve_and_exact_dominates() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..60 {
            let nodes = rng.random_range(3..=6);
            let g = random_instance(&mut rng, nodes);
            let p = RebalanceProblem::balanced(&g, 1.0).unwrap();
            let start = deviation(&g, &p.target_ab);
            let exact = exact_rebalance(&p).unwrap();
            let greedy = greedy_rebalance(&p, 50);
            assert!(exact.deviation <= greedy.deviation + 1e-9);
            assert!(greedy.deviation <= start);
            for plan in [&exact, &greedy] {
                let mut after = g.clone();
                apply_plan(&mut after, plan).unwrap();
                assert_eq!(capacities(&after), capacities(&g));
                assert!(after.channels().all(|(_, c)| c.liq_ab >= 0.0 && c.liq_ba >= 0.0));
                assert!((deviation(&after, &p.target_ab) - plan.deviation).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn greedy_improves_every_cycle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let g = random_instance(&mut rng, 7);
            let p = RebalanceProblem::balanced(&g, 1.0).unwrap();
            let plan = greedy_rebalance(&p, 40);
            let mut work = g.clone();
            let mut last = deviation(&work, &p.target_ab);
            for c in &plan.cycles {
                push_cycle(&mut work, &c.hops, c.amount).unwrap();
                let now = deviation(&work, &p.target_ab);
                assert!(now < last);
                last = now;
            }
            let after = work.clone();
            let again = RebalanceProblem::balanced(&after, 1.0).unwrap();
            if plan.deviation == 0.0 {
                assert!(greedy_rebalance(&again, 10).is_empty());
                assert!(exact_rebalance(&again).unwrap().is_empty());
            }
        }
    }
}
