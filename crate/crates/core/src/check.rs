//! Seeded equivalence checks of the fast solvers against exhaustive ones.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::overlay::{Direction, NodeId, OverlayGraph};
use crate::par::{self, Execution};
use crate::rebalance::{exact_rebalance, greedy_rebalance, RebalanceProblem};
use crate::routing::{brute_force_best_path, path_cost, Path};
use crate::snapshot::{graph_from_csv, graph_to_csv};

/// Largest instance the check will generate.
pub const CHECK_NODE_CAP: usize = 8;

/// Rebalance instances stay smaller so the exact solver fits its state budget.
pub const REBALANCE_NODE_CAP: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InstanceKind {
    Route { src: NodeId, dst: NodeId, amount: f64, margin: f64 },
    Rebalance { quantum: f64, max_cycles: usize },
}

/// A self-contained problem instance with the seed that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceDump {
    pub seed: u64,
    pub kind: InstanceKind,
    pub graph: OverlayGraph,
}

impl InstanceDump {
    /// `# key=value` header lines followed by the graph edge list.
    pub fn to_text(&self) -> String {
        let mut out = format!("# seed={}\n", self.seed);
        match self.kind {
            InstanceKind::Route { src, dst, amount, margin } => {
                out.push_str(&format!(
                    "# kind=route\n# src={src}\n# dst={dst}\n# amount={amount}\n# margin={margin}\n"
                ));
            }
            InstanceKind::Rebalance { quantum, max_cycles } => {
                out.push_str(&format!("# kind=rebalance\n# quantum={quantum}\n# max_cycles={max_cycles}\n"));
            }
        }
        out.push_str(&graph_to_csv(&self.graph));
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut fields = std::collections::BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if let Some((k, v)) = line.strip_prefix('#').and_then(|r| r.trim().split_once('=')) {
                fields.insert(k.trim().to_string(), (i + 1, v.trim().to_string()));
            }
        }
        let get = |k: &str| -> Result<(usize, &str)> {
            fields
                .get(k)
                .map(|(l, v)| (*l, v.as_str()))
                .ok_or_else(|| Error::Parse { line: 1, message: format!("missing `# {k}=` line") })
        };
        fn num<T: std::str::FromStr>(k: &str, (line, v): (usize, &str)) -> Result<T> {
            v.parse().map_err(|_| Error::Parse { line, message: format!("bad {k} {v:?}") })
        }
        let kind = match get("kind")?.1 {
            "route" => InstanceKind::Route {
                src: NodeId(num("src", get("src")?)?),
                dst: NodeId(num("dst", get("dst")?)?),
                amount: num("amount", get("amount")?)?,
                margin: num("margin", get("margin")?)?,
            },
            "rebalance" => InstanceKind::Rebalance {
                quantum: num("quantum", get("quantum")?)?,
                max_cycles: num("max_cycles", get("max_cycles")?)?,
            },
            other => {
                let line = get("kind")?.0;
                return Err(Error::Parse { line, message: format!("unknown kind {other:?}") });
            }
        };
        Ok(Self { seed: num("seed", get("seed")?)?, kind, graph: graph_from_csv(text)? })
    }
}

fn random_graph(rng: &mut ChaCha8Rng, nodes: usize, edge_prob: f64, max_cap: u32) -> OverlayGraph {
    let mut g = OverlayGraph::new(nodes);
    for a in 0..nodes as u32 {
        for b in a + 1..nodes as u32 {
            if rng.random::<f64>() < edge_prob {
                let cap = rng.random_range(1..=max_cap) as f64;
                let ab = rng.random_range(0..=cap as u32) as f64;
                let id = g.open_channel(NodeId(a), NodeId(b), ab, cap - ab, 0.0).expect("fresh pair");
                let c = g.channel_mut(id).expect("just opened");
                for dir in [Direction::AtoB, Direction::BtoA] {
                    // Coarse fee values make exact cost ties common.
                    let base = rng.random_range(0..=4) as f64 * 0.5;
                    let rate = [0.0, 0.01, 0.1][rng.random_range(0..3)];
                    c.set_fees(dir, base, rate);
                }
            }
        }
    }
    g.onchain_op_count = 0;
    g
}

pub fn random_route_instance(seed: u64, max_nodes: usize) -> InstanceDump {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = rng.random_range(2..=max_nodes.max(2));
    let graph = random_graph(&mut rng, nodes, 0.5, 8);
    let src = rng.random_range(0..nodes as u32);
    let mut dst = rng.random_range(0..nodes as u32 - 1);
    if dst >= src {
        dst += 1;
    }
    let amount = rng.random_range(1..=4) as f64 * 0.5;
    let margin = [0.0, 0.5][rng.random_range(0..2)];
    InstanceDump { seed, kind: InstanceKind::Route { src: NodeId(src), dst: NodeId(dst), amount, margin }, graph }
}

pub fn random_rebalance_instance(seed: u64, max_nodes: usize) -> InstanceDump {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = rng.random_range(3..=max_nodes.clamp(3, REBALANCE_NODE_CAP));
    let graph = random_graph(&mut rng, nodes, 0.5, 4);
    InstanceDump { seed, kind: InstanceKind::Rebalance { quantum: 1.0, max_cycles: 50 }, graph }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mismatch {
    Route { instance: InstanceDump, found: Option<(Path, f64)>, oracle: Option<(Path, f64)> },
    Rebalance { instance: InstanceDump, exact: f64, greedy: f64 },
}

impl Mismatch {
    pub fn instance(&self) -> &InstanceDump {
        match self {
            Mismatch::Route { instance, .. } | Mismatch::Rebalance { instance, .. } => instance,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Mismatch::Route { instance, found, oracle } => {
                let show = |p: &Option<(Path, f64)>| match p {
                    Some((path, cost)) => format!("{} hops, cost {cost}", path.len()),
                    None => "no route".into(),
                };
                format!("route mismatch at seed {}: found {}, oracle {}", instance.seed, show(found), show(oracle))
            }
            Mismatch::Rebalance { instance, exact, greedy } => {
                format!("rebalance dominance violated at seed {}: exact {exact} > greedy {greedy}", instance.seed)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckReport {
    pub route_instances: usize,
    pub rebalance_instances: usize,
    /// Instances where greedy ended strictly worse than exact.
    pub strict_gaps: usize,
    pub mismatches: Vec<Mismatch>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Checks `finder` against the exhaustive router and greedy rebalancing
/// against the exact solver on `instances` seeded instances of each kind.
pub fn oracle_check<F>(instances: usize, max_nodes: usize, seed: u64, exec: Execution, finder: F) -> Result<CheckReport>
where
    F: Fn(&OverlayGraph, NodeId, NodeId, f64, f64) -> Result<Option<Path>> + Sync + Send,
{
    if max_nodes > CHECK_NODE_CAP {
        return Err(Error::AboveOracleCap { nodes: max_nodes, cap: CHECK_NODE_CAP });
    }
    if max_nodes < 3 {
        return Err(Error::Config("max_nodes must be at least 3".into()));
    }
    let route = par::map_range(exec, instances, |i| -> Result<Option<Mismatch>> {
        let inst = random_route_instance(seed.wrapping_add(i as u64), max_nodes);
        let InstanceKind::Route { src, dst, amount, margin } = inst.kind else { unreachable!() };
        let priced = |p: Option<Path>| -> Result<Option<(Path, f64)>> {
            p.map(|p| path_cost(&inst.graph, &p, amount).map(|c| (p, c))).transpose()
        };
        let found = priced(finder(&inst.graph, src, dst, amount, margin)?)?;
        let oracle = priced(brute_force_best_path(&inst.graph, src, dst, amount, margin)?)?;
        Ok((found != oracle).then_some(Mismatch::Route { instance: inst, found, oracle }))
    });
    let rebalance = par::map_range(exec, instances, |i| -> Result<(Option<Mismatch>, bool)> {
        let inst = random_rebalance_instance(seed.wrapping_add(i as u64), max_nodes);
        let InstanceKind::Rebalance { quantum, max_cycles } = inst.kind else { unreachable!() };
        let p = RebalanceProblem::balanced(&inst.graph, quantum)?;
        let exact = exact_rebalance(&p)?.deviation;
        let greedy = greedy_rebalance(&p, max_cycles).deviation;
        let bad = exact > greedy + 1e-9;
        Ok((bad.then(|| Mismatch::Rebalance { instance: inst.clone(), exact, greedy }), greedy > exact + 1e-9))
    });
    let mut report = CheckReport { route_instances: instances, rebalance_instances: instances, ..Default::default() };
    for r in route {
        report.mismatches.extend(r?);
    }
    for r in rebalance {
        let (m, gap) = r?;
        report.mismatches.extend(m);
        report.strict_gaps += gap as usize;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::best_path;

    #[test]
    fn dumps_round_trip() {
        for seed in 0..20 {
            for inst in [random_route_instance(seed, 8), random_rebalance_instance(seed, 6)] {
                let text = inst.to_text();
                assert_eq!(InstanceDump::from_text(&text).unwrap(), inst);
            }
        }
    }

    #[test]
    fn production_router_passes() {
        let report = oracle_check(60, 8, 1, Execution::Parallel, best_path).unwrap();
        assert!(report.passed(), "{:?}", report.mismatches.first().map(Mismatch::describe));
    }

    #[test]
    fn corrupted_router_is_caught() {
        let fee_blind = |g: &OverlayGraph, s: NodeId, d: NodeId, a: f64, m: f64| {
            let mut flat = g.clone();
            let ids: Vec<_> = flat.channels().map(|(id, _)| id).collect();
            for id in ids {
                let c = flat.channel_mut(id).unwrap();
                c.set_fees(Direction::AtoB, 0.0, 0.0);
                c.set_fees(Direction::BtoA, 0.0, 0.0);
            }
            best_path(&flat, s, d, a, m)
        };
        let report = oracle_check(60, 8, 1, Execution::Sequential, fee_blind).unwrap();
        assert!(!report.passed());
        let m = &report.mismatches[0];
        assert_eq!(InstanceDump::from_text(&m.instance().to_text()).unwrap(), *m.instance());
    }

    #[test]
    fn cap_enforced() {
        assert!(matches!(
            oracle_check(1, 11, 0, Execution::Sequential, best_path),
            Err(Error::AboveOracleCap { nodes: 11, cap: 8 })
        ));
    }
}
