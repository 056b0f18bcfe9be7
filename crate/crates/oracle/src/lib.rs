//! Brute-force references for the laynet solvers and the fixtures derived
//! from them.
//!
//! Nothing here calls the production routing, pricing or success code. Only
//! the graph and policy types are shared.

use std::fs;
use std::io;
use std::path::{Path as FsPath, PathBuf};

use laynet::agents::HubPolicy;
use laynet::overlay::{NodeId, OverlayGraph};
use laynet::par::{self, Execution};
use laynet::rebalance::{exact_rebalance, greedy_rebalance, RebalanceProblem};
use laynet::routing::Path;
use laynet::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use laynet::check::{random_rebalance_instance, random_route_instance, InstanceDump, InstanceKind};

/// Node limit for [`oracle_all_paths`].
pub const ORACLE_PATH_CAP: usize = 10;
pub const MIN_GRID_POINTS: usize = 10_000;
pub const MIN_MC_TRIALS: u64 = 1000;
const MC_CHUNK: u64 = 10_000;

/// Every simple path from `src` to `dst`, in depth-first order over each
/// node's channel list. `src == dst` yields the single empty path.
pub fn oracle_all_paths(g: &OverlayGraph, src: NodeId, dst: NodeId) -> Result<Vec<Path>> {
    if g.node_count() > ORACLE_PATH_CAP {
        return Err(Error::AboveOracleCap { nodes: g.node_count(), cap: ORACLE_PATH_CAP });
    }
    for n in [src, dst] {
        if !g.contains(n) {
            return Err(Error::UnknownNode(n));
        }
    }
    let mut out = Vec::new();
    let mut visited = vec![false; g.node_count()];
    visited[src.index()] = true;
    let mut hops = Vec::new();
    dfs(g, src, src, dst, &mut visited, &mut hops, &mut out);
    Ok(out)
}

fn dfs(
    g: &OverlayGraph,
    src: NodeId,
    at: NodeId,
    dst: NodeId,
    visited: &mut [bool],
    hops: &mut Vec<laynet::overlay::Hop>,
    out: &mut Vec<Path>,
) {
    if at == dst {
        out.push(Path::new(src, dst, hops.clone()));
        return;
    }
    let next: Vec<_> = g.out_hops(at).collect();
    for (hop, to) in next {
        if visited[to.index()] {
            continue;
        }
        visited[to.index()] = true;
        hops.push(hop);
        dfs(g, src, to, dst, visited, hops, out);
        hops.pop();
        visited[to.index()] = false;
    }
}

/// Evenly spaced fee grid, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeeGrid {
    pub floor: f64,
    pub cap: f64,
    pub points: usize,
}

impl FeeGrid {
    pub fn new(floor: f64, cap: f64, points: usize) -> Self {
        assert!(points >= MIN_GRID_POINTS, "fee grid needs at least {MIN_GRID_POINTS} points");
        assert!(floor > 0.0 && cap > floor, "fee grid needs 0 < floor < cap");
        Self { floor, cap, points }
    }

    pub fn step(&self) -> f64 {
        (self.cap - self.floor) / (self.points - 1) as f64
    }

    pub fn at(&self, i: usize) -> f64 {
        self.floor + self.step() * i as f64
    }
}

/// Grid argmax of `f·λ0·f^(−η) − (c0 + c1·λ0·f^(−η))`.
pub fn oracle_monopoly_fee(policy: &HubPolicy, grid: FeeGrid) -> f64 {
    let (l0, eta) = (policy.demand_scale, policy.demand_elasticity);
    let (c0, c1) = (policy.reserve_fixed, policy.reserve_marginal);
    let mut best = (grid.floor, f64::NEG_INFINITY);
    for i in 0..grid.points {
        let f = grid.at(i);
        let volume = l0 / f.powf(eta);
        let profit = (f - c1) * volume - c0;
        if profit > best.1 {
            best = (f, profit);
        }
    }
    best.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub trials: u64,
    pub successes: u64,
    pub rate: f64,
    /// Wilson score bounds at 95%.
    pub ci_low: f64,
    pub ci_high: f64,
}

impl McEstimate {
    pub fn covers(&self, p: f64) -> bool {
        self.ci_low <= p && p <= self.ci_high
    }
}

/// Simulates independent per-hop failures with success `1 − e^{−kℓ}`.
///
/// Trials run in chunks of 10⁴, each with its own rng stream, so the result
/// does not depend on the execution mode.
pub fn oracle_success_mc(liquidities: &[f64], decay_rate: f64, trials: u64, seed: u64, exec: Execution) -> McEstimate {
    assert!(trials >= MIN_MC_TRIALS, "need at least {MIN_MC_TRIALS} trials");
    let probs: Vec<f64> = liquidities.iter().map(|l| 1.0 - (-decay_rate * l.max(0.0)).exp()).collect();
    let chunks = trials.div_ceil(MC_CHUNK) as usize;
    let counts = par::map_range(exec, chunks, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let n = MC_CHUNK.min(trials - c as u64 * MC_CHUNK);
        (0..n).filter(|_| probs.iter().all(|&p| rng.random::<f64>() < p)).count() as u64
    });
    let successes: u64 = counts.iter().sum();
    let n = trials as f64;
    let rate = successes as f64 / n;
    let z = 1.959_963_984_540_054_f64;
    let denom = 1.0 + z * z / n;
    let centre = (rate + z * z / (2.0 * n)) / denom;
    let half = z * (rate * (1.0 - rate) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    McEstimate { trials, successes, rate, ci_low: (centre - half).max(0.0), ci_high: (centre + half).min(1.0) }
}

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Fixed-liquidity star network pushed through a geometric demand sweep.
pub const STRESS_FIXTURE: &str = "stress.toml";
pub const STRESS_SWEEP_PARAM: &str = "demand.d0";
pub const STRESS_SWEEP_VALUES: [&str; 8] = ["1", "2", "4", "8", "16", "32", "64", "128"];
pub const STRESS_SWEEP_SEEDS: usize = 2;

/// Drain scenario for the hysteresis probe.
pub const STARVATION_FIXTURE: &str = "starvation.toml";
pub const STARVATION_STRESS_DEMAND: f64 = 8.0;
pub const STARVATION_RELIEF_DEMAND: f64 = 0.5;

/// A small instance on which greedy rebalancing ends strictly above the
/// exact optimum.
pub const GREEDY_GAP_FIXTURE: &str = "greedy_gap.csv";
/// First seed tried by [`find_greedy_gap`].
pub const GREEDY_GAP_SEARCH_START: u64 = 0;
pub const GREEDY_GAP_MAX_NODES: usize = 6;

pub fn load_fixture(name: &str) -> io::Result<String> {
    fs::read_to_string(fixtures_dir().join(name))
}

/// Final deviations `(exact, greedy)` of a rebalance instance.
pub fn rebalance_gap(inst: &InstanceDump) -> Result<(f64, f64)> {
    let InstanceKind::Rebalance { quantum, max_cycles } = inst.kind else {
        return Err(Error::Config("not a rebalance instance".into()));
    };
    let p = RebalanceProblem::balanced(&inst.graph, quantum)?;
    Ok((exact_rebalance(&p)?.deviation, greedy_rebalance(&p, max_cycles).deviation))
}

/// First seed at or after `start` whose instance has a strict greedy gap.
pub fn find_greedy_gap(start: u64, limit: u64) -> Result<Option<InstanceDump>> {
    for seed in start..start + limit {
        let inst = random_rebalance_instance(seed, GREEDY_GAP_MAX_NODES);
        let (exact, greedy) = rebalance_gap(&inst)?;
        if greedy > exact + 1e-9 {
            return Ok(Some(inst));
        }
    }
    Ok(None)
}

/// Rewrites the seed-derived fixtures in `dir`. Returns the files written.
pub fn regenerate_fixtures(dir: &FsPath) -> Result<Vec<PathBuf>> {
    let inst = find_greedy_gap(GREEDY_GAP_SEARCH_START, 10_000)?
        .ok_or_else(|| Error::Config("no greedy gap instance in 10000 seeds".into()))?;
    fs::create_dir_all(dir).map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?;
    let path = dir.join(GREEDY_GAP_FIXTURE);
    fs::write(&path, inst.to_text()).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(vec![path])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn complete(n: u32) -> OverlayGraph {
        let mut g = OverlayGraph::new(n as usize);
        for a in 0..n {
            for b in a + 1..n {
                g.open_channel(NodeId(a), NodeId(b), 1.0, 1.0, 0.0).unwrap();
            }
        }
        g
    }

    #[test]
    fn path_counts() {
        assert_eq!(oracle_all_paths(&complete(4), NodeId(0), NodeId(3)).unwrap().len(), 5);
        // Σ_{k=0}^{n-2} (n-2)!/(n-2-k)!
        assert_eq!(oracle_all_paths(&complete(5), NodeId(1), NodeId(4)).unwrap().len(), 16);
        let mut g = complete(3);
        g.add_node();
        assert!(oracle_all_paths(&g, NodeId(0), NodeId(3)).unwrap().is_empty());
        let self_paths = oracle_all_paths(&g, NodeId(2), NodeId(2)).unwrap();
        assert_eq!(self_paths.len(), 1);
        assert!(self_paths[0].is_empty());
        assert!(matches!(
            oracle_all_paths(&OverlayGraph::new(11), NodeId(0), NodeId(1)),
            Err(Error::AboveOracleCap { nodes: 11, cap: 10 })
        ));
    }

    #[test]
    fn monopoly_grid() {
        let grid = FeeGrid::new(1.01, 10.0, 10_000);
        let p = HubPolicy { reserve_marginal: 1.0, demand_elasticity: 2.0, ..HubPolicy::default() };
        assert_abs_diff_eq!(oracle_monopoly_fee(&p, grid), 2.0, epsilon = grid.step());
        let half = HubPolicy { reserve_marginal: 0.5, ..p.clone() };
        let g2 = FeeGrid::new(0.51, 10.0, 10_000);
        assert_abs_diff_eq!(oracle_monopoly_fee(&half, g2), 1.0, epsilon = g2.step());
        let doubled = HubPolicy { demand_scale: 2.0, ..p.clone() };
        assert_eq!(oracle_monopoly_fee(&doubled, grid), oracle_monopoly_fee(&p, grid));
    }

    #[test]
    fn monte_carlo() {
        let est = oracle_success_mc(&[1.0, 1.0], 1.0, 100_000, 7, Execution::Parallel);
        assert!(est.covers(0.399_576_400_893_728_5), "{est:?}");
        assert_eq!(oracle_success_mc(&[0.0], 1.0, 5_000, 1, Execution::Sequential).successes, 0);
        assert_eq!(oracle_success_mc(&[50.0], 1.0, 100_000, 1, Execution::Sequential).rate, 1.0);
        assert_eq!(
            oracle_success_mc(&[0.7, 2.0], 1.0, 25_000, 3, Execution::Sequential),
            oracle_success_mc(&[0.7, 2.0], 1.0, 25_000, 3, Execution::Parallel)
        );
    }

    #[test]
    fn stored_greedy_gap_is_regenerable() {
        let stored = InstanceDump::from_text(&load_fixture(GREEDY_GAP_FIXTURE).unwrap()).unwrap();
        let found = find_greedy_gap(GREEDY_GAP_SEARCH_START, 10_000).unwrap().unwrap();
        assert_eq!(stored, found);
        let (exact, greedy) = rebalance_gap(&stored).unwrap();
        assert!(greedy > exact);
    }
}
