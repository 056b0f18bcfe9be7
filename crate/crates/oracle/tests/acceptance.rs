//! Acceptance checks. Prints one line per criterion and exits non-zero when
//! any of them fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use laynet::agents::{hub_set_fee, HubPolicy, PricingMode};
use laynet::baselayer::{base_fee, max_throughput, BaseParams};
use laynet::config::ConfigDoc;
use laynet::engine::{check_frame, run_full, run_many, trace_csv, RunOutput, SimConfig, Simulation};
use laynet::equilibrium::{cost_curves, crossover_demand, CrossoverSearch, LnFeeModel};
use laynet::metrics::{hysteresis_probe, topk_of, HysteresisSettings};
use laynet::par::{self, Execution};
use laynet::routing::{
    best_path, brute_force_best_path, critical_liquidity, path_cost, success_probability_of, SuccessModel,
};
use laynet::sweep::{sweep, sweep_failure_curve};
use laynet_oracle::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

struct Suite {
    lines: Vec<(usize, bool)>,
    /// Every scenario output produced along the way, audited by criterion 14.
    runs: Vec<(String, RunOutput)>,
}

impl Suite {
    fn check(&mut self, id: usize, name: &str, budget: Duration, f: impl FnOnce(&mut Self) -> Outcome) {
        let start = Instant::now();
        let o = f(self);
        let took = start.elapsed();
        let in_time = took <= budget;
        let pass = o.pass && in_time;
        let timing = if in_time { format!("{took:.2?}") } else { format!("{took:.2?}, over the {budget:?} budget") };
        println!("criterion {id:>2} {} {name}: {} ({timing})", if pass { "PASS" } else { "FAIL" }, o.detail);
        self.lines.push((id, pass));
    }
}

fn ms(n: u64) -> Duration {
    Duration::from_millis(n)
}

fn secs(n: u64) -> Duration {
    Duration::from_secs(n)
}

fn throughput() -> Outcome {
    let t = max_throughput(&BaseParams::default());
    outcome(t == 5, format!("max_throughput = {t}"))
}

fn fee_unbounded() -> Outcome {
    let p = BaseParams { base_fee_floor: 1.0, congestion_elasticity: 2.0, ..BaseParams::with_throughput(5) };
    let at = base_fee(5000.0, &p).unwrap();
    let past = base_fee(5000.0 * (1.0 + 1e-9), &p).unwrap();
    let rel = (at - 1e6).abs() / 1e6;
    outcome(rel <= 1e-9 && past > 1e6, format!("base_fee(5000) = {at}, just above 5000 = {past}"))
}

fn routing_oracle() -> Outcome {
    let results = par::map_range(Execution::Parallel, 200, |i| {
        let inst = random_route_instance(i as u64, 8);
        let InstanceKind::Route { src, dst, amount, margin } = inst.kind else { unreachable!() };
        let fast = best_path(&inst.graph, src, dst, amount, margin).unwrap();
        let slow = brute_force_best_path(&inst.graph, src, dst, amount, margin).unwrap();
        let cost = |p: &Option<laynet::routing::Path>| p.as_ref().map(|p| path_cost(&inst.graph, p, amount).unwrap());
        (cost(&fast) == cost(&slow), fast == slow, slow.is_some())
    });
    let costs = results.iter().filter(|r| r.0).count();
    let paths = results.iter().filter(|r| r.1).count();
    let routable = results.iter().filter(|r| r.2).count();
    outcome(
        costs == 200 && paths == 200,
        format!("cost agrees on {costs}/200, path on {paths}/200 ({routable} routable)"),
    )
}

fn critical_liquidity_inverts() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = 10f64.powf(rng.random_range(-2.0..2.0));
        let eps = rng.random_range(0.001..0.999);
        let m = SuccessModel::new(k).unwrap();
        let l = critical_liquidity(&m, eps).unwrap();
        worst = worst.max((m.hop_success(l) - eps).abs());
    }
    outcome(worst < 1e-12, format!("max |S(l_crit) - eps| = {worst:e}"))
}

/// `x` majorizes `y` when both sorted descending have dominating prefix sums.
fn majorizes(x: &[f64], y: &[f64]) -> bool {
    let sorted = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    };
    let (x, y) = (sorted(x), sorted(y));
    let (mut sx, mut sy) = (0.0, 0.0);
    x.iter().zip(&y).all(|(a, b)| {
        sx += a;
        sy += b;
        sx >= sy
    }) && x != y
}

fn concentration() -> Outcome {
    let model = SuccessModel::new(1.0).unwrap();
    // A unit payment needs at least one unit on each hop.
    let splits: Vec<[f64; 2]> = (1..=9).map(|a| [a as f64, 10.0 - a as f64]).collect();
    let prob = |s: &[f64; 2]| success_probability_of(s, &model);
    let most_concentrated = splits.iter().max_by(|a, b| (a[0] - a[1]).abs().total_cmp(&(b[0] - b[1]).abs())).unwrap();
    let best = splits.iter().max_by(|a, b| prob(a).total_cmp(&prob(b))).unwrap();
    let (mut ordered, mut comparable) = (0, 0);
    for x in &splits {
        for y in &splits {
            if majorizes(x, y) {
                comparable += 1;
                ordered += (prob(x) > prob(y)) as usize;
            }
        }
    }
    let pass = prob(most_concentrated) >= prob(best) && ordered == comparable;
    outcome(
        pass,
        format!(
            "argmax split {:?} (S = {:.4}) vs most concentrated {:?} (S = {:.4}); concentration raises S in {ordered}/{comparable} comparable pairs",
            best,
            prob(best),
            most_concentrated,
            prob(most_concentrated)
        ),
    )
}

fn monte_carlo() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut covered = 0;
    let mut misses = Vec::new();
    for i in 0..20 {
        let hops = rng.random_range(1..=5);
        let liqs: Vec<f64> = (0..hops).map(|_| rng.random_range(0.1..5.0)).collect();
        let k = rng.random_range(0.2..2.0);
        let exact = success_probability_of(&liqs, &SuccessModel::new(k).unwrap());
        let est = oracle_success_mc(&liqs, k, 100_000, i, Execution::Parallel);
        if est.covers(exact) {
            covered += 1;
        } else {
            misses.push(format!("path {i}: {exact:.5} outside [{:.5}, {:.5}]", est.ci_low, est.ci_high));
        }
    }
    let mut detail = format!("{covered}/20 analytic values inside the 95% interval");
    if !misses.is_empty() {
        detail.push_str(&format!("; {}", misses.join("; ")));
    }
    outcome(covered == 20, detail)
}

fn monopoly() -> Outcome {
    let grid = FeeGrid::new(1.01, 10.0, MIN_GRID_POINTS);
    let policy = HubPolicy {
        pricing_mode: PricingMode::Monopoly,
        reserve_marginal: 1.0,
        demand_elasticity: 2.0,
        fee_floor: grid.floor,
        fee_cap: grid.cap,
        fee_grid_points: grid.points,
        ..HubPolicy::default()
    };
    let fee = hub_set_fee(&policy).unwrap();
    let oracle = oracle_monopoly_fee(&policy, grid);
    let step = grid.step();
    outcome(
        (fee - 2.0).abs() <= step && (fee - oracle).abs() <= step,
        format!("hub_set_fee = {fee}, oracle = {oracle}, grid step {step:.2e}"),
    )
}

fn crossover() -> Outcome {
    let base = BaseParams { base_fee_floor: 1.0, congestion_elasticity: 2.0, ..BaseParams::with_throughput(5) };
    let star = crossover_demand(&base, 2.0, CrossoverSearch::new(100.0)).unwrap();
    let expected = 5.0 * 2f64.sqrt();
    let Some(star) = star else { return outcome(false, "no crossover found") };
    let ln = LnFeeModel { channel_open_cost: 0.0, route_fee: 2.0, rebalance_fee: 0.0 };
    let grid: Vec<f64> = (1..=400).map(|i| i as f64 * 0.05).collect();
    let rows = cost_curves(&base, &ln, 1, &grid).unwrap();
    let misordered = rows
        .iter()
        .filter(|r| if r.demand < star { r.cost_btc > r.cost_ln } else { r.demand > star && r.cost_btc <= r.cost_ln })
        .count();
    outcome(
        (star - expected).abs() <= 1e-6 && misordered == 0,
        format!("D* = {star:.9} vs 5*sqrt(2) = {expected:.9}; {misordered} of {} curve rows misordered", rows.len()),
    )
}

fn rebalance_dominance() -> Outcome {
    let gaps =
        par::map_range(Execution::Parallel, 100, |i| rebalance_gap(&random_rebalance_instance(i as u64, 6)).unwrap());
    let dominated = gaps.iter().filter(|(e, g)| *e <= *g + 1e-9).count();
    let strict_here = gaps.iter().filter(|(e, g)| *g > *e + 1e-9).count();
    let fixture = InstanceDump::from_text(&load_fixture(GREEDY_GAP_FIXTURE).unwrap()).unwrap();
    let (fe, fg) = rebalance_gap(&fixture).unwrap();
    outcome(
        dominated == 100 && fg > fe,
        format!(
            "exact <= greedy on {dominated}/100 ({strict_here} strict); fixture seed {}: exact {fe} < greedy {fg}",
            fixture.seed
        ),
    )
}

fn determinism(suite: &mut Suite) -> Outcome {
    let cfg = SimConfig { seed: 10, epochs: 200, user_count: 50, ..SimConfig::default() };
    let a = run_full(&cfg).unwrap();
    let b = run_full(&cfg).unwrap();
    let (ta, tb) = (trace_csv(&a.frames), trace_csv(&b.frames));
    let same = ta == tb;
    let lines = ta.lines().count();
    suite.runs.push(("determinism".into(), a));
    suite.runs.push(("determinism replay".into(), b));
    outcome(
        same,
        format!("two 200-epoch runs give {} traces ({lines} lines)", if same { "byte-identical" } else { "different" }),
    )
}

fn attachment_direction(suite: &mut Suite) -> Outcome {
    let cfgs: Vec<SimConfig> = (0..20).map(|seed| SimConfig { seed, ..SimConfig::default() }).collect();
    let k = cfgs[0].topk();
    let initial: Vec<f64> = cfgs
        .iter()
        .map(|c| topk_of(&Simulation::new(c.clone()).unwrap().graph().liquidity_shares().unwrap(), k))
        .collect();
    let outputs: Vec<RunOutput> = run_many(&cfgs, Execution::Parallel).into_iter().map(Result::unwrap).collect();
    let finals: Vec<f64> = outputs.iter().map(|o| topk_of(o.shares.last().unwrap(), k)).collect();
    let rising = initial.iter().zip(&finals).filter(|(i, f)| f > i).count();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mi, mf) = (mean(&initial), mean(&finals));
    for (seed, o) in outputs.into_iter().enumerate() {
        suite.runs.push((format!("default seed {seed}"), o));
    }
    outcome(mf > mi && rising >= 16, format!("mean top-{k} share {mi:.4} -> {mf:.4}; rises in {rising}/20 seeds"))
}

fn failure_escalation(suite: &mut Suite) -> Outcome {
    let doc = ConfigDoc::parse(&load_fixture(STRESS_FIXTURE).unwrap()).unwrap();
    let values: Vec<String> = STRESS_SWEEP_VALUES.iter().map(|s| s.to_string()).collect();
    let runs = sweep(&doc, STRESS_SWEEP_PARAM, &values, STRESS_SWEEP_SEEDS, Execution::Parallel).unwrap();
    let curve = sweep_failure_curve(&runs);
    let rates: Vec<f64> = curve.rows.iter().map(|r| r.failure_rate).collect();
    let top = &rates[rates.len() / 2..];
    let monotone = top.windows(2).all(|w| w[1] >= w[0]);
    let last = *rates.last().unwrap();
    for r in runs {
        suite.runs.push((format!("stress d0={} seed {}", r.value, r.seed), r.output));
    }
    let shown: Vec<String> = curve.rows.iter().map(|r| format!("{}:{:.3}", r.demand, r.failure_rate)).collect();
    outcome(monotone && last > 0.9, format!("failure rate by demand {}", shown.join(" ")))
}

fn hysteresis(suite: &mut Suite) -> Outcome {
    let cfg = ConfigDoc::parse(&load_fixture(STARVATION_FIXTURE).unwrap()).unwrap().sim_config().unwrap();
    let r = hysteresis_probe(&cfg, STARVATION_STRESS_DEMAND, STARVATION_RELIEF_DEMAND, &HysteresisSettings::default())
        .unwrap();
    suite.runs.push(("starvation fixture".into(), run_full(&cfg).unwrap()));
    let exceeds = r.exceeds_initial() == Some(true);
    outcome(
        r.collapsed && exceeds,
        format!(
            "collapsed={}, min_recovery_liquidity={:?} vs initial {}",
            r.collapsed, r.min_recovery_liquidity, r.initial_channel_liquidity
        ),
    )
}

fn accounting(suite: &mut Suite) -> Outcome {
    let (mut frames, mut audits, mut bad) = (0, 0, Vec::new());
    for (name, out) in &suite.runs {
        for f in &out.frames {
            frames += 1;
            if let Err(e) = check_frame(f, None) {
                bad.push(format!("{name}: {e}"));
            }
        }
        for a in &out.audits {
            audits += 1;
            if !a.conserved() {
                bad.push(format!("{name}: capacity not conserved in epoch {}", a.epoch));
            }
        }
    }
    let detail =
        format!("{} runs, {frames} frames, {audits} capacity audits, {} violations", suite.runs.len(), bad.len());
    let detail = match bad.first() {
        Some(first) => format!("{detail}; first: {first}"),
        None => detail,
    };
    outcome(bad.is_empty() && frames > 0, detail)
}

fn main() -> ExitCode {
    let mut s = Suite { lines: Vec::new(), runs: Vec::new() };
    s.check(1, "throughput anchor", ms(1), |_| throughput());
    s.check(2, "fee unboundedness", ms(1), |_| fee_unbounded());
    s.check(3, "routing oracle equivalence", secs(10), |_| routing_oracle());
    s.check(4, "critical liquidity closed form", ms(1), |_| critical_liquidity_inverts());
    s.check(5, "liquidity concentration", secs(1), |_| concentration());
    s.check(6, "Monte Carlo consistency", secs(10), |_| monte_carlo());
    s.check(7, "monopoly pricing", secs(1), |_| monopoly());
    s.check(8, "crossover consistency", secs(1), |_| crossover());
    s.check(9, "rebalance dominance", secs(60), |_| rebalance_dominance());
    s.check(10, "determinism", secs(30), determinism);
    s.check(11, "attachment concentrates liquidity", secs(300), attachment_direction);
    s.check(12, "failure escalation", secs(300), failure_escalation);
    s.check(13, "hysteresis", secs(300), hysteresis);
    s.check(14, "accounting invariants", secs(60), accounting);
    let failed: Vec<usize> = s.lines.iter().filter(|(_, p)| !p).map(|(id, _)| *id).collect();
    println!("{} of {} criteria passed", s.lines.len() - failed.len(), s.lines.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {failed:?}");
        ExitCode::FAILURE
    }
}
