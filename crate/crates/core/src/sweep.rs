//! Parameter sweeps over a scenario file.

use crate::config::ConfigDoc;
use crate::engine::{run_full, RunOutput, SimConfig};
use crate::error::{Error, Result};
use crate::metrics::{failure_rate_curve, FailureCurve};
use crate::par::{self, Execution};

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub value: String,
    pub seed: u64,
    pub output: RunOutput,
}

/// Resolved `(value, seed, config)` triples in output order.
pub fn sweep_plan(
    doc: &ConfigDoc,
    param: &str,
    values: &[String],
    seeds: usize,
) -> Result<Vec<(String, u64, SimConfig)>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    if seeds == 0 {
        return Err(Error::Config("sweep needs at least one seed".into()));
    }
    let mut plan = Vec::with_capacity(values.len() * seeds);
    for value in values {
        let mut d = doc.clone();
        d.set(param, value)?;
        let cfg = d.sim_config()?;
        for i in 0..seeds as u64 {
            let seed = cfg.seed.wrapping_add(i);
            plan.push((value.clone(), seed, SimConfig { seed, ..cfg.clone() }));
        }
    }
    Ok(plan)
}

/// Runs one simulation per (value, seed), ordered by value then seed.
pub fn sweep(doc: &ConfigDoc, param: &str, values: &[String], seeds: usize, exec: Execution) -> Result<Vec<SweepRun>> {
    let plan = sweep_plan(doc, param, values, seeds)?;
    par::map(exec, &plan, |(value, seed, cfg)| {
        run_full(cfg).map(|output| SweepRun { value: value.clone(), seed: *seed, output })
    })
    .into_iter()
    .collect()
}

pub const SWEEP_CURVE_HEADER: &str = "value,seeds,demand,onchain_fee,ln_mean_fee,ln_attempts,ln_route_failures,failure_rate,onchain_count,ln_count,abstentions,final_top1_share,final_topk_share";

/// One aggregate row per swept value, pooled over seeds.
pub fn sweep_curves_csv(runs: &[SweepRun]) -> String {
    let mut out = format!("{SWEEP_CURVE_HEADER}\n");
    let mut i = 0;
    while i < runs.len() {
        let value = &runs[i].value;
        let group: Vec<&SweepRun> = runs[i..].iter().take_while(|r| &r.value == value).collect();
        i += group.len();
        let frames = group.iter().flat_map(|r| r.output.frames.iter());
        let (mut n, mut demand, mut fee, mut ln_fee_total) = (0u64, 0.0, 0.0, 0.0);
        let (mut attempts, mut failures, mut onchain, mut ln, mut abstain) = (0u64, 0u64, 0u64, 0u64, 0u64);
        for f in frames {
            n += 1;
            demand += f.demand;
            fee += f.onchain_fee;
            ln_fee_total += f.ln_mean_fee * f.ln_count as f64;
            attempts += f.ln_attempts;
            failures += f.ln_route_failures;
            onchain += f.onchain_count;
            ln += f.ln_count;
            abstain += f.abstentions;
        }
        let n_f = n.max(1) as f64;
        let last = |pick: fn(&crate::engine::MetricsFrame) -> f64| {
            group.iter().filter_map(|r| r.output.frames.last().map(pick)).sum::<f64>() / group.len() as f64
        };
        out.push_str(&format!(
            "{value},{},{},{},{},{attempts},{failures},{},{onchain},{ln},{abstain},{},{}\n",
            group.len(),
            demand / n_f,
            fee / n_f,
            if ln > 0 { ln_fee_total / ln as f64 } else { 0.0 },
            if attempts > 0 { failures as f64 / attempts as f64 } else { 0.0 },
            last(|f| f.top1_liquidity_share),
            last(|f| f.topk_liquidity_share),
        ));
    }
    out
}

/// Failure curve keyed by each run's mean demand.
pub fn sweep_failure_curve(runs: &[SweepRun]) -> FailureCurve {
    let groups: Vec<(f64, &[crate::engine::MetricsFrame])> = runs
        .iter()
        .map(|r| {
            let frames = r.output.frames.as_slice();
            let mean = frames.iter().map(|f| f.demand).sum::<f64>() / frames.len().max(1) as f64;
            (mean, frames)
        })
        .collect();
    failure_rate_curve(&groups)
}
