//! Concentration statistics, degree tails, failure curves and the hysteresis
//! probe.

use std::collections::BTreeMap;

use crate::engine::{MetricsFrame, SimConfig, Simulation};
use crate::error::{Error, Result};

/// Per-epoch liquidity shares, one vector per epoch indexed by node.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ShareTrajectory {
    epochs: Vec<Vec<f64>>,
}

impl ShareTrajectory {
    /// Each epoch must sum to 1 within 1e-9, or be all zero (no liquidity).
    pub fn new(epochs: Vec<Vec<f64>>) -> Result<Self> {
        for (t, shares) in epochs.iter().enumerate() {
            let sum: f64 = shares.iter().sum();
            if shares.iter().any(|s| !(*s >= 0.0)) || (sum != 0.0 && (sum - 1.0).abs() > 1e-9) {
                return Err(Error::Config(format!("shares at epoch {t} sum to {sum}")));
            }
        }
        Ok(Self { epochs })
    }

    pub fn epochs(&self) -> &[Vec<f64>] {
        &self.epochs
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// `epoch,node,share` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,node,share\n");
        for (t, shares) in self.epochs.iter().enumerate() {
            for (n, s) in shares.iter().enumerate() {
                out.push_str(&format!("{t},{n},{s}\n"));
            }
        }
        out
    }
}

/// Sum of the `k` largest values; `k` is clamped to the slice length.
pub fn topk_of(shares: &[f64], k: usize) -> f64 {
    let mut sorted = shares.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.iter().take(k).sum()
}

pub fn topk_share(trajectory: &ShareTrajectory, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    Ok(trajectory.epochs.iter().map(|s| topk_of(s, k)).collect())
}

/// Gini coefficient via the sorted-rank formula
/// `Σ (2i − n − 1)·x_(i) / (n·Σx)`.
pub fn gini(values: &[f64]) -> Result<f64> {
    if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::Config("gini needs finite non-negative values".into()));
    }
    let total: f64 = values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::AllZero);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let weighted: f64 = sorted.iter().enumerate().map(|(i, x)| (2.0 * (i + 1) as f64 - n - 1.0) * x).sum();
    Ok((weighted / (n * total)).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailFit {
    Estimated {
        slope: f64,
        /// Root-mean-square residual of the log-log fit.
        residual: f64,
        points: usize,
    },
    NotEstimable {
        distinct: usize,
    },
}

impl TailFit {
    pub fn slope(&self) -> Option<f64> {
        match self {
            TailFit::Estimated { slope, .. } => Some(*slope),
            TailFit::NotEstimable { .. } => None,
        }
    }
}

/// Minimum distinct degree values for a tail fit.
pub const MIN_DISTINCT_DEGREES: usize = 10;

/// OLS slope of `ln P(X ≥ d)` against `ln d` over degrees at or above the
/// median.
pub fn degree_tail_slope(degrees: &[u64]) -> TailFit {
    let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
    for &d in degrees.iter().filter(|&&d| d > 0) {
        *counts.entry(d).or_default() += 1;
    }
    if counts.len() < MIN_DISTINCT_DEGREES {
        return TailFit::NotEstimable { distinct: counts.len() };
    }
    let mut sorted: Vec<u64> = degrees.iter().copied().filter(|&d| d > 0).collect();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    let median = sorted[(sorted.len() - 1) / 2];

    let mut at_least = sorted.len();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&d, &c) in &counts {
        if d >= median {
            xs.push((d as f64).ln());
            ys.push((at_least as f64 / n).ln());
        }
        at_least -= c;
    }
    if xs.len() < 2 {
        return TailFit::NotEstimable { distinct: counts.len() };
    }
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    TailFit::Estimated { slope, residual: (sse / m).sqrt(), points: xs.len() }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FailureRow {
    pub demand: f64,
    pub attempts: u64,
    pub failures: u64,
    pub failure_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FailureCurve {
    pub rows: Vec<FailureRow>,
    /// Demand levels dropped for having no channel attempts.
    pub omitted: Vec<f64>,
}

pub const FAILURE_CURVE_HEADER: &str = "demand,attempts,failures,failure_rate";

impl FailureCurve {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{FAILURE_CURVE_HEADER}\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.demand, r.attempts, r.failures, r.failure_rate));
        }
        for d in &self.omitted {
            out.push_str(&format!("# omitted demand {d}: no attempts\n"));
        }
        out
    }
}

/// Pools failures and attempts per demand level and orders rows by demand.
/// Groups sharing a demand level are merged.
pub fn failure_rate_curve(groups: &[(f64, &[MetricsFrame])]) -> FailureCurve {
    let mut pooled: Vec<(f64, u64, u64)> = Vec::new();
    for (demand, frames) in groups {
        let attempts: u64 = frames.iter().map(|f| f.ln_attempts).sum();
        let failures: u64 = frames.iter().map(|f| f.ln_route_failures).sum();
        match pooled.iter_mut().find(|p| p.0 == *demand) {
            Some(p) => {
                p.1 += attempts;
                p.2 += failures;
            }
            None => pooled.push((*demand, attempts, failures)),
        }
    }
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut curve = FailureCurve::default();
    for (demand, attempts, failures) in pooled {
        if attempts == 0 {
            curve.omitted.push(demand);
        } else {
            let failure_rate = failures as f64 / attempts as f64;
            curve.rows.push(FailureRow { demand, attempts, failures, failure_rate });
        }
    }
    curve
}

/// Phase lengths and thresholds for [`hysteresis_probe`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HysteresisSettings {
    pub baseline_epochs: u64,
    pub stress_epochs: u64,
    pub relief_epochs: u64,
    pub collapse_threshold: f64,
    pub collapse_run: usize,
    pub recovery_threshold: f64,
    /// Upper end of the bisection bracket as a multiple of the initial
    /// per-channel liquidity.
    pub max_injection_factor: f64,
    pub bisection_steps: u32,
}

impl Default for HysteresisSettings {
    fn default() -> Self {
        Self {
            baseline_epochs: 20,
            stress_epochs: 40,
            relief_epochs: 40,
            collapse_threshold: 0.9,
            collapse_run: 10,
            recovery_threshold: 0.1,
            max_injection_factor: 10.0,
            bisection_steps: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HysteresisReport {
    pub collapsed: bool,
    /// Failure rate of the baseline phase.
    pub baseline_failure_rate: f64,
    /// Mean per-channel liquidity (both directions) at the start.
    pub initial_channel_liquidity: f64,
    pub channels_before_stress: usize,
    pub channels_after_stress: usize,
    /// Whether injecting the bracket maximum restores service.
    pub recovered: Option<bool>,
    /// Smallest per-channel injection (split evenly across directions) that
    /// brings the relief failure rate below threshold.
    pub min_recovery_liquidity: Option<f64>,
}

impl HysteresisReport {
    pub fn exceeds_initial(&self) -> Option<bool> {
        self.min_recovery_liquidity.map(|m| m > self.initial_channel_liquidity)
    }

    /// Flat `key=value` lines; absent values are written as `none`.
    pub fn to_key_values(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        format!(
            "collapsed={}\nbaseline_failure_rate={}\ninitial_channel_liquidity={}\nchannels_before_stress={}\nchannels_after_stress={}\nrecovered={}\nmin_recovery_liquidity={}\nexceeds_initial={}\n",
            self.collapsed,
            self.baseline_failure_rate,
            self.initial_channel_liquidity,
            self.channels_before_stress,
            self.channels_after_stress,
            opt(self.recovered.map(|b| b.to_string())),
            opt(self.min_recovery_liquidity.map(|v| v.to_string())),
            opt(self.exceeds_initial().map(|b| b.to_string())),
        )
    }
}

fn pooled_failure_rate(frames: &[MetricsFrame]) -> Option<f64> {
    let attempts: u64 = frames.iter().map(|f| f.ln_attempts).sum();
    let failures: u64 = frames.iter().map(|f| f.ln_route_failures).sum();
    (attempts > 0).then(|| failures as f64 / attempts as f64)
}

/// Baseline at relief demand, then stress, then relief with extra liquidity
/// spliced into every surviving channel.
///
/// Collapse means `collapse_run` consecutive stress epochs whose failure rate
/// exceeds `collapse_threshold`. The recovery search bisects the injected
/// amount per channel, rerunning relief from the same post-stress state each
/// time. A relief phase with no channel attempts counts as not recovered.
pub fn hysteresis_probe(
    cfg: &SimConfig,
    stress_demand: f64,
    relief_demand: f64,
    settings: &HysteresisSettings,
) -> Result<HysteresisReport> {
    if !(stress_demand > relief_demand) {
        return Err(Error::Config("stress demand must exceed relief demand".into()));
    }
    let mut sim = Simulation::new(cfg.clone())?;
    let channels = sim.graph().channel_count();
    let initial_channel_liquidity = if channels > 0 { sim.graph().total_capacity() / channels as f64 } else { 0.0 };

    sim.set_demand_override(Some(relief_demand));
    let baseline = sim.run_epochs(settings.baseline_epochs)?;
    let channels_before_stress = sim.graph().channel_count();

    sim.set_demand_override(Some(stress_demand));
    let stress = sim.run_epochs(settings.stress_epochs)?;
    let mut run = 0;
    let mut collapsed = false;
    for f in &stress {
        let hot = f.ln_attempts > 0 && f.ln_route_failures as f64 / f.ln_attempts as f64 > settings.collapse_threshold;
        run = if hot { run + 1 } else { 0 };
        collapsed |= run >= settings.collapse_run;
    }
    let mut report = HysteresisReport {
        collapsed,
        baseline_failure_rate: pooled_failure_rate(&baseline).unwrap_or(0.0),
        initial_channel_liquidity,
        channels_before_stress,
        channels_after_stress: sim.graph().channel_count(),
        recovered: None,
        min_recovery_liquidity: None,
    };
    if !collapsed {
        return Ok(report);
    }

    sim.set_demand_override(Some(relief_demand));
    let recovers = |per_channel: f64| -> Result<bool> {
        let mut trial = sim.clone();
        trial.inject_liquidity(per_channel / 2.0)?;
        let frames = trial.run_epochs(settings.relief_epochs)?;
        Ok(pooled_failure_rate(&frames).is_some_and(|r| r < settings.recovery_threshold))
    };
    let mut hi = settings.max_injection_factor * initial_channel_liquidity;
    if !recovers(hi)? {
        report.recovered = Some(false);
        return Ok(report);
    }
    report.recovered = Some(true);
    let mut lo = 0.0;
    if recovers(lo)? {
        report.min_recovery_liquidity = Some(0.0);
        return Ok(report);
    }
    for _ in 0..settings.bisection_steps {
        let mid = 0.5 * (lo + hi);
        if recovers(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    report.min_recovery_liquidity = Some(hi);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn gini_pairwise(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let diffs: f64 = xs.iter().flat_map(|a| xs.iter().map(move |b| (a - b).abs())).sum();
        diffs / (2.0 * n * n * mean)
    }

    #[test]
    fn topk_examples() {
        let t = ShareTrajectory::new(vec![vec![0.5, 0.3, 0.2], vec![1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(topk_share(&t, 3).unwrap(), vec![1.0, 1.0]);
        assert_eq!(topk_share(&t, 1).unwrap()[1], 1.0);
        assert_relative_eq!(topk_share(&t, 2).unwrap()[0], 0.8);
        assert_eq!(topk_share(&t, 99).unwrap(), vec![1.0, 1.0]);
        assert!(topk_share(&t, 0).is_err());
        assert!(ShareTrajectory::new(vec![vec![0.5, 0.2]]).is_err());
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini(&[3.0, 3.0, 3.0]).unwrap(), 0.0);
        assert_relative_eq!(gini(&[0.0, 7.0]).unwrap(), 0.5);
        assert_relative_eq!(gini(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 0.25, epsilon = 1e-15);
        assert_relative_eq!(gini_pairwise(&[1.0, 2.0, 3.0, 4.0]), 0.25, epsilon = 1e-15);
        assert_eq!(gini(&[0.0, 0.0]), Err(Error::AllZero));
    }

    #[test]
    fn tail_recovers_power_law() {
        // Deterministic quantiles of P(X >= d) = d^-2.
        let n = 200_000;
        let degrees: Vec<u64> = (0..n).map(|i| ((i as f64 + 0.5) / n as f64).powf(-0.5).floor() as u64).collect();
        let TailFit::Estimated { slope, .. } = degree_tail_slope(&degrees) else { panic!("fit expected") };
        assert!((slope + 2.0).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn tail_refuses_thin_support() {
        assert_eq!(degree_tail_slope(&[4; 50]), TailFit::NotEstimable { distinct: 1 });
        let mut star = vec![1u64; 30];
        star.push(30);
        assert_eq!(degree_tail_slope(&star), TailFit::NotEstimable { distinct: 2 });
    }

    fn frame(attempts: u64, failures: u64) -> MetricsFrame {
        MetricsFrame {
            ln_attempts: attempts,
            ln_route_failures: failures,
            ln_count: attempts - failures,
            ..MetricsFrame::default()
        }
    }

    #[test]
    fn failure_curve_examples() {
        let ok = [frame(10, 0)];
        let bad = [frame(10, 10)];
        let quarter = [frame(60, 15), frame(40, 10)];
        let none = [frame(0, 0)];
        let curve = failure_rate_curve(&[(5.0, &bad), (1.0, &ok), (3.0, &quarter), (2.0, &none)]);
        let rates: Vec<(f64, f64)> = curve.rows.iter().map(|r| (r.demand, r.failure_rate)).collect();
        assert_eq!(rates, vec![(1.0, 0.0), (3.0, 0.25), (5.0, 1.0)]);
        assert_eq!(curve.omitted, vec![2.0]);
        assert!(curve.to_csv().starts_with("demand,attempts,failures,failure_rate\n1,10,0,0\n"));
    }

    #[test]
    fn report_key_values() {
        let r = HysteresisReport {
            collapsed: false,
            baseline_failure_rate: 0.0,
            initial_channel_liquidity: 100.0,
            channels_before_stress: 3,
            channels_after_stress: 3,
            recovered: None,
            min_recovery_liquidity: None,
        };
        let text = r.to_key_values();
        assert!(text.contains("collapsed=false\n"));
        assert!(text.contains("min_recovery_liquidity=none\n"));
    }

    proptest! {
        #[test]
        fn gini_matches_pairwise(xs in prop::collection::vec(0.0f64..100.0, 1..40)) {
            prop_assume!(xs.iter().sum::<f64>() > 1e-6);
            let g = gini(&xs).unwrap();
            prop_assert!((g - gini_pairwise(&xs)).abs() < 1e-9);
            prop_assert!((0.0..1.0).contains(&g));
            let mut rev = xs.clone();
            rev.reverse();
            prop_assert!((gini(&rev).unwrap() - g).abs() < 1e-12);
        }

        #[test]
        fn topk_monotone_in_k(raw in prop::collection::vec(0.0f64..1.0, 1..20)) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 0.0);
            let shares: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let t = ShareTrajectory::new(vec![shares.clone()]).unwrap();
            let series: Vec<f64> = (1..=shares.len()).map(|k| topk_share(&t, k).unwrap()[0]).collect();
            prop_assert!(series.windows(2).all(|w| w[0] <= w[1] + 1e-15));
            prop_assert!((series.last().unwrap() - 1.0).abs() < 1e-9);
        }
    }
}
