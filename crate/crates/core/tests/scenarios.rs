use laynet::config::ConfigDoc;
use laynet::engine::{check_frame, run_full, run_many, trace_csv, SimConfig, TRACE_HEADER};
use laynet::metrics::{failure_rate_curve, gini, hysteresis_probe, HysteresisSettings, ShareTrajectory};
use laynet::par::Execution;
use laynet::snapshot::{graph_from_csv, graph_to_csv};

const SCENARIO: &str = r#"
[sim]
seed = 21
epochs = 40
users = 16
hubs = 2
topology = "random"
edge_prob = 0.2

[demand]
schedule = "geometric"
d0 = 1
growth = 1.05

[hub]
pricing_mode = "monopoly"
reserve_marginal = 0.05
fee_cap = 2

[hub.1]
pricing_mode = "competitive"
"#;

#[test]
fn scenario_file_runs_end_to_end() {
    let cfg = ConfigDoc::parse(SCENARIO).unwrap().sim_config().unwrap();
    let out = run_full(&cfg).unwrap();
    assert_eq!(out.frames.len(), 40);
    assert!(out.frames.windows(2).all(|w| w[1].demand > w[0].demand));
    for f in &out.frames {
        check_frame(f, None).unwrap();
    }
    assert!(out.audits.iter().all(|a| a.conserved()));
    let trace = trace_csv(&out.frames);
    assert_eq!(trace.lines().next(), Some(TRACE_HEADER));

    let shares = ShareTrajectory::new(out.shares.clone()).unwrap();
    assert_eq!(shares.to_csv().lines().count(), 1 + 40 * cfg.node_count());

    let text = graph_to_csv(&out.graph);
    assert_eq!(graph_to_csv(&graph_from_csv(&text).unwrap()), text);
    let g = gini(&out.graph.outbound_by_node()).unwrap();
    assert!((0.0..1.0).contains(&g));
}

#[test]
fn batch_modes_agree() {
    let cfgs: Vec<SimConfig> =
        (0..4).map(|seed| SimConfig { seed, epochs: 20, user_count: 12, ..SimConfig::default() }).collect();
    let traces =
        |exec| -> Vec<String> { run_many(&cfgs, exec).into_iter().map(|r| trace_csv(&r.unwrap().frames)).collect() };
    let seq = traces(Execution::Sequential);
    assert_eq!(seq, traces(Execution::Parallel));
    assert_ne!(seq[0], seq[1]);
}

#[test]
fn failure_curve_orders_by_demand() {
    let runs: Vec<(f64, Vec<_>)> = [4.0, 1.0, 2.0]
        .into_iter()
        .map(|d0| {
            let cfg = SimConfig {
                epochs: 10,
                user_count: 10,
                demand_schedule: laynet::engine::DemandSchedule::Constant { d0 },
                ..SimConfig::default()
            };
            (d0, run_full(&cfg).unwrap().frames)
        })
        .collect();
    let groups: Vec<(f64, &[_])> = runs.iter().map(|(d, f)| (*d, f.as_slice())).collect();
    let curve = failure_rate_curve(&groups);
    let demands: Vec<f64> = curve.rows.iter().map(|r| r.demand).collect();
    assert_eq!(demands, [1.0, 2.0, 4.0]);
}

#[test]
fn hysteresis_report_is_flat_text() {
    let cfg = SimConfig { epochs: 1, user_count: 8, initial_hub_count: 1, ..SimConfig::default() };
    let settings = HysteresisSettings { baseline_epochs: 3, stress_epochs: 3, relief_epochs: 3, ..Default::default() };
    let r = hysteresis_probe(&cfg, 5.0, 1.0, &settings).unwrap();
    let kv = r.to_key_values();
    assert!(kv.lines().all(|l| l.split_once('=').is_some()));
    assert!(kv.starts_with(&format!("collapsed={}\n", r.collapsed)));
    assert!(hysteresis_probe(&cfg, 1.0, 1.0, &settings).is_err());
}
