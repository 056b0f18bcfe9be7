//! Subcommand implementations behind the `laynet` binary.
//!
//! Each command returns a process exit code: 0 success, 1 check failure,
//! 2 parse error, 3 validation error.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use laynet::check::{oracle_check, CHECK_NODE_CAP};
use laynet::config::ConfigDoc;
use laynet::engine::{run_full, trace_csv, SimConfig};
use laynet::equilibrium::{cost_curves, cost_curves_csv};
use laynet::metrics::ShareTrajectory;
use laynet::overlay::{NodeId, OverlayGraph};
use laynet::par::Execution;
use laynet::routing::Path as Route;
use laynet::snapshot::graph_to_csv;
use laynet::sweep::{sweep, sweep_curves_csv, sweep_failure_curve};
use laynet::Error;
use sha2::{Digest, Sha256};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_PARSE: u8 = 2;
pub const EXIT_INVALID: u8 = 3;

/// Bumped whenever a CSV header or manifest key changes.
pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.txt";

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

type CmdResult = Result<u8, Failure>;

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::Parse { .. }) { EXIT_PARSE } else { EXIT_INVALID };
        Failure { code, message: e.to_string() }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure { code: EXIT_INVALID, message: format!("{}: {e}", path.display()) }
}

/// Config text and its parsed form. An unreadable file counts as a parse error.
fn load(config: &Path) -> Result<(String, ConfigDoc), Failure> {
    let text = fs::read_to_string(config)
        .map_err(|e| Failure { code: EXIT_PARSE, message: format!("{}: {e}", config.display()) })?;
    let doc = ConfigDoc::parse(&text)?;
    Ok((text, doc))
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), Failure> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_failure(dir, e))?;
    tmp.write_all(contents.as_bytes()).map_err(|e| io_failure(path, e))?;
    tmp.persist(path).map_err(|e| io_failure(path, e.error))?;
    Ok(())
}

pub fn config_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Provenance record written after every other output of a command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config_path: PathBuf,
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub tool_version: String,
    pub config_hash: String,
    pub files: Vec<String>,
}

impl RunManifest {
    fn new(command: &str, config: &Path, out: &Path, text: &str) -> Self {
        Self {
            command: command.into(),
            config_path: config.to_path_buf(),
            output_dir: out.to_path_buf(),
            seeds: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config_hash: config_hash(text),
            files: Vec::new(),
        }
    }

    pub fn to_text(&self) -> String {
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        format!(
            "schema_version={SCHEMA_VERSION}\ntool_version={}\ncommand={}\nconfig_path={}\noutput_dir={}\nconfig_hash=sha256:{}\nseeds={}\nfiles={}\n",
            self.tool_version,
            self.command,
            self.config_path.display(),
            self.output_dir.display(),
            self.config_hash,
            seeds.join(","),
            self.files.join(","),
        )
    }

    fn write(&self) -> Result<(), Failure> {
        write_atomic(&self.output_dir.join(MANIFEST_FILE), &self.to_text())
    }
}

/// Trace, share trajectory and final graph of one run, written under `dir`.
fn write_run(dir: &Path, cfg: &SimConfig) -> Result<Vec<String>, Failure> {
    let out = run_full(cfg)?;
    let shares = ShareTrajectory::new(out.shares)?;
    let files = [
        ("trace.csv", trace_csv(&out.frames)),
        ("shares.csv", shares.to_csv()),
        ("final_graph.csv", graph_to_csv(&out.graph)),
    ];
    for (name, body) in &files {
        write_atomic(&dir.join(name), body)?;
    }
    Ok(files.iter().map(|(n, _)| n.to_string()).collect())
}

pub fn cmd_run(config: &Path, out: &Path, stdout: &mut dyn Write) -> CmdResult {
    let (text, doc) = load(config)?;
    let cfg = doc.sim_config()?;
    log::info!("running {} epochs with seed {}", cfg.epochs, cfg.seed);
    let mut manifest = RunManifest::new("run", config, out, &text);
    manifest.seeds.push(cfg.seed);
    manifest.files = write_run(out, &cfg)?;
    manifest.write()?;
    let _ = writeln!(stdout, "status=ok\nseed={}\nepochs={}", cfg.seed, cfg.epochs);
    Ok(EXIT_OK)
}

pub fn cmd_sweep(
    config: &Path,
    param: &str,
    values: &[String],
    seeds: usize,
    out: &Path,
    exec: Execution,
    stdout: &mut dyn Write,
) -> CmdResult {
    let (text, doc) = load(config)?;
    let runs = sweep(&doc, param, values, seeds, exec)?;
    let mut manifest = RunManifest::new("sweep", config, out, &text);
    for r in &runs {
        let dir = out.join("runs").join(format!("{param}={}", r.value)).join(format!("seed-{}", r.seed));
        log::debug!("writing {}", dir.display());
        let shares = ShareTrajectory::new(r.output.shares.clone())?;
        write_atomic(&dir.join("trace.csv"), &trace_csv(&r.output.frames))?;
        write_atomic(&dir.join("shares.csv"), &shares.to_csv())?;
        write_atomic(&dir.join("final_graph.csv"), &graph_to_csv(&r.output.graph))?;
        if !manifest.seeds.contains(&r.seed) {
            manifest.seeds.push(r.seed);
        }
    }
    write_atomic(&out.join("curves.csv"), &sweep_curves_csv(&runs))?;
    write_atomic(&out.join("failure_curve.csv"), &sweep_failure_curve(&runs).to_csv())?;
    manifest.files = vec!["runs".into(), "curves.csv".into(), "failure_curve.csv".into()];
    manifest.write()?;
    let _ = writeln!(stdout, "status=ok\nsub_runs={}\nvalues={}\nseeds={seeds}", runs.len(), values.len());
    Ok(EXIT_OK)
}

pub fn cmd_curves(config: &Path, out: &Path, stdout: &mut dyn Write) -> CmdResult {
    let (text, doc) = load(config)?;
    let base = doc.base_params()?;
    let (ln, tx_count) = doc.ln_fee_model()?;
    let rows = cost_curves(&base, &ln, tx_count, &doc.curve_grid()?)?;
    write_atomic(&out.join("curves.csv"), &cost_curves_csv(&rows))?;
    let mut manifest = RunManifest::new("curves", config, out, &text);
    manifest.files = vec!["curves.csv".into()];
    manifest.write()?;
    let _ = writeln!(stdout, "status=ok\nrows={}", rows.len());
    Ok(EXIT_OK)
}

/// Runs the equivalence checks with an arbitrary router in place of the
/// production one.
pub fn cmd_oracle_check_with<F>(
    instances: usize,
    max_nodes: usize,
    seed: u64,
    exec: Execution,
    finder: F,
    stdout: &mut dyn Write,
) -> CmdResult
where
    F: Fn(&OverlayGraph, NodeId, NodeId, f64, f64) -> laynet::Result<Option<Route>> + Sync + Send,
{
    if max_nodes > CHECK_NODE_CAP {
        return Err(Failure {
            code: EXIT_INVALID,
            message: format!("max_nodes {max_nodes} is above the oracle cap of {CHECK_NODE_CAP}"),
        });
    }
    let report = oracle_check(instances, max_nodes, seed, exec, finder)?;
    let _ = writeln!(
        stdout,
        "status={}\nroute_instances={}\nrebalance_instances={}\nstrict_greedy_gaps={}\nmismatches={}",
        if report.passed() { "ok" } else { "mismatch" },
        report.route_instances,
        report.rebalance_instances,
        report.strict_gaps,
        report.mismatches.len(),
    );
    match report.mismatches.first() {
        None => Ok(EXIT_OK),
        Some(m) => {
            log::error!("{}", m.describe());
            let _ = write!(stdout, "--- counterexample\n{}", m.instance().to_text());
            Ok(EXIT_CHECK_FAILED)
        }
    }
}

pub fn cmd_oracle_check(
    instances: usize,
    max_nodes: usize,
    seed: u64,
    exec: Execution,
    stdout: &mut dyn Write,
) -> CmdResult {
    cmd_oracle_check_with(instances, max_nodes, seed, exec, laynet::routing::best_path, stdout)
}

#[cfg(feature = "fixtures")]
pub fn cmd_regen_fixtures(dir: &Path, stdout: &mut dyn Write) -> CmdResult {
    for path in laynet_oracle::regenerate_fixtures(dir)? {
        let _ = writeln!(stdout, "wrote={}", path.display());
    }
    Ok(EXIT_OK)
}
