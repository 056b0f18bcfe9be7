use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use laynet::par::Execution;
use laynet_cli::*;

#[derive(Parser)]
#[command(name = "laynet", version, about = "Base-ledger and payment-channel overlay simulator")]
struct Cli {
    /// Run sub-runs one at a time.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write trace.csv, shares.csv, final_graph.csv.
    Run { config: PathBuf, out: PathBuf },
    /// Re-run a scenario for every value of one key and several seeds.
    Sweep {
        config: PathBuf,
        /// Dotted key such as `demand.d0`.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        out: PathBuf,
    },
    /// Compare the fast solvers against exhaustive search on random instances.
    OracleCheck {
        #[arg(long, default_value_t = 200)]
        instances: usize,
        #[arg(long, default_value_t = 8)]
        max_nodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write the analytic cost curves without simulating.
    Curves { config: PathBuf, out: PathBuf },
    /// Rewrite the seed-derived oracle fixtures.
    #[cfg(feature = "fixtures")]
    RegenFixtures { dir: Option<PathBuf> },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("LAYNET_LOG", "error"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_PARSE } else { EXIT_OK });
        }
    };
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    let mut out = io::stdout().lock();
    let result = match cli.command {
        Command::Run { config, out: dir } => cmd_run(&config, &dir, &mut out),
        Command::Sweep { config, param, values, seeds, out: dir } => {
            cmd_sweep(&config, &param, &values, seeds, &dir, exec, &mut out)
        }
        Command::OracleCheck { instances, max_nodes, seed } => {
            cmd_oracle_check(instances, max_nodes, seed, exec, &mut out)
        }
        Command::Curves { config, out: dir } => cmd_curves(&config, &dir, &mut out),
        #[cfg(feature = "fixtures")]
        Command::RegenFixtures { dir } => {
            cmd_regen_fixtures(&dir.unwrap_or_else(laynet_oracle::fixtures_dir), &mut out)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
