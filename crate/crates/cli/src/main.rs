//! `sllm run <scenario>`: batch runs writing CSV artifacts and a manifest.

mod config;
mod failure;
mod output;
mod scenarios;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde_json::json;

use config::{Config, Overrides, Scenario};
use failure::Failure;

const VERSION: &str = env!("SLLM_VERSION");

#[derive(Debug, Parser)]
#[command(name = "sllm", version = VERSION, about = "Laser Liouvillian spectra, steady states and trajectories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write its artifacts.
    Run(RunArgs),
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    scenario: Scenario,
    /// TOML config; scenario defaults apply to omitted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<String>,
    /// Worker threads for all parallel work (default: one per core).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_max: Option<usize>,
}

fn execute(args: RunArgs) -> Result<PathBuf, Failure> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let scenario = args.scenario;
    let raw = match &args.config {
        Some(path) => Config::load(path, scenario)?,
        None => Config::default(),
    };
    let overrides = Overrides {
        output_dir: args.output_dir,
        seed: args.seed,
        n_max: args.n_max,
    };
    let mut cfg = raw.resolve(scenario, &overrides)?;
    if args.threads == Some(0) {
        return Err(Failure::Validation("--threads must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads.unwrap_or(0))
        .build()
        .map_err(|e| Failure::Run(format!("cannot start worker pool: {e}")))?;
    let threads = pool.current_num_threads();

    // Nothing touches the filesystem until the scenario has succeeded.
    let outcome = pool.install(|| scenarios::run(scenario, &mut cfg))?;

    let dir = PathBuf::from(cfg.output_dir.clone().expect("resolved config"));
    std::fs::create_dir_all(&dir).map_err(|e| Failure::Io(format!("cannot create {}: {e}", dir.display())))?;
    outcome.artifacts.write(&dir)?;
    let manifest = json!({
        "tool": "sllm",
        "version": VERSION,
        "scenario": scenario.name(),
        "status": if outcome.check_failure.is_some() { "check_failed" } else { "ok" },
        "config": cfg,
        "threads": threads,
        "started_unix_seconds": started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
        "wall_clock_seconds": clock.elapsed().as_secs_f64(),
        "outputs": outcome.artifacts.names(),
        "summary": outcome.summary,
    });
    write_manifest(&dir, &manifest)?;
    match outcome.check_failure {
        Some(msg) => Err(Failure::Check(msg)),
        None => Ok(dir),
    }
}

fn write_manifest(dir: &Path, manifest: &serde_json::Value) -> Result<(), Failure> {
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest).map_err(|e| Failure::Io(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version.
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let f = Failure::Config(e.render().to_string().trim().to_string());
            eprintln!("{}", f.record());
            return ExitCode::from(f.exit_code() as u8);
        }
    };
    let Command::Run(args) = cli.command;
    match execute(args) {
        Ok(dir) => {
            println!("{}", json!({ "status": "ok", "manifest": dir.join("manifest.json") }));
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{}", f.record());
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
