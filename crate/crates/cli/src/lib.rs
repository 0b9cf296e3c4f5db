//! Command-line experiments: simulators, closed forms and symbolic checks
//! driven from one config, each writing a self-describing output directory.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::time::Instant;

use serde_json::json;

use crate::commands::CommandResult;
use crate::config::{Cli, Command, ExperimentConfig};
use crate::error::CliError;
use crate::output::{Gate, OutputDir};

/// Outcome of one invocation.
#[derive(Debug)]
pub struct RunReport {
    pub gates: Vec<Gate>,
    pub out: std::path::PathBuf,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.gates.iter().all(|g| g.pass)
    }
}

/// Resolves the config, runs the command on a pool of `workers` threads
/// and writes `summary.json` next to the tables.
pub fn run(cli: &Cli) -> Result<RunReport, CliError> {
    let cfg = ExperimentConfig::resolve(cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| execute(&cli.command, &cfg))
}

fn execute(command: &Command, cfg: &ExperimentConfig) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let mut out = OutputDir::create(cfg)?;
    let CommandResult { gates, results, phases } = match command {
        Command::SimulateMoran => commands::simulate_moran(cfg, &mut out)?,
        Command::SimulateFamilies => commands::simulate_families(cfg, &mut out)?,
        Command::SimulateSde => commands::simulate_sde(cfg, &mut out)?,
        Command::Equilibrium => commands::equilibrium(cfg, &mut out)?,
        Command::AnalyticCurves => commands::analytic_curves(cfg, &mut out)?,
        Command::VerifyGenerators(_) => commands::verify_generators(cfg, &mut out)?,
        Command::Compare(_) => commands::compare(cfg, &mut out)?,
        Command::ReproduceFigures(_) => commands::reproduce_figures(cfg, &mut out)?,
    };
    let phases: serde_json::Map<String, serde_json::Value> = phases.into_iter().map(|(k, v)| (k, json!(v))).collect();
    let summary = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "command": cfg.command,
        "seed": cfg.seed,
        "config": cfg,
        "timings": { "total_seconds": start.elapsed().as_secs_f64(), "phases": phases },
        "gates": gates,
        "pass": gates.iter().all(|g| g.pass),
        "results": results,
    });
    out.write_json("summary.json", &summary)?;
    Ok(RunReport { gates, out: out.root().to_path_buf() })
}
