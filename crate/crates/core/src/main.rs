use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use epw::config::{RunConfig, SCENARIOS};
use epw::harness::execute;
use serde_json::json;

/// Damped elastic wave experiments: symbol checks, periodic orbits,
/// perturbation decay and kernel probes.
#[derive(Debug, Parser)]
#[command(name = "epw", version)]
struct Cli {
    /// One of: verify-symbols, solve-periodic, simulate-cauchy,
    /// measure-decay, probe-kernels, probe-regularity. Defaults to the
    /// config's `scenario` key.
    scenario: Option<String>,
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config's `output`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Seed for randomized suites (overrides the config's `seed`).
    #[arg(long)]
    seed: Option<u64>,
}

fn fail(code: u8, kind: &str, message: String) -> ExitCode {
    eprintln!("{}", json!({ "error": kind, "message": message }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut config = match &cli.config {
        Some(p) => match RunConfig::load(p) {
            Ok(c) => c,
            Err(e) => return fail(1, e.kind(), e.to_string()),
        },
        None => RunConfig::default(),
    };
    if let Some(s) = cli.scenario {
        config.scenario = s;
    }
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(o) = cli.out {
        config.output = o;
    }
    if let Some(n) = cli.workers {
        if n == 0 {
            return fail(1, "config", "--workers must be at least 1".into());
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(1, "config", format!("cannot size worker pool: {e}"));
        }
    }
    if !SCENARIOS.contains(&config.scenario.as_str()) {
        eprintln!("valid scenarios: {}", SCENARIOS.join(", "));
    }
    let out = config.output.clone();
    ExitCode::from(execute(&config, &out) as u8)
}
