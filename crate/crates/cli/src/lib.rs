//! Batch front end for `lich-core`: TOML configs, scenarios and CSV/SVG reports.

pub mod config;
pub mod report;
pub mod scenarios;

use std::path::PathBuf;

use clap::Parser;

use config::load_config;
use scenarios::{run_scenario, ScenarioKind, EXIT_CONFIG, EXIT_OK};

#[derive(Debug, Parser)]
#[command(name = "lich", about = "p-Laplacian Lichnerowicz laboratory")]
pub struct Args {
    /// landscape, eigen, thresholds, solve, nonexist or continuity
    pub scenario: String,
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `solver.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Parse `argv`, run, print and return the exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let Some(kind) = ScenarioKind::parse(&args.scenario) else {
        eprintln!("config error: unknown scenario {:?}", args.scenario);
        return EXIT_CONFIG;
    };
    let mut cfg = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Some(name) = &cfg.scenario.name {
        if ScenarioKind::parse(name) != Some(kind) {
            eprintln!("config error: config is for scenario {name:?}, command line asks for {:?}", args.scenario);
            return EXIT_CONFIG;
        }
    }
    if let Some(s) = args.seed {
        cfg.solver.seed = s;
    }
    let dir = args.out.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    match run_scenario(kind, &cfg, &dir) {
        Ok(out) => {
            for m in &out.messages {
                println!("{m}");
            }
            out.code
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
