//! `finlab` — run Finsler-laboratory scenarios from TOML configs.
//!
//! Exit codes: 0 all checks passed, 2 at least one inequality came back red,
//! 1 execution or config error.

mod runner;
mod svg;

use clap::{Parser, Subcommand};
use finsler_core::config::ScenarioConfig;
use std::path::PathBuf;
use std::process::ExitCode;

/// Bundled example scenarios, compiled into the binary so `finlab run
/// <name>` works without any files on disk.
const BUNDLED: &[(&str, &str, &str)] = &[
    (
        "flat-euclidean",
        "Euclidean plane, Lebesgue measure: full experiment showcase",
        include_str!("../scenarios/flat-euclidean.toml"),
    ),
    (
        "randers-const",
        "non-reversible Randers norm with constant drift b = (0.5, 0)",
        include_str!("../scenarios/randers-const.toml"),
    ),
    (
        "quartic",
        "reversible non-Riemannian quartic norm, epsilon = 0.1",
        include_str!("../scenarios/quartic.toml"),
    ),
    (
        "gaussian-weighted",
        "Euclidean norm with Gaussian measure density e^(-|x|^2/2)",
        include_str!("../scenarios/gaussian-weighted.toml"),
    ),
    (
        "sphere-patch",
        "stereographic chart of the round sphere (flag curvature +1)",
        include_str!("../scenarios/sphere-patch.toml"),
    ),
];

#[derive(Parser)]
#[command(name = "finlab", version, about = "numerical laboratory for Finsler measure spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario (a TOML path or a bundled name) and write artifacts.
    Run {
        /// Path to a scenario TOML, or one of the names from `finlab list`.
        config: String,
        /// Output directory (default: out/<scenario name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Size of the worker thread pool (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Omit the timestamp from manifest.json (for byte-stable output).
        #[arg(long)]
        no_timestamp: bool,
    },
    /// List the bundled example scenarios.
    List,
    /// Parse and validate a config without running anything.
    Validate {
        /// Path to a scenario TOML, or a bundled name.
        config: String,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            config,
            out,
            seed,
            threads,
            no_timestamp,
        } => {
            if let Some(n) = threads {
                // ignore the error if a pool already exists (tests)
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            let mut cfg = match load_config(&config) {
                Ok(cfg) => cfg,
                Err(msg) => return fail(&msg),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let out_dir = out
                .or_else(|| cfg.output.clone().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
            match runner::run_scenario(&cfg, &out_dir, !no_timestamp) {
                Ok(outcome) => {
                    println!(
                        "wrote {} files to {}",
                        outcome.files.len(),
                        outcome.out_dir.display()
                    );
                    println!(
                        "{} reports, {} red flags",
                        outcome.reports.reports.len(),
                        outcome.red_flags.len()
                    );
                    for flag in &outcome.red_flags {
                        println!("RED {flag}");
                    }
                    if outcome.red_flags.is_empty() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(2)
                    }
                }
                Err(e) => fail(&error_chain(&e)),
            }
        }
        Command::List => {
            for (name, blurb, _) in BUNDLED {
                println!("{name:<18} {blurb}");
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match load_config(&config) {
            Ok(cfg) => {
                println!(
                    "ok: scenario `{}` ({} experiments, h = {})",
                    cfg.name,
                    cfg.experiments.len(),
                    cfg.h
                );
                ExitCode::SUCCESS
            }
            Err(msg) => fail(&msg),
        },
    }
}

/// A config argument is first tried as a file path, then as a bundled name.
fn load_config(arg: &str) -> Result<ScenarioConfig, String> {
    let source = if std::path::Path::new(arg).is_file() {
        std::fs::read_to_string(arg).map_err(|e| format!("cannot read {arg}: {e}"))?
    } else if let Some((_, _, src)) = BUNDLED.iter().find(|(name, _, _)| *name == arg) {
        (*src).to_string()
    } else {
        return Err(format!(
            "`{arg}` is neither a readable file nor a bundled scenario (see `finlab list`)"
        ));
    };
    ScenarioConfig::from_toml_str(&source).map_err(|e| e.to_string())
}

fn error_chain(e: &dyn std::error::Error) -> String {
    let mut msg = e.to_string();
    let mut src = e.source();
    while let Some(s) = src {
        msg.push_str(&format!("\n  caused by: {s}"));
        src = s.source();
    }
    msg
}

fn fail(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(1)
}
