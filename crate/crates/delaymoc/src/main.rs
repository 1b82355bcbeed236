//! `delaymoc`: scenario-driven analysis of the delayed-feedback three-box
//! overturning model.
//!
//! Exit codes: 0 on success, 2 on configuration errors (bad scenario or
//! params file), 3 when the run completed but some work items failed.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use delaymoc::scenario::{load_scenario, run_scenario};

#[derive(Parser)]
#[command(name = "delaymoc", version, about = "Delayed overturning model analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a scenario file without running it.
    Validate {
        /// Scenario JSON file.
        scenario: PathBuf,
        /// Params file overriding the one named in the scenario.
        #[arg(long)]
        seed_params: Option<PathBuf>,
    },
    /// Run a scenario and write its datasets.
    Run {
        /// Scenario JSON file.
        scenario: PathBuf,
        /// Output root; artifacts land in <out>/<scenario name>/.
        /// Defaults to $DELAYMOC_OUT, then ./out.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for parallel sections (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Params file overriding the one named in the scenario.
        #[arg(long)]
        seed_params: Option<PathBuf>,
    },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

fn out_root(cli_out: Option<PathBuf>) -> PathBuf {
    cli_out
        .or_else(|| std::env::var_os("DELAYMOC_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate {
            scenario,
            seed_params,
        } => match load_scenario(&scenario, seed_params.as_deref()) {
            Ok(sc) => {
                println!("ok: scenario '{}' is valid", sc.name);
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_CONFIG)
            }
        },
        Command::Run {
            scenario,
            out,
            workers,
            seed_params,
        } => {
            if let Some(n) = workers {
                if let Err(e) = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                {
                    eprintln!("error: cannot configure {n} workers: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            }
            let sc = match load_scenario(&scenario, seed_params.as_deref()) {
                Ok(sc) => sc,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            match run_scenario(&sc, &out_root(out)) {
                Ok(outcome) => {
                    for (status, n) in &outcome.report.status_counts {
                        println!("{status}: {n}");
                    }
                    println!(
                        "wrote {} artifacts to {} in {:.1}s",
                        outcome.report.artifacts.len(),
                        outcome.out_dir.display(),
                        outcome.report.wall_time_s
                    );
                    if outcome.partial_failure {
                        for f in &outcome.report.failures {
                            eprintln!("failed: {f}");
                        }
                        ExitCode::from(EXIT_PARTIAL)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_PARTIAL)
                }
            }
        }
    }
}
