// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vfteleop::harness::{recompute_metrics, run_matrix, serve_blocking, Scenario};

#[derive(Parser)]
#[command(name = "vfteleop", version, about = "Virtual-fixture teleoperation simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every mode and seed of one or more scenarios.
    Run {
        #[arg(long, required = true, num_args = 1..)]
        scenario: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Rescore saved trial records and rewrite the report tables.
    Metrics {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Host a live session over WebSocket.
    Serve {
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long)]
        scenario: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.cmd {
        Command::Run { scenario, out, jobs } => run_matrix(&scenario, &out, jobs).map(|s| {
            for sc in &s.scenarios {
                println!("## {}\n", sc.name);
                if let Some(r) = &sc.report {
                    println!("{}", r.to_markdown());
                }
            }
            if s.failures > 0 {
                eprintln!("{} trial(s) failed; see {}", s.failures, out.join("summary.json").display());
            }
            s.ok()
        }),
        Command::Metrics { input } => recompute_metrics(&input).map(|all| {
            for sc in &all {
                println!("## {}\n", sc.name);
                if let Some(r) = &sc.report {
                    println!("{}", r.to_markdown());
                }
            }
            true
        }),
        Command::Serve { port, scenario } => Scenario::load(&scenario).and_then(|s| serve_blocking(port, &s)).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
