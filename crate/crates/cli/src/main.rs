//! `wpm`: batch driver for the WP(m,n) mirror symmetry checks.

mod config;
mod explain;
mod report;
mod tasks;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{RunConfig, Task};

#[derive(Parser)]
#[command(name = "wpm", version, about = "Verify equivariant mirror symmetry identities for WP(m,n)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured tasks and write a JSON report.
    Run {
        /// JSON run configuration.
        #[arg(long)]
        config: String,
        /// Task to run; repeatable, replaces the config's task list.
        #[arg(long = "task")]
        tasks: Vec<String>,
        /// Report destination; defaults to the config's `output`, else stdout.
        #[arg(long)]
        out: Option<String>,
    },
    /// Print the identity a task checks.
    Explain { check: String },
}

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Explain { check } => match check.parse::<Task>() {
            Ok(task) => {
                println!("{task}: {}", explain::explain(task));
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}; known checks: {}", Task::ALL.map(|t| t.name()).join(", "));
                ExitCode::from(EXIT_CONFIG)
            }
        },
        Command::Run { config, tasks, out } => {
            let mut cfg = match RunConfig::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            if !tasks.is_empty() {
                match tasks.iter().map(|t| t.parse()).collect::<Result<Vec<Task>, _>>() {
                    Ok(t) => cfg.tasks = t,
                    Err(e) => {
                        eprintln!("error: {e}");
                        return ExitCode::from(EXIT_CONFIG);
                    }
                }
            }
            if cfg.tasks.is_empty() {
                cfg.tasks = vec![Task::VerifyAll];
            }
            let report = tasks::run(&cfg);
            let text = report.render();
            match out.or(cfg.output.clone()) {
                Some(path) => {
                    if let Err(e) = std::fs::write(&path, &text) {
                        eprintln!("error: cannot write {path}: {e}");
                        return ExitCode::from(EXIT_CONFIG);
                    }
                    for c in report.checks.iter().filter(|c| !c.pass) {
                        eprintln!("FAIL {}/{}: {}", c.task, c.name, c.error.as_deref().unwrap_or("residual above tolerance"));
                    }
                }
                None => print!("{text}"),
            }
            if report.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAIL)
            }
        }
    }
}
