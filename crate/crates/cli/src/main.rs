//! `harvest`: command-line front end for the impulse-control solver.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CliError, Outcome};
use config::ProblemConfig;
use output::{Format, Sink, Timings};

#[derive(Parser)]
#[command(name = "harvest", version, about = "Optimal harvesting: free boundaries, value function and Monte Carlo checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML problem configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for simulation and sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// RNG seed (overrides simulate.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Artifact format (overrides output.format).
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Classify the case, compute the boundaries and the value function.
    Solve,
    /// Simulate beta-gamma strategies and compare with the closed forms.
    Simulate,
    /// Solve over a log-spaced grid of fixed costs.
    Sweep,
    /// Check the HJB conditions on the verification grid.
    Verify,
    /// Print the default configuration.
    Defaults,
    /// List the built-in models and payoffs.
    Catalogue,
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ProblemConfig::load(p).map_err(CliError::Config)?,
        None => ProblemConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.simulate.seed = s;
    }
    if let Some(f) = cli.format {
        cfg.output.format = f;
    }
    match cli.command {
        Command::Defaults => return Ok(Outcome { passed: true, summary: ProblemConfig::default().to_toml() }),
        Command::Catalogue => {
            let summary = if cli.format == Some(Format::Json) {
                serde_json::to_string_pretty(&serde_json::json!({ "models": commands::MODELS, "payoffs": commands::PAYOFFS })).unwrap()
            } else {
                commands::catalogue_text()
            };
            return Ok(Outcome { passed: true, summary });
        }
        _ => {}
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(e.to_string()))?;
    }
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let mut sink = Sink::new(&dir, cfg.output.format).map_err(CliError::Output)?;
    let name = match cli.command {
        Command::Solve => "solve",
        Command::Simulate => "simulate",
        Command::Sweep => "sweep",
        _ => "verify",
    };
    let mut t = Timings::new(name);
    let outcome = match cli.command {
        Command::Solve => commands::solve(&cfg, &mut sink, &mut t),
        Command::Simulate => commands::simulate(&cfg, &mut sink, &mut t),
        Command::Sweep => commands::sweep(&cfg, &mut sink, &mut t),
        _ => commands::verify_cmd(&cfg, &mut sink, &mut t),
    }?;
    sink.timings(&t).map_err(CliError::Output)?;
    let files: Vec<String> = sink.written().iter().map(|p| p.display().to_string()).collect();
    Ok(Outcome { passed: outcome.passed, summary: format!("{}\nwrote {}", outcome.summary, files.join(", ")) })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(o) => {
            // a closed pipe (e.g. `| head`) is not an error
            let _ = writeln!(std::io::stdout(), "{}", o.summary);
            if o.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("checks did not pass");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
