use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use invman_cli::{cmd_check, cmd_flow, cmd_generate, cmd_reduce, load_config, Assertion, CliResult, CommandOutput, Kind};

/// Invariant manifolds of linear time-varying systems dy/dt = Q(t)y.
///
/// Reports go to stdout as JSON, summaries to stderr. Exit codes: 0 success,
/// 1 requested verdict or precondition fails, 2 invalid input or I/O error,
/// 3 numerical failure. Set INVMAN_LOG (e.g. `debug`) for log output.
#[derive(Debug, Parser)]
#[command(name = "invman", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate the three invariance verdicts on the configured grid.
    Check {
        #[arg(long)]
        config: PathBuf,
        /// Verdict that decides the exit code.
        #[arg(long = "assert", value_enum, default_value = "joint")]
        assertion: Assertion,
    },
    /// Sample the reduced matrix P(t) and check the conjugacy relations.
    Reduce {
        #[arg(long)]
        config: PathBuf,
    },
    /// Integrate the flow and measure drift off both manifolds.
    Flow {
        #[arg(long)]
        config: PathBuf,
        /// Directory for flow.csv with every sample.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write a scenario config with known verdicts.
    Generate {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<CommandOutput> {
    match cli.command {
        Command::Check { config, assertion } => cmd_check(&load_config(&config)?, assertion),
        Command::Reduce { config } => cmd_reduce(&load_config(&config)?),
        Command::Flow { config, csv } => cmd_flow(&load_config(&config)?, csv.as_deref()),
        Command::Generate { kind, seed, out } => cmd_generate(kind.into(), seed, &out),
    }
}

/// `a: b: c` over the error chain, skipping causes already spelled out by
/// the message above them.
fn render(err: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if msg.contains(&text) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&text);
    }
    msg
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("INVMAN_LOG")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            let json = serde_json::to_string_pretty(&out.report).expect("report serializes");
            // a closed pipe (e.g. `| head`) is not an error worth reporting
            let _ = writeln!(io::stdout().lock(), "{json}");
            eprint!("{}", out.summary);
            ExitCode::from(out.exit)
        }
        Err(e) => {
            eprintln!("error: {}", render(e.error()));
            ExitCode::from(e.exit_code())
        }
    }
}
