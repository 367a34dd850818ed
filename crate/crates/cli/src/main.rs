use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod evaluate;
mod exit;
mod manifest;
mod report;
mod run;
mod svg;

use exit::Exit;

#[derive(Parser)]
#[command(
    name = "ael",
    version,
    about = "Evolve and benchmark constructive TSP heuristics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an evolution and write its artifacts to an output directory.
    Run(run::RunArgs),
    /// Benchmark one algorithm over several instance sizes.
    Evaluate(evaluate::EvaluateArgs),
    /// Convergence CSV and route plots for a finished run.
    Report(report::ReportArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run::cmd_run(args),
        Command::Evaluate(args) => evaluate::cmd_evaluate(args),
        Command::Report(args) => report::cmd_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Exit { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}
