use std::path::PathBuf;
use std::process::ExitCode;

use bohmian::cli::{self, CliError, RunOptions, OUTPUT_ENV};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bohmian", version, about = "Run and verify pilot-wave scenarios")]
struct Args {
    /// Worker threads for ensemble integration.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Run directory (overrides the configuration).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Sampling seed (overrides the configuration).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Root directory for runs without an explicit output directory.
    #[arg(long, env = OUTPUT_ENV, hide_env_values = true)]
    output_root: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a TOML configuration.
    Run { config: PathBuf },
    /// Recompute the checks of a stored run and compare them with its report.
    Verify { dir: PathBuf },
    /// List the available scenarios.
    ListScenarios {
        #[arg(long)]
        json: bool,
    },
}

fn execute(args: Args) -> Result<i32, CliError> {
    if let Some(n) = args.workers {
        cli::configure_workers(n)?;
    }
    match args.command {
        Command::Run { config } => {
            let opts = RunOptions { output: args.output, seed: args.seed, output_root: args.output_root };
            let outcome = cli::run(&config, &opts)?;
            eprint!("{}", cli::format_checks(&outcome.report.checks));
            eprintln!("report: {}", outcome.dir.join(cli::REPORT_FILE).display());
            Ok(outcome.exit_code())
        }
        Command::Verify { dir } => {
            let report = cli::verify(&dir)?;
            eprintln!("verified {} checks of {} in {}", report.checks.len(), report.scenario_id, dir.display());
            Ok(0)
        }
        Command::ListScenarios { json } => {
            print!("{}", cli::list_scenarios(json));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
