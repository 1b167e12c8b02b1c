use std::path::PathBuf;
use std::process::ExitCode;

use chanloop_cli::{cmd_analyze, cmd_compare, cmd_identify, cmd_run, RunOptions};
use chanloop_core::metrics::ReportConfig;
use clap::{Args, Parser, Subcommand};

/// Closed-loop channel simulator and state-space toolkit.
#[derive(Parser)]
#[command(name = "chanloop", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file (TOML)
    scenario: PathBuf,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the master RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override a scenario field, e.g. --set controller.enabled=false
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Histogram bin count
    #[arg(long, default_value_t = 20)]
    bins: usize,
    /// Utilization threshold for the tail-mass statistic
    #[arg(long, default_value_t = 0.9)]
    tail_threshold: f64,
}

impl ScenarioArgs {
    fn options(&self) -> RunOptions {
        RunOptions {
            scenario: self.scenario.clone(),
            out_dir: self.out.clone(),
            seed: self.seed,
            overrides: self.set.clone(),
            report: ReportConfig {
                nbins: self.bins,
                tail_threshold: self.tail_threshold,
            },
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write series, report, and histogram files
    Run(ScenarioArgs),
    /// Run a scenario with control off and on, then write the comparison
    Compare(ScenarioArgs),
    /// Print stability, controllability, and observability of a model file
    Analyze {
        /// Model file (TOML)
        model: PathBuf,
    },
    /// Fit a state-space model to a recorded trajectory (CSV)
    Identify {
        /// Trajectory file with header t,x1..xn,u1..um
        trajectory: PathBuf,
        /// Output directory
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(&args.options()),
        Command::Compare(args) => cmd_compare(&args.options()),
        Command::Analyze { model } => cmd_analyze(model),
        Command::Identify { trajectory, out } => cmd_identify(trajectory, out),
    };
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code as u8)
        }
    }
}
