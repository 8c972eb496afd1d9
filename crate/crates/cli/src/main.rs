mod run;
mod serve;
mod suites;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Planar cable robot simulator.
#[derive(Debug, Parser)]
#[command(name = "cablesim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Debug, Subcommand)]
enum Commands {
    /// Run a scenario file and write its log and metrics.
    Run(RunArgs),
    /// Compare tension statistics of a two-module and a four-module run.
    Compare(CompareArgs),
    /// Host a real-time session for the browser console.
    Serve(ServeArgs),
    /// Reproduce one of the characterization experiments.
    Experiments(ExperimentArgs),
}

/// Adjustments applied to a scenario after loading, in this order:
/// overrides, then the dedicated flags.
#[derive(Debug, Clone, Default, Args)]
struct ScenarioArgs {
    /// Dotted-key assignment, e.g. `actuator.stiction_band=5`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Simulated duration (s).
    #[arg(long)]
    duration: Option<f64>,
    /// Keep only the first N modules (the upper pair comes first).
    #[arg(long, value_name = "N")]
    modules: Option<usize>,
    /// Replace the actuator model with pure tension sources.
    #[arg(long)]
    ideal_actuators: bool,
    /// Payload mass in pounds, converted to kilograms.
    #[arg(long, value_name = "LB")]
    payload_lb: Option<f64>,
}

#[derive(Debug, Args)]
struct RunArgs {
    scenario: PathBuf,
    /// Output directory [default: runs/<scenario name>].
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[command(flatten)]
    adjust: ScenarioArgs,
    /// Record QP wall-clock times in the log (makes logs non-reproducible).
    #[arg(long)]
    timing: bool,
    /// Command timeline (JSON, as written by `serve`) to replay during the run.
    #[arg(long, value_name = "FILE")]
    commands: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Two-module run: a scenario file or a run directory.
    few: PathBuf,
    /// Four-module run: a scenario file or a run directory.
    many: PathBuf,
    /// Directory for `scaling.txt` and `scaling.json`.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    scenario: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Session log directory [default: runs/<scenario name>-session].
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[command(flatten)]
    adjust: ScenarioArgs,
    /// Run as fast as possible instead of in real time.
    #[arg(long)]
    unpaced: bool,
    #[arg(long, default_value_t = 30.0)]
    snapshot_hz: f64,
    /// Largest accepted operator force (N).
    #[arg(long)]
    max_force: Option<f64>,
    /// Largest accepted operator moment (N m).
    #[arg(long)]
    max_moment: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Step,
    Backdrive,
    Square,
    Amplify,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(value_enum)]
    suite: Suite,
    /// Output directory [default: experiments/<suite>].
    #[arg(long, short)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Commands::Run(a) => run::run(a),
        Commands::Compare(a) => run::compare(a),
        Commands::Serve(a) => serve::serve(a),
        Commands::Experiments(a) => suites::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
