mod analyze;
mod demo;
mod failure;
mod scenarios;
mod sim;
mod tools;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "posearch",
    version,
    about = "Proof-of-Search simulator and tools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run network scenarios.
    #[command(subcommand)]
    Sim(SimCommand),
    /// Compare closed-form fork and block-time statistics with Monte Carlo.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Inspect chain files.
    #[command(subcommand)]
    Chain(ChainCommand),
    /// Assemble VM program text to binary, or disassemble binary.
    Asm(tools::AsmArgs),
    /// Built-in demonstrations.
    #[command(subcommand)]
    Demo(DemoCommand),
}

#[derive(Subcommand)]
enum SimCommand {
    /// Run a scenario and write report.json, trace.csv and chain.posc.
    Run(SimRunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Faithful,
    Statistical,
}

#[derive(Args)]
pub struct SimRunArgs {
    /// Scenario JSON file.
    #[arg(long, conflicts_with = "scenario", required_unless_present_any = ["scenario", "list"])]
    pub config: Option<PathBuf>,
    /// Name of a bundled scenario.
    #[arg(long)]
    pub scenario: Option<String>,
    /// List bundled scenarios and exit.
    #[arg(long)]
    pub list: bool,
    /// Overrides the scenario seed.
    #[arg(long, env = "POSEARCH_SEED")]
    pub seed: Option<u64>,
    /// Overrides the scenario mode.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Skip writing trace.csv.
    #[arg(long)]
    pub no_trace: bool,
    /// Print the report JSON to stdout as well.
    #[arg(long)]
    pub print: bool,
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Fork probability against delay.
    Fork(analyze::ForkArgs),
    /// Block-time distribution.
    Blocktime(analyze::BlocktimeArgs),
}

#[derive(Subcommand)]
enum ChainCommand {
    /// Fully verify a chain file and print a summary.
    Verify(tools::VerifyArgs),
}

#[derive(Subcommand)]
enum DemoCommand {
    /// Mine one random TSP job end to end.
    Tsp(demo::TspArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sim(SimCommand::Run(a)) => sim::run(a),
        Command::Analyze(AnalyzeCommand::Fork(a)) => analyze::fork(a),
        Command::Analyze(AnalyzeCommand::Blocktime(a)) => analyze::blocktime(a),
        Command::Chain(ChainCommand::Verify(a)) => tools::verify(a),
        Command::Asm(a) => tools::asm(a),
        Command::Demo(DemoCommand::Tsp(a)) => demo::tsp(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.exit_code())
        }
    }
}
