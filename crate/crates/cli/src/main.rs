mod commands;
mod serve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Operator entry points for the treasure-hunt training server.
#[derive(Parser, Debug)]
#[command(name = "hunt", version, about)]
struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run the session server.
    Serve(ServeArgs),
    /// Validate and edit hunt files.
    #[command(subcommand)]
    Author(AuthorCmd),
    /// Play a whole hunt with bots and write its event log.
    Simulate(SimulateArgs),
    /// Replay a log and export the debrief bundle.
    Replay {
        building: PathBuf,
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a log and print the final state hash.
    Hash { building: PathBuf, log: PathBuf },
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    pub building: PathBuf,
    pub scenario: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Wall-clock tick rate; simulated time is always 50 ms per tick.
    #[arg(long, default_value_t = 20.0)]
    pub tick_hz: f64,
    /// Also accept newline-delimited JSON frames on this TCP port.
    #[arg(long)]
    pub tcp_port: Option<u16>,
    /// Event log path (default: $HUNT_LOG_DIR/<session>.hunt.ndjson).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum AuthorCmd {
    /// Check a scenario against its building.
    Validate { building: PathBuf, scenario: PathBuf },
    /// Block an edge if the objective stays reachable; rewrites the file.
    AddObstacle {
        building: PathBuf,
        scenario: PathBuf,
        edge: String,
    },
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    pub building: PathBuf,
    pub scenario: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub teams: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2)]
    pub hunters: usize,
    /// Probability that a hunter follows each waypoint.
    #[arg(long, default_value_t = 1.0)]
    pub compliance: f64,
    /// Hunter reaction delay in ticks.
    #[arg(long, default_value_t = 0)]
    pub delay: u64,
    #[arg(long, default_value_t = 12_000)]
    pub max_ticks: u64,
    /// Output log path (default: $HUNT_LOG_DIR/<scenario>-<seed>.hunt.ndjson).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = commands::Output { json: cli.json };
    let result = match cli.command {
        Cmd::Serve(args) => serve::run(&args, &out),
        Cmd::Author(AuthorCmd::Validate { building, scenario }) => {
            commands::validate(&building, &scenario, &out)
        }
        Cmd::Author(AuthorCmd::AddObstacle {
            building,
            scenario,
            edge,
        }) => commands::add_obstacle(&building, &scenario, &edge, &out),
        Cmd::Simulate(args) => commands::simulate(&args, &out),
        Cmd::Replay { building, log, out: dir } => commands::replay(&building, &log, &dir, &out),
        Cmd::Hash { building, log } => commands::hash(&building, &log, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            out.error(&e);
            ExitCode::from(e.exit_code())
        }
    }
}
