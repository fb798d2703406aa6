use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use hunt_core::bots::{run_simulation, BotPolicy, SimConfig, SimError};
use hunt_core::recording::{replay as replay_log, Debrief, DebriefError, EventLog, LogError};
use hunt_core::scenario::{self, objective_nodes, Scenario};
use hunt_core::session::ScoreEntry;
use hunt_core::{Building, EdgeId};
use serde_json::{json, Value};

use crate::SimulateArgs;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Bad input files or a refused operation.
    Validation,
    /// I/O, sockets and everything else outside the inputs.
    Environment,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub code: String,
    pub message: String,
}

impl CliError {
    pub fn validation(code: &str, message: impl fmt::Display) -> CliError {
        CliError {
            kind: Kind::Validation,
            code: code.to_owned(),
            message: message.to_string(),
        }
    }

    pub fn environment(code: &str, message: impl fmt::Display) -> CliError {
        CliError {
            kind: Kind::Environment,
            code: code.to_owned(),
            message: message.to_string(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind {
            Kind::Validation => 2,
            Kind::Environment => 3,
        }
    }
}

impl From<LogError> for CliError {
    fn from(e: LogError) -> Self {
        match e {
            LogError::Sink(io) => CliError::environment("IoError", io),
            other => CliError::validation(other.code(), other),
        }
    }
}

impl From<DebriefError> for CliError {
    fn from(e: DebriefError) -> Self {
        match e {
            DebriefError::Io(io) => CliError::environment("IoError", io),
            other => CliError::validation(other.code(), other),
        }
    }
}

pub struct Output {
    pub json: bool,
}

impl Output {
    /// Print `value` as JSON, or `text` otherwise.
    pub fn emit(&self, value: Value, text: impl FnOnce() -> String) {
        let mut stdout = std::io::stdout().lock();
        let line = if self.json {
            value.to_string()
        } else {
            text()
        };
        let _ = writeln!(stdout, "{line}");
        let _ = stdout.flush();
    }

    pub fn error(&self, e: &CliError) {
        eprintln!("error: {} ({})", e.message, e.code);
        if self.json {
            println!(
                "{}",
                json!({"error": {"code": e.code, "message": e.message}})
            );
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path)
        .map_err(|e| CliError::environment("IoError", format!("{}: {e}", path.display())))
}

pub fn load_building(path: &Path) -> Result<Building, CliError> {
    Building::load(&read(path)?)
        .map_err(|e| CliError::validation(e.code(), format!("{}: {e}", path.display())))
}

pub fn load_scenario(building: &Building, path: &Path) -> Result<Scenario, CliError> {
    Scenario::load(building, &read(path)?)
        .map_err(|e| CliError::validation(e.code(), format!("{}: {e}", path.display())))
}

fn load_log(path: &Path) -> Result<EventLog, CliError> {
    EventLog::load(path).map_err(|e| match e {
        LogError::Sink(io) => CliError::environment("IoError", format!("{}: {io}", path.display())),
        other => CliError::validation(other.code(), format!("{}: {other}", path.display())),
    })
}

/// Default directory for event logs.
pub fn log_dir() -> PathBuf {
    std::env::var_os("HUNT_LOG_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn summary(building: &Building, s: &Scenario) -> Value {
    let nodes: Vec<String> = objective_nodes(building, s)
        .into_iter()
        .map(|i| building.graph_node(i).id.to_string())
        .collect();
    json!({
        "id": s.id(),
        "building": building.id,
        "hunt_type": s.hunt_type(),
        "start_room": s.start_room(),
        "objective_text": s.objective_text(),
        "objective_nodes": nodes,
        "obstacles": s.obstacles(),
    })
}

pub fn validate(building: &Path, scenario: &Path, out: &Output) -> Result<(), CliError> {
    let b = load_building(building)?;
    let s = load_scenario(&b, scenario)?;
    let v = summary(&b, &s);
    out.emit(json!({"ok": true, "scenario": v}), || {
        format!(
            "ok: scenario {} on building {} ({} floors, {} nodes, {} edges)\n\
             start room {}; objective reachable at {}; obstacles: {}",
            s.id(),
            b.id,
            b.floors.len(),
            b.node_count(),
            b.edge_count(),
            s.start_room(),
            list(&v["objective_nodes"]),
            list(&v["obstacles"]),
        )
    });
    Ok(())
}

fn list(v: &Value) -> String {
    let items: Vec<&str> = v
        .as_array()
        .map(|a| a.iter().filter_map(Value::as_str).collect())
        .unwrap_or_default();
    if items.is_empty() {
        "none".into()
    } else {
        items.join(", ")
    }
}

pub fn add_obstacle(
    building: &Path,
    scenario_path: &Path,
    edge: &str,
    out: &Output,
) -> Result<(), CliError> {
    let b = load_building(building)?;
    let s = load_scenario(&b, scenario_path)?;
    let edge = EdgeId::from(edge);
    let updated = scenario::place_obstacle(&b, &s, &edge)
        .map_err(|e| CliError::validation(e.code(), e))?;
    write_atomically(scenario_path, updated.render().as_bytes())?;
    out.emit(
        json!({"ok": true, "edge": edge, "obstacles": updated.obstacles()}),
        || {
            format!(
                "blocked {edge}; obstacles now: {}",
                list(&json!(updated.obstacles()))
            )
        },
    );
    Ok(())
}

fn write_atomically(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let env = |e: std::io::Error| CliError::environment("IoError", format!("{}: {e}", path.display()));
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(env)?;
    tmp.write_all(bytes).map_err(env)?;
    tmp.write_all(b"\n").map_err(env)?;
    tmp.as_file().sync_all().map_err(env)?;
    tmp.persist(path).map_err(|e| env(e.error))?;
    Ok(())
}

fn scoreboard_text(board: &[ScoreEntry]) -> String {
    board
        .iter()
        .enumerate()
        .map(|(i, e)| match e.seconds {
            Some(s) => format!("{:>2}. {:<8} {s:>8.2} s", i + 1, e.team.to_string()),
            None => format!("    {:<8}      DNF", e.team.to_string()),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn simulate(args: &SimulateArgs, out: &Output) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&args.compliance) {
        return Err(CliError::validation(
            "InvalidArgument",
            "--compliance must be within [0, 1]",
        ));
    }
    let b = Arc::new(load_building(&args.building)?);
    let s = load_scenario(&b, &args.scenario)?;
    let sim = SimConfig {
        teams: args.teams,
        hunters_per_team: args.hunters,
        seed: args.seed,
        policies: vec![BotPolicy {
            reaction_delay: args.delay,
            compliance: args.compliance,
        }],
        max_ticks: args.max_ticks,
        ..SimConfig::default()
    };
    let outcome = run_simulation(b, s.config().clone(), &sim).map_err(|e| match e {
        SimError::Log(l) => CliError::from(l),
        other => CliError::validation(other.code(), other),
    })?;
    let path = args
        .out
        .clone()
        .unwrap_or_else(|| log_dir().join(format!("{}-{}.hunt.ndjson", s.id(), args.seed)));
    outcome.log.save(&path)?;
    out.emit(
        json!({
            "log": path,
            "scoreboard": outcome.scoreboard,
            "final_hash": outcome.final_hash,
            "hunt_ticks": outcome.hunt_ticks,
        }),
        || {
            format!(
                "{}\nlog written to {} (final hash {})",
                scoreboard_text(&outcome.scoreboard),
                path.display(),
                outcome.final_hash
            )
        },
    );
    Ok(())
}

pub fn replay(building: &Path, log: &Path, dir: &Path, out: &Output) -> Result<(), CliError> {
    let b = Arc::new(load_building(building)?);
    let log = load_log(log)?;
    let debrief = Debrief::build(b, &log)?;
    debrief.export(dir)?;
    let timeline = debrief.timeline();
    out.emit(
        json!({
            "out": dir,
            "final_hash": debrief.final_hash(),
            "duration_seconds": timeline.duration_seconds,
            "scoreboard": debrief.scoreboard(),
        }),
        || {
            format!(
                "{}\nhunt lasted {:.2} s; debrief bundle written to {} (final hash {})",
                scoreboard_text(debrief.scoreboard()),
                timeline.duration_seconds,
                dir.display(),
                debrief.final_hash()
            )
        },
    );
    Ok(())
}

pub fn hash(building: &Path, log: &Path, out: &Output) -> Result<(), CliError> {
    let b = Arc::new(load_building(building)?);
    let log = load_log(log)?;
    let replayed = replay_log(b, &log).map_err(|e| CliError::validation(e.code(), e))?;
    let hash = replayed.session.state_hash();
    out.emit(
        json!({
            "hash": hash,
            "tick": replayed.session.tick(),
            "checkpoints": replayed.checkpoints,
        }),
        || hash.clone(),
    );
    Ok(())
}
