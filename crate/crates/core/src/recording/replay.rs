use std::sync::Arc;

use thiserror::Error;

use super::{EventKind, EventLog};
use crate::building::Building;
use crate::scenario;
use crate::session::{Phase, Session};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReplayError {
    #[error("log was recorded against building digest {expected}, got {found}")]
    DigestMismatch { expected: String, found: String },
    #[error("corrupt log: {0}")]
    CorruptLog(String),
    #[error("state diverged at tick {tick} (seq {seq}): logged {expected}, replayed {found}")]
    CheckpointMismatch {
        tick: u64,
        seq: u64,
        expected: String,
        found: String,
    },
}

impl ReplayError {
    pub fn code(&self) -> &'static str {
        match self {
            ReplayError::DigestMismatch { .. } => "DigestMismatch",
            ReplayError::CorruptLog(_) => "CorruptLog",
            ReplayError::CheckpointMismatch { .. } => "CheckpointMismatch",
        }
    }
}

#[derive(Debug)]
pub struct Replayed {
    pub session: Session,
    /// Checkpoint and end hashes that were verified.
    pub checkpoints: usize,
}

pub fn replay(building: Arc<Building>, log: &EventLog) -> Result<Replayed, ReplayError> {
    replay_with(building, log, |_| {})
}

/// Re-simulate `log`, calling `observe` after every state change.
pub fn replay_with(
    building: Arc<Building>,
    log: &EventLog,
    mut observe: impl FnMut(&Session),
) -> Result<Replayed, ReplayError> {
    let header = log.header();
    if header.building_digest != building.digest() {
        return Err(ReplayError::DigestMismatch {
            expected: header.building_digest.clone(),
            found: building.digest().to_owned(),
        });
    }
    let scenario = scenario::create_hunt(&building, header.scenario.clone())
        .map_err(|e| ReplayError::CorruptLog(format!("header scenario: {e}")))?;
    let mut session = Session::new(building, scenario, header.seed)
        .map_err(|e| ReplayError::CorruptLog(format!("header: {e}")))?;
    observe(&session);

    let events = log.events();
    let mut checkpoints = 0;
    let mut i = 0;
    while i < events.len() {
        let e = &events[i];
        match &e.kind {
            EventKind::Cmd { client, command } => {
                advance_to(&mut session, e.tick, &mut observe);
                if session.tick() != e.tick {
                    return Err(ReplayError::CorruptLog(format!(
                        "seq {}: command logged at tick {} but session is at {}",
                        e.seq,
                        e.tick,
                        session.tick()
                    )));
                }
                session
                    .apply(*client, command)
                    .map_err(|err| ReplayError::CorruptLog(format!("seq {}: {err}", e.seq)))?;
                observe(&session);
            }
            EventKind::TickCmd { .. } => {
                let tick = e.tick;
                advance_to(&mut session, tick.saturating_sub(1), &mut observe);
                if session.phase() != Phase::Hunting || session.tick() + 1 != tick {
                    return Err(ReplayError::CorruptLog(format!(
                        "seq {}: tick command for tick {tick} cannot be applied",
                        e.seq
                    )));
                }
                let mut batch = Vec::new();
                while let Some(x) = events.get(i) {
                    match &x.kind {
                        EventKind::TickCmd { client, command } if x.tick == tick => {
                            batch.push((*client, command.clone()));
                            i += 1;
                        }
                        _ => break,
                    }
                }
                let out = session.step(&batch);
                if let Some(err) = out.results.iter().find_map(|r| r.as_ref().err()) {
                    return Err(ReplayError::CorruptLog(format!(
                        "tick {tick}: logged command failed on replay: {err}"
                    )));
                }
                observe(&session);
                continue;
            }
            EventKind::Phase { .. } | EventKind::Finish { .. } => {
                advance_to(&mut session, e.tick, &mut observe);
            }
            EventKind::Checkpoint { hash } | EventKind::End { hash } => {
                advance_to(&mut session, e.tick, &mut observe);
                let found = session.state_hash();
                if &found != hash {
                    return Err(ReplayError::CheckpointMismatch {
                        tick: e.tick,
                        seq: e.seq,
                        expected: hash.clone(),
                        found,
                    });
                }
                checkpoints += 1;
            }
        }
        i += 1;
    }
    Ok(Replayed {
        session,
        checkpoints,
    })
}

fn advance_to(session: &mut Session, tick: u64, observe: &mut impl FnMut(&Session)) {
    while session.phase() == Phase::Hunting && session.tick() < tick {
        session.step(&[]);
        observe(session);
    }
}
