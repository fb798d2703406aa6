use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::replay::{replay_with, ReplayError};
use super::EventLog;
use crate::building::Building;
use crate::geometry::Point;
use crate::ids::{ClientId, EdgeId, FloorId, TeamId};
use crate::session::{placement, Location, Role, ScoreEntry, Screenshot, Session};
use crate::{ticks_to_seconds, TICK_SECONDS};

#[derive(Debug, Error)]
pub enum DebriefError {
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("unknown team {0}")]
    UnknownTeam(TeamId),
    #[error("time range {t0}..{t1} s outside hunt of {duration} s")]
    RangeError { t0: f64, t1: f64, duration: f64 },
    #[error("cannot write debrief bundle: {0}")]
    Io(#[from] std::io::Error),
}

impl DebriefError {
    pub fn code(&self) -> &'static str {
        match self {
            DebriefError::Replay(e) => e.code(),
            DebriefError::UnknownTeam(_) => "UnknownTeam",
            DebriefError::RangeError { .. } => "RangeError",
            DebriefError::Io(_) => "IoError",
        }
    }
}

/// A hunter's position at the end of one tick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackSample {
    pub tick: u64,
    pub floor: FloorId,
    pub point: Point,
    pub location: Location,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FloorPolyline {
    pub floor: FloorId,
    pub points: Vec<Point>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HunterPath {
    pub hunter: ClientId,
    pub segments: Vec<FloorPolyline>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinishMarker {
    pub team: TeamId,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreenshotMarker {
    pub tick: u64,
    pub seconds: f64,
    pub floor: FloorId,
    pub viewpoint: Point,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub team: Option<TeamId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub duration_seconds: f64,
    pub finishes: Vec<FinishMarker>,
    pub screenshots: Vec<ScreenshotMarker>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CursorHunter {
    pub hunter: ClientId,
    pub team: TeamId,
    pub floor: FloorId,
    pub point: Point,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CursorState {
    pub tick: u64,
    pub seconds: f64,
    pub hunters: Vec<CursorHunter>,
    pub floors_occupied: BTreeSet<FloorId>,
}

#[derive(Clone, Debug, Serialize)]
struct TeamPaths {
    team: TeamId,
    hunters: Vec<HunterPath>,
}

/// Replayed hunt with per-tick hunter tracks.
#[derive(Clone, Debug)]
pub struct Debrief {
    building: Arc<Building>,
    hunt_start: Option<u64>,
    end_tick: u64,
    hunters: Vec<(ClientId, TeamId)>,
    teams: Vec<TeamId>,
    tracks: BTreeMap<ClientId, Vec<TrackSample>>,
    blocked: BTreeSet<EdgeId>,
    screenshots: Vec<Screenshot>,
    scoreboard: Vec<ScoreEntry>,
    final_hash: String,
}

impl Debrief {
    pub fn build(building: Arc<Building>, log: &EventLog) -> Result<Debrief, DebriefError> {
        let mut tracks: BTreeMap<ClientId, Vec<TrackSample>> = BTreeMap::new();
        let replayed = replay_with(building.clone(), log, |s| record(s, &mut tracks))?;
        let s = replayed.session;
        let hunters = s
            .avatars()
            .filter(|a| a.role == Role::Hunter)
            .filter_map(|a| a.team.map(|t| (a.client, t)))
            .collect();
        Ok(Debrief {
            hunt_start: s.hunt_start(),
            end_tick: s.hunt_end().unwrap_or(s.tick()),
            hunters,
            teams: s.teams().iter().map(|t| t.id).collect(),
            tracks,
            blocked: s.scenario().obstacles().clone(),
            screenshots: s.trainer().screenshots.clone(),
            scoreboard: s.scoreboard(),
            final_hash: s.state_hash(),
            building,
        })
    }

    pub fn building(&self) -> &Arc<Building> {
        &self.building
    }

    pub fn final_hash(&self) -> &str {
        &self.final_hash
    }

    pub fn teams(&self) -> &[TeamId] {
        &self.teams
    }

    pub fn blocked_edges(&self) -> &BTreeSet<EdgeId> {
        &self.blocked
    }

    pub fn scoreboard(&self) -> &[ScoreEntry] {
        &self.scoreboard
    }

    pub fn hunt_start(&self) -> Option<u64> {
        self.hunt_start
    }

    pub fn duration_seconds(&self) -> f64 {
        self.hunt_start
            .map(|s| ticks_to_seconds(self.end_tick - s))
            .unwrap_or(0.0)
    }

    pub fn hunters_of(&self, team: TeamId) -> impl Iterator<Item = ClientId> + '_ {
        self.hunters
            .iter()
            .filter(move |(_, t)| *t == team)
            .map(|(c, _)| *c)
    }

    /// Per-tick samples for one hunter, from the hunt start on.
    pub fn samples(&self, hunter: ClientId) -> &[TrackSample] {
        self.tracks.get(&hunter).map(Vec::as_slice).unwrap_or(&[])
    }

    fn tick_at(&self, t: f64) -> u64 {
        let offset = (t / TICK_SECONDS + 1e-6).floor() as u64;
        self.hunt_start.unwrap_or(0) + offset
    }

    fn check_range(&self, t0: f64, t1: f64) -> Result<(), DebriefError> {
        let duration = self.duration_seconds();
        let ok = t0.is_finite() && t1.is_finite() && 0.0 <= t0 && t0 <= t1 && t1 <= duration + 1e-9;
        if ok {
            Ok(())
        } else {
            Err(DebriefError::RangeError { t0, t1, duration })
        }
    }

    fn check_team(&self, team: TeamId) -> Result<(), DebriefError> {
        if self.teams.contains(&team) {
            Ok(())
        } else {
            Err(DebriefError::UnknownTeam(team))
        }
    }

    /// Paths walked by each hunter of `team` between two hunt-relative
    /// times, split into one polyline per floor visit.
    pub fn team_paths(&self, team: TeamId, t0: f64, t1: f64) -> Result<Vec<HunterPath>, DebriefError> {
        self.check_team(team)?;
        self.check_range(t0, t1)?;
        let (k0, k1) = (self.tick_at(t0), self.tick_at(t1));
        Ok(self
            .hunters_of(team)
            .map(|hunter| {
                let mut segments: Vec<FloorPolyline> = Vec::new();
                for s in self.samples(hunter).iter().filter(|s| k0 <= s.tick && s.tick <= k1) {
                    match segments.last_mut() {
                        Some(seg) if seg.floor == s.floor => {
                            if seg.points.last() != Some(&s.point) {
                                seg.points.push(s.point);
                            }
                        }
                        _ => segments.push(FloorPolyline {
                            floor: s.floor.clone(),
                            points: vec![s.point],
                        }),
                    }
                }
                HunterPath { hunter, segments }
            })
            .collect())
    }

    pub fn timeline(&self) -> Timeline {
        Timeline {
            duration_seconds: self.duration_seconds(),
            finishes: self
                .scoreboard
                .iter()
                .filter_map(|e| {
                    e.seconds.map(|seconds| FinishMarker {
                        team: e.team,
                        seconds,
                    })
                })
                .collect(),
            screenshots: self
                .screenshots
                .iter()
                .map(|s| ScreenshotMarker {
                    tick: s.tick,
                    seconds: s.hunt_seconds,
                    floor: s.floor.clone(),
                    viewpoint: s.viewpoint,
                    team: s.team,
                })
                .collect(),
        }
    }

    /// Hunter positions at the last tick not after `t` seconds.
    pub fn cursor_state(&self, t: f64) -> Result<CursorState, DebriefError> {
        self.check_range(t, t)?;
        Ok(self.cursor_at(self.tick_at(t)))
    }

    fn cursor_at(&self, tick: u64) -> CursorState {
        let hunters: Vec<CursorHunter> = self
            .hunters
            .iter()
            .filter_map(|&(hunter, team)| {
                let samples = self.samples(hunter);
                let i = samples.partition_point(|s| s.tick <= tick);
                samples.get(i.checked_sub(1)?).map(|s| CursorHunter {
                    hunter,
                    team,
                    floor: s.floor.clone(),
                    point: s.point,
                })
            })
            .collect();
        CursorState {
            tick,
            seconds: ticks_to_seconds(tick - self.hunt_start.unwrap_or(tick)),
            floors_occupied: hunters.iter().map(|h| h.floor.clone()).collect(),
            hunters,
        }
    }

    pub fn scoreboard_csv(&self) -> String {
        let mut out = String::from("rank,team,seconds\n");
        for (i, e) in self.scoreboard.iter().enumerate() {
            match e.seconds {
                Some(s) => writeln!(out, "{},{},{s:.2}", i + 1, e.team),
                None => writeln!(out, ",{},DNF", e.team),
            }
            .expect("writing to a string");
        }
        out
    }

    /// Write paths.json, timeline.json, scoreboard.csv and track.json into
    /// `dir`, creating it if needed.
    pub fn export(&self, dir: &Path) -> Result<(), DebriefError> {
        std::fs::create_dir_all(dir)?;
        let duration = self.duration_seconds();
        let paths: Vec<TeamPaths> = self
            .teams
            .iter()
            .map(|&team| TeamPaths {
                team,
                hunters: self.team_paths(team, 0.0, duration).expect("full range is valid"),
            })
            .collect();
        let track: Vec<CursorState> = match self.hunt_start {
            Some(start) => (start..=self.end_tick).map(|t| self.cursor_at(t)).collect(),
            None => Vec::new(),
        };
        std::fs::write(dir.join("paths.json"), pretty(&paths))?;
        std::fs::write(dir.join("timeline.json"), pretty(&self.timeline()))?;
        std::fs::write(dir.join("track.json"), pretty(&track))?;
        std::fs::write(dir.join("scoreboard.csv"), self.scoreboard_csv())?;
        Ok(())
    }
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("debrief data serializes")
}

fn record(s: &Session, tracks: &mut BTreeMap<ClientId, Vec<TrackSample>>) {
    if s.hunt_start().is_none() {
        return;
    }
    let tick = s.tick();
    for a in s.avatars().filter(|a| a.role == Role::Hunter) {
        let Some(loc) = a.location else { continue };
        let p = placement(s.building(), loc);
        let sample = TrackSample {
            tick,
            floor: s.building().floor_id(p.floor).clone(),
            point: p.pos,
            location: loc,
        };
        let track = tracks.entry(a.client).or_default();
        match track.last_mut() {
            Some(last) if last.tick == tick => *last = sample,
            _ => track.push(sample),
        }
    }
}
