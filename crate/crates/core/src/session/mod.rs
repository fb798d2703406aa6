//! The authoritative hunt simulation.
//!
//! A [`Session`] is owned by a single thread. Outside the hunting phase
//! commands are applied immediately with [`Session::apply`]; while hunting
//! they are batched into [`Session::step`], which advances the clock by one
//! 50 ms tick, applies the batch in order, then integrates motion, resolves
//! pointing rays and updates the validation timers. Every state change is a
//! pure function of the previous state and the ordered command stream.

mod validation;
mod visibility;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::building::Building;
use crate::geometry::Point;
use crate::ids::{ClientId, EdgeId, EquipmentId, FloorId, NodeId, TeamId};
use crate::path;
use crate::raycast::cast_on_floor;
use crate::scenario::{self, HuntConfig, Scenario, ScenarioError};
use crate::{ticks_to_seconds, POINTING_RANGE_M, STEP_UM, VALIDATION_TICKS};

pub use validation::{advance, objective_met, HunterObservation};
pub use visibility::{AvatarView, Snapshot, TeamStatus};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Lobby,
    Preparation,
    Hunting,
    Debrief,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Hunter,
    Radio,
    Trainer,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("command not allowed in phase {actual:?}")]
    WrongPhase { actual: Phase },
    #[error("client {0} already joined")]
    DuplicateClient(ClientId),
    #[error("the session already has a trainer")]
    SecondTrainer,
    #[error("unknown team {0:?}")]
    UnknownTeam(Option<TeamId>),
    #[error("{0} already has a radio")]
    RadioTaken(TeamId),
    #[error("{team} is incomplete: {reason}")]
    IncompleteTeam { team: TeamId, reason: String },
    #[error("no trainer has joined")]
    NoTrainer,
    #[error("no teams have joined")]
    NoTeams,
    #[error("node {0} is not adjacent")]
    NotAdjacent(NodeId),
    #[error("edge toward {0} is blocked")]
    EdgeBlocked(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown floor {0}")]
    UnknownFloor(FloorId),
    #[error("client {0} is not the radio of its team")]
    NotTeamRadio(ClientId),
    #[error("client {0} is not the trainer")]
    NotTrainer(ClientId),
    #[error("unknown client {0}")]
    UnknownClient(ClientId),
    #[error("client {client} has role {role:?}, which cannot do this")]
    WrongRole { client: ClientId, role: Role },
    #[error("invalid angle")]
    InvalidAngle,
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

impl SessionError {
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::WrongPhase { .. } => "WrongPhase",
            SessionError::DuplicateClient(_) => "DuplicateClient",
            SessionError::SecondTrainer => "SecondTrainer",
            SessionError::UnknownTeam(_) => "UnknownTeam",
            SessionError::RadioTaken(_) => "RadioTaken",
            SessionError::IncompleteTeam { .. } => "IncompleteTeam",
            SessionError::NoTrainer => "NoTrainer",
            SessionError::NoTeams => "NoTeams",
            SessionError::NotAdjacent(_) => "NotAdjacent",
            SessionError::EdgeBlocked(_) => "EdgeBlocked",
            SessionError::UnknownNode(_) => "UnknownNode",
            SessionError::UnknownFloor(_) => "UnknownFloor",
            SessionError::NotTeamRadio(_) => "NotTeamRadio",
            SessionError::NotTrainer(_) => "NotTrainer",
            SessionError::UnknownClient(_) => "UnknownClient",
            SessionError::WrongRole { .. } => "WrongRole",
            SessionError::InvalidAngle => "InvalidAngle",
            SessionError::Scenario(e) => e.code(),
        }
    }
}

/// Structured part of a guidance message, consumed by bots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Directive {
    Waypoint { hunter: ClientId, node: NodeId },
    Point { hunter: ClientId, angle: f64 },
}

/// Everything a client can ask the session to do.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum Command {
    Join {
        role: Role,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        team: Option<TeamId>,
        name: String,
    },
    CreateHunt {
        config: HuntConfig,
    },
    PlaceObstacle {
        edge: EdgeId,
    },
    StartPreparation,
    StartHunt,
    MoveTo {
        node: NodeId,
    },
    MoveRadio {
        node: NodeId,
    },
    Point {
        angle: Option<f64>,
    },
    Guidance {
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        directive: Option<Directive>,
    },
    Screenshot {
        floor: FloorId,
        viewpoint: Point,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        team: Option<TeamId>,
    },
    SetVisibility {
        teams: BTreeSet<TeamId>,
    },
    Observe {
        teams: BTreeSet<TeamId>,
    },
}

impl Command {
    /// Whether a command is batched into the next tick while hunting.
    /// Guidance only relays text and never touches simulation state.
    pub fn is_tick_bound(&self) -> bool {
        !matches!(self, Command::Guidance { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Screenshot {
    pub tick: u64,
    pub hunt_seconds: f64,
    pub floor: FloorId,
    pub viewpoint: Point,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub team: Option<TeamId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub team: TeamId,
    /// Total hunt time, `None` when the team did not finish.
    pub seconds: Option<f64>,
}

/// Outputs of applying commands or advancing a tick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Joined {
        client: ClientId,
        role: Role,
        team: Option<TeamId>,
    },
    PhaseChanged {
        phase: Phase,
    },
    ScenarioChanged,
    Guidance {
        from: ClientId,
        team: TeamId,
        text: String,
        directive: Option<Directive>,
        recipients: Vec<ClientId>,
    },
    ScreenshotTaken(Screenshot),
    TeamFinished {
        team: TeamId,
        finish_tick: u64,
        seconds: f64,
    },
    HuntEnded {
        scoreboard: Vec<ScoreEntry>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Team {
    pub id: TeamId,
    pub radio: ClientId,
    pub hunters: Vec<ClientId>,
    pub progress: u32,
    pub finish_tick: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    pub client: Option<ClientId>,
    pub visible_to: BTreeSet<TeamId>,
    pub observed: BTreeSet<TeamId>,
    pub screenshots: Vec<Screenshot>,
}

/// Where an avatar stands on the navigation graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "at", rename_all = "snake_case")]
pub enum Location {
    Node {
        node: usize,
    },
    Edge {
        edge: usize,
        from: usize,
        to: usize,
        traveled_um: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Avatar {
    pub client: ClientId,
    pub name: String,
    pub role: Role,
    pub team: Option<TeamId>,
    pub location: Option<Location>,
    /// Remaining (edge, destination node) hops after the current one.
    pub queue: VecDeque<(usize, usize)>,
    pub pointing: Option<f64>,
    pub highlight: Option<EquipmentId>,
}

/// Resolved world placement of an avatar.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Placement {
    pub floor: usize,
    pub pos: Point,
}

#[derive(Clone, Debug, Default)]
pub struct StepOutcome {
    /// One result per submitted command, in submission order.
    pub results: Vec<Result<Vec<Event>, SessionError>>,
    /// Events produced by the tick itself (finishes, hunt end).
    pub events: Vec<Event>,
}

#[derive(Clone, Debug)]
pub struct Session {
    session_id: String,
    building: Arc<Building>,
    scenario: Scenario,
    seed: u64,
    phase: Phase,
    tick: u64,
    hunt_start: Option<u64>,
    hunt_end: Option<u64>,
    roster: BTreeMap<ClientId, Avatar>,
    join_order: Vec<ClientId>,
    teams: Vec<Team>,
    trainer: TrainerState,
}

impl Session {
    pub fn new(
        building: Arc<Building>,
        scenario: Scenario,
        seed: u64,
    ) -> Result<Session, SessionError> {
        if scenario.building_id() != building.id {
            return Err(ScenarioError::BuildingMismatch {
                expected: building.id.clone(),
                found: scenario.building_id().to_owned(),
            }
            .into());
        }
        Ok(Session {
            session_id: format!("{}-{}-{seed}", building.id, scenario.id()),
            building,
            scenario,
            seed,
            phase: Phase::Lobby,
            tick: 0,
            hunt_start: None,
            hunt_end: None,
            roster: BTreeMap::new(),
            join_order: Vec::new(),
            teams: Vec::new(),
            trainer: TrainerState::default(),
        })
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn building(&self) -> &Arc<Building> {
        &self.building
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn hunt_start(&self) -> Option<u64> {
        self.hunt_start
    }

    pub fn hunt_end(&self) -> Option<u64> {
        self.hunt_end
    }

    pub fn teams(&self) -> &[Team] {
        &self.teams
    }

    pub fn team(&self, id: TeamId) -> Option<&Team> {
        self.teams.iter().find(|t| t.id == id)
    }

    pub fn trainer(&self) -> &TrainerState {
        &self.trainer
    }

    pub fn avatar(&self, client: ClientId) -> Option<&Avatar> {
        self.roster.get(&client)
    }

    pub fn avatars(&self) -> impl Iterator<Item = &Avatar> {
        self.join_order.iter().map(move |c| &self.roster[c])
    }

    /// Hunt-relative seconds of the current tick.
    pub fn hunt_seconds(&self) -> f64 {
        self.hunt_start
            .map(|s| ticks_to_seconds(self.tick - s))
            .unwrap_or(0.0)
    }

    /// Apply a command outside the tick loop. While hunting only guidance is
    /// accepted here; everything else goes through [`Session::step`].
    pub fn apply(&mut self, client: ClientId, cmd: &Command) -> Result<Vec<Event>, SessionError> {
        if self.phase == Phase::Hunting && cmd.is_tick_bound() {
            return Err(SessionError::WrongPhase { actual: self.phase });
        }
        self.dispatch(client, cmd)
    }

    /// Advance one tick, applying `commands` first in the given order.
    pub fn step(&mut self, commands: &[(ClientId, Command)]) -> StepOutcome {
        let mut out = StepOutcome::default();
        if self.phase != Phase::Hunting {
            out.results = commands
                .iter()
                .map(|_| Err(SessionError::WrongPhase { actual: self.phase }))
                .collect();
            return out;
        }
        self.tick += 1;
        for (client, cmd) in commands {
            let r = if self.phase == Phase::Hunting {
                self.dispatch(*client, cmd)
            } else {
                Err(SessionError::WrongPhase { actual: self.phase })
            };
            out.results.push(r);
        }
        self.integrate_motion();
        self.resolve_pointing();
        out.events = self.update_validation();
        out
    }

    fn dispatch(&mut self, client: ClientId, cmd: &Command) -> Result<Vec<Event>, SessionError> {
        match cmd {
            Command::Join { role, team, name } => self.join(client, *role, *team, name),
            Command::CreateHunt { config } => {
                self.require_trainer(client)?;
                self.require_phase(&[Phase::Lobby, Phase::Preparation])?;
                self.scenario = scenario::create_hunt(&self.building, config.clone())?;
                Ok(vec![Event::ScenarioChanged])
            }
            Command::PlaceObstacle { edge } => {
                self.require_trainer(client)?;
                self.require_phase(&[Phase::Lobby, Phase::Preparation])?;
                self.scenario = scenario::place_obstacle(&self.building, &self.scenario, edge)?;
                Ok(vec![Event::ScenarioChanged])
            }
            Command::StartPreparation => {
                self.require_trainer(client)?;
                self.start_preparation()
            }
            Command::StartHunt => {
                self.require_trainer(client)?;
                self.start_hunt()
            }
            Command::MoveTo { node } => self.move_to(client, node).map(|_| vec![]),
            Command::MoveRadio { node } => self.move_radio(client, node).map(|_| vec![]),
            Command::Point { angle } => self.set_pointing(client, *angle).map(|_| vec![]),
            Command::Guidance { text, directive } => {
                self.send_guidance(client, text, directive.clone())
            }
            Command::Screenshot {
                floor,
                viewpoint,
                team,
            } => self.screenshot(client, floor, *viewpoint, *team),
            Command::SetVisibility { teams } => {
                self.require_trainer(client)?;
                self.require_phase(&[Phase::Lobby, Phase::Preparation, Phase::Hunting])?;
                self.check_teams(teams)?;
                self.trainer.visible_to = teams.clone();
                Ok(vec![])
            }
            Command::Observe { teams } => {
                self.require_trainer(client)?;
                self.require_phase(&[Phase::Lobby, Phase::Preparation, Phase::Hunting])?;
                self.check_teams(teams)?;
                self.trainer.observed = teams.clone();
                Ok(vec![])
            }
        }
    }

    fn require_phase(&self, allowed: &[Phase]) -> Result<(), SessionError> {
        if allowed.contains(&self.phase) {
            Ok(())
        } else {
            Err(SessionError::WrongPhase { actual: self.phase })
        }
    }

    fn require_trainer(&self, client: ClientId) -> Result<(), SessionError> {
        let avatar = self
            .roster
            .get(&client)
            .ok_or(SessionError::UnknownClient(client))?;
        if avatar.role == Role::Trainer {
            Ok(())
        } else {
            Err(SessionError::NotTrainer(client))
        }
    }

    fn check_teams(&self, teams: &BTreeSet<TeamId>) -> Result<(), SessionError> {
        match teams.iter().find(|t| self.team(**t).is_none()) {
            Some(t) => Err(SessionError::UnknownTeam(Some(*t))),
            None => Ok(()),
        }
    }

    /// Register a client. Team composition is only checked when preparation
    /// starts. Teams come into existence when their radio joins.
    pub fn join(
        &mut self,
        client: ClientId,
        role: Role,
        team: Option<TeamId>,
        name: &str,
    ) -> Result<Vec<Event>, SessionError> {
        self.require_phase(&[Phase::Lobby])?;
        if self.roster.contains_key(&client) {
            return Err(SessionError::DuplicateClient(client));
        }
        let team = match role {
            Role::Trainer => {
                if self.trainer.client.is_some() {
                    return Err(SessionError::SecondTrainer);
                }
                self.trainer.client = Some(client);
                None
            }
            Role::Radio => {
                let id = team.ok_or(SessionError::UnknownTeam(None))?;
                if self.team(id).is_some() {
                    return Err(SessionError::RadioTaken(id));
                }
                self.teams.push(Team {
                    id,
                    radio: client,
                    hunters: Vec::new(),
                    progress: 0,
                    finish_tick: None,
                });
                Some(id)
            }
            Role::Hunter => {
                let id = team.ok_or(SessionError::UnknownTeam(None))?;
                let t = self
                    .teams
                    .iter_mut()
                    .find(|t| t.id == id)
                    .ok_or(SessionError::UnknownTeam(Some(id)))?;
                t.hunters.push(client);
                Some(id)
            }
        };
        self.roster.insert(
            client,
            Avatar {
                client,
                name: name.to_owned(),
                role,
                team,
                location: None,
                queue: VecDeque::new(),
                pointing: None,
                highlight: None,
            },
        );
        self.join_order.push(client);
        Ok(vec![Event::Joined { client, role, team }])
    }

    pub fn start_preparation(&mut self) -> Result<Vec<Event>, SessionError> {
        self.require_phase(&[Phase::Lobby])?;
        if self.trainer.client.is_none() {
            return Err(SessionError::NoTrainer);
        }
        if self.teams.is_empty() {
            return Err(SessionError::NoTeams);
        }
        for team in &self.teams {
            let n = team.hunters.len();
            if !(2..=3).contains(&n) {
                return Err(SessionError::IncompleteTeam {
                    team: team.id,
                    reason: format!("{n} hunters, a team needs 2 or 3"),
                });
            }
        }
        self.trainer.observed = self.teams.iter().map(|t| t.id).collect();
        self.phase = Phase::Preparation;
        Ok(vec![Event::PhaseChanged {
            phase: Phase::Preparation,
        }])
    }

    /// Spawn everyone in the start room and start the hunt clock.
    pub fn start_hunt(&mut self) -> Result<Vec<Event>, SessionError> {
        self.require_phase(&[Phase::Preparation])?;
        let nodes = self.building.room_nodes(self.scenario.start_room());
        let first = nodes[0];
        for team in &self.teams {
            let mut hunters = team.hunters.clone();
            hunters.sort();
            for (i, h) in hunters.iter().enumerate() {
                let avatar = self.roster.get_mut(h).expect("team member in roster");
                avatar.location = Some(Location::Node {
                    node: nodes[i % nodes.len()],
                });
            }
        }
        for avatar in self.roster.values_mut() {
            if avatar.role != Role::Hunter {
                avatar.location = Some(Location::Node { node: first });
            }
        }
        self.phase = Phase::Hunting;
        self.hunt_start = Some(self.tick);
        Ok(vec![Event::PhaseChanged {
            phase: Phase::Hunting,
        }])
    }

    fn avatar_mut(&mut self, client: ClientId) -> Result<&mut Avatar, SessionError> {
        self.roster
            .get_mut(&client)
            .ok_or(SessionError::UnknownClient(client))
    }

    /// Queue one hop toward an adjacent node. Adjacency is judged from the
    /// node the hunter will reach once its queued hops are done.
    pub fn move_to(&mut self, client: ClientId, node: &NodeId) -> Result<(), SessionError> {
        self.require_phase(&[Phase::Hunting])?;
        let target = self
            .building
            .node_index(node)
            .map_err(|_| SessionError::UnknownNode(node.clone()))?;
        let building = Arc::clone(&self.building);
        let obstacles = self.scenario.obstacles().clone();
        let avatar = self.avatar_mut(client)?;
        if avatar.role != Role::Hunter {
            return Err(SessionError::WrongRole {
                client,
                role: avatar.role,
            });
        }
        let plan_from = planning_node(avatar).expect("hunters are placed while hunting");
        let adjacent = plan_from != target
            && building
                .incident_edges(plan_from)
                .iter()
                .any(|&e| building.graph_edge(e).other(plan_from) == target);
        if !adjacent {
            return Err(SessionError::NotAdjacent(node.clone()));
        }
        let edge = path::connecting_edge(&building, plan_from, target, &obstacles)
            .ok_or_else(|| SessionError::EdgeBlocked(node.clone()))?;
        avatar.queue.push_back((edge, target));
        Ok(())
    }

    /// Desktop clients jump between nodes instantly.
    pub fn move_radio(&mut self, client: ClientId, node: &NodeId) -> Result<(), SessionError> {
        self.require_phase(&[Phase::Hunting])?;
        let target = self
            .building
            .node_index(node)
            .map_err(|_| SessionError::UnknownNode(node.clone()))?;
        let avatar = self.avatar_mut(client)?;
        if avatar.role == Role::Hunter {
            return Err(SessionError::WrongRole {
                client,
                role: avatar.role,
            });
        }
        avatar.location = Some(Location::Node { node: target });
        Ok(())
    }

    pub fn set_pointing(&mut self, client: ClientId, angle: Option<f64>) -> Result<(), SessionError> {
        self.require_phase(&[Phase::Hunting])?;
        if matches!(angle, Some(a) if !a.is_finite()) {
            return Err(SessionError::InvalidAngle);
        }
        let avatar = self.avatar_mut(client)?;
        avatar.pointing = angle;
        if angle.is_none() {
            avatar.highlight = None;
        }
        Ok(())
    }

    /// Relay structured guidance from a team's radio to its hunters and the
    /// trainer.
    pub fn send_guidance(
        &mut self,
        client: ClientId,
        text: &str,
        directive: Option<Directive>,
    ) -> Result<Vec<Event>, SessionError> {
        self.require_phase(&[Phase::Preparation, Phase::Hunting])?;
        let avatar = self
            .roster
            .get(&client)
            .ok_or(SessionError::UnknownClient(client))?;
        let team = avatar
            .team
            .and_then(|t| self.team(t))
            .filter(|t| t.radio == client)
            .ok_or(SessionError::NotTeamRadio(client))?;
        let mut recipients = team.hunters.clone();
        recipients.extend(self.trainer.client);
        Ok(vec![Event::Guidance {
            from: client,
            team: team.id,
            text: text.to_owned(),
            directive,
            recipients,
        }])
    }

    pub fn screenshot(
        &mut self,
        client: ClientId,
        floor: &FloorId,
        viewpoint: Point,
        team: Option<TeamId>,
    ) -> Result<Vec<Event>, SessionError> {
        self.require_trainer(client)?;
        self.require_phase(&[Phase::Hunting])?;
        if self.building.floor_index(floor).is_err() {
            return Err(SessionError::UnknownFloor(floor.clone()));
        }
        if let Some(t) = team {
            if self.team(t).is_none() {
                return Err(SessionError::UnknownTeam(Some(t)));
            }
        }
        let shot = Screenshot {
            tick: self.tick,
            hunt_seconds: self.hunt_seconds(),
            floor: floor.clone(),
            viewpoint,
            team,
        };
        self.trainer.screenshots.push(shot.clone());
        Ok(vec![Event::ScreenshotTaken(shot)])
    }

    fn integrate_motion(&mut self) {
        let building = Arc::clone(&self.building);
        for avatar in self.roster.values_mut() {
            if avatar.role != Role::Hunter {
                continue;
            }
            let Some(mut loc) = avatar.location else {
                continue;
            };
            let mut budget = STEP_UM;
            while budget > 0 {
                match loc {
                    Location::Node { node } => {
                        let Some((edge, to)) = avatar.queue.pop_front() else {
                            break;
                        };
                        loc = Location::Edge {
                            edge,
                            from: node,
                            to,
                            traveled_um: 0,
                        };
                    }
                    Location::Edge {
                        edge,
                        from,
                        to,
                        traveled_um,
                    } => {
                        let remaining = building.graph_edge(edge).length_um - traveled_um;
                        if budget >= remaining {
                            budget -= remaining;
                            loc = Location::Node { node: to };
                        } else {
                            loc = Location::Edge {
                                edge,
                                from,
                                to,
                                traveled_um: traveled_um + budget,
                            };
                            budget = 0;
                        }
                    }
                }
            }
            avatar.location = Some(loc);
        }
    }

    fn resolve_pointing(&mut self) {
        let building = Arc::clone(&self.building);
        for avatar in self.roster.values_mut() {
            avatar.highlight = match (avatar.pointing, avatar.location) {
                (Some(angle), Some(loc)) => {
                    let at = placement(&building, loc);
                    cast_on_floor(&building.floors[at.floor], at.pos, angle, POINTING_RANGE_M)
                        .equipment()
                        .cloned()
                }
                _ => None,
            };
        }
    }

    fn update_validation(&mut self) -> Vec<Event> {
        let mut events = Vec::new();
        let hunt = self.scenario.hunt_type().clone();
        let start = self.hunt_start.expect("hunting has a start tick");
        for i in 0..self.teams.len() {
            if self.teams[i].finish_tick.is_some() {
                continue;
            }
            let placements: Vec<(Placement, Option<&EquipmentId>)> = self.teams[i]
                .hunters
                .iter()
                .filter_map(|h| {
                    let a = &self.roster[h];
                    a.location
                        .map(|l| (placement(&self.building, l), a.highlight.as_ref()))
                })
                .collect();
            let observations: Vec<HunterObservation<'_>> = placements
                .iter()
                .map(|(p, hl)| HunterObservation {
                    floor: self.building.floor_id(p.floor),
                    position: p.pos,
                    highlight: *hl,
                })
                .collect();
            let met = objective_met(&hunt, &observations);
            let team = &mut self.teams[i];
            team.progress = advance(team.progress, met);
            if team.progress == VALIDATION_TICKS {
                team.finish_tick = Some(self.tick);
                events.push(Event::TeamFinished {
                    team: team.id,
                    finish_tick: self.tick,
                    seconds: ticks_to_seconds(self.tick - start),
                });
            }
        }
        if self.teams.iter().all(|t| t.finish_tick.is_some()) {
            self.phase = Phase::Debrief;
            self.hunt_end = Some(self.tick);
            events.push(Event::PhaseChanged {
                phase: Phase::Debrief,
            });
            events.push(Event::HuntEnded {
                scoreboard: self.scoreboard(),
            });
        }
        events
    }

    /// Finished teams by ascending time, then unfinished teams in roster order.
    pub fn scoreboard(&self) -> Vec<ScoreEntry> {
        let start = self.hunt_start.unwrap_or(0);
        let mut finished: Vec<(u64, usize, &Team)> = self
            .teams
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.finish_tick.map(|f| (f, i, t)))
            .collect();
        finished.sort_by_key(|&(f, i, _)| (f, i));
        let mut board: Vec<ScoreEntry> = finished
            .into_iter()
            .map(|(f, _, t)| ScoreEntry {
                team: t.id,
                seconds: Some(ticks_to_seconds(f - start)),
            })
            .collect();
        board.extend(
            self.teams
                .iter()
                .filter(|t| t.finish_tick.is_none())
                .map(|t| ScoreEntry {
                    team: t.id,
                    seconds: None,
                }),
        );
        board
    }

    pub fn placement_of(&self, client: ClientId) -> Option<Placement> {
        self.roster
            .get(&client)
            .and_then(|a| a.location)
            .map(|l| placement(&self.building, l))
    }

    /// 64-bit digest (16 hex digits) over a canonical serialization of every
    /// piece of mutable state.
    pub fn state_hash(&self) -> String {
        #[derive(Serialize)]
        struct Canonical<'a> {
            session_id: &'a str,
            seed: u64,
            phase: Phase,
            tick: u64,
            hunt_start: Option<u64>,
            hunt_end: Option<u64>,
            scenario: &'a HuntConfig,
            roster: &'a BTreeMap<ClientId, Avatar>,
            join_order: &'a [ClientId],
            teams: &'a [Team],
            trainer: &'a TrainerState,
        }
        let canonical = Canonical {
            session_id: &self.session_id,
            seed: self.seed,
            phase: self.phase,
            tick: self.tick,
            hunt_start: self.hunt_start,
            hunt_end: self.hunt_end,
            scenario: self.scenario.config(),
            roster: &self.roster,
            join_order: &self.join_order,
            teams: &self.teams,
            trainer: &self.trainer,
        };
        let bytes = serde_json::to_vec(&canonical).expect("state serializes");
        let digest = Sha256::digest(&bytes);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// The node a hunter will stand on once its queued hops complete.
fn planning_node(avatar: &Avatar) -> Option<usize> {
    if let Some(&(_, to)) = avatar.queue.back() {
        return Some(to);
    }
    match avatar.location? {
        Location::Node { node } => Some(node),
        Location::Edge { to, .. } => Some(to),
    }
}

/// World position for a graph location. An avatar on stairs stays on the
/// floor it left until it arrives.
pub fn placement(building: &Building, loc: Location) -> Placement {
    match loc {
        Location::Node { node } => {
            let n = building.graph_node(node);
            Placement {
                floor: n.floor,
                pos: n.pos,
            }
        }
        Location::Edge {
            edge,
            from,
            to,
            traveled_um,
        } => {
            let e = building.graph_edge(edge);
            let a = building.graph_node(from);
            let b = building.graph_node(to);
            let t = traveled_um as f64 / e.length_um as f64;
            Placement {
                floor: a.floor,
                pos: a.pos.lerp(b.pos, t),
            }
        }
    }
}

#[cfg(test)]
mod tests;
