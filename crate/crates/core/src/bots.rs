//! Scripted clients that play whole hunts over the real wire protocol.
//!
//! Every bot owns a loopback connection to a [`Server`] and only ever sees
//! encoded frames. The radio bot knows the building and plans routes; hunter
//! bots know nothing but the guidance they receive (and, when not fully
//! compliant, the graph around them).

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::building::Building;
use crate::geometry::Point;
use crate::ids::{ClientId, EdgeId, FloorId, NodeId, TeamId};
use crate::path;
use crate::protocol::{decode, encode, ConnId, Frame, Message, Server, ServerConfig, WireError};
use crate::recording::{EventLog, LogError, LogHeader};
use crate::scenario::{self, HuntConfig, HuntType, Scenario, ScenarioError};
use crate::session::{AvatarView, Directive, Role, ScoreEntry, Session, SessionError, Snapshot};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BotPolicy {
    /// Ticks between receiving guidance and acting on it.
    pub reaction_delay: u64,
    /// Probability of following a waypoint; otherwise a random neighbour.
    pub compliance: f64,
}

impl Default for BotPolicy {
    fn default() -> Self {
        BotPolicy {
            reaction_delay: 0,
            compliance: 1.0,
        }
    }
}

/// Plans routes for its team and turns them into structured guidance.
#[derive(Debug)]
pub struct RadioBot {
    building: Arc<Building>,
    hunt: HuntType,
    team: TeamId,
    /// Last (planning node, advice) sent per hunter.
    sent: BTreeMap<ClientId, (usize, Advice)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Advice {
    Waypoint(usize),
    Point,
    Wait,
}

impl RadioBot {
    pub fn new(building: Arc<Building>, hunt: HuntType, team: TeamId) -> RadioBot {
        RadioBot {
            building,
            hunt,
            team,
            sent: BTreeMap::new(),
        }
    }

    /// Objective node to head for from `from`: the reachable objective
    /// node closest to the objective centre, ties broken by node id.
    pub fn target_node(&self, from: usize, blocked: &BTreeSet<EdgeId>) -> Option<usize> {
        let b = &self.building;
        let center = scenario::hunt_region(b, &self.hunt).center;
        let candidates = scenario::hunt_nodes(b, &self.hunt);
        let seen = path::component(b, from, blocked);
        candidates.into_iter().filter(|&n| seen[n]).min_by(|&x, &y| {
            let dx = b.graph_node(x).pos.distance(center);
            let dy = b.graph_node(y).pos.distance(center);
            dx.total_cmp(&dy).then_with(|| b.graph_node(x).id.cmp(&b.graph_node(y).id))
        })
    }

    /// Guidance for every hunter in a snapshot, only where the advice for
    /// that hunter changed since the last call.
    pub fn step(&mut self, snapshot: &Snapshot) -> Vec<Directive> {
        let blocked: BTreeSet<EdgeId> = snapshot.obstacles.iter().cloned().collect();
        let mut out = Vec::new();
        for a in &snapshot.avatars {
            if a.role != Role::Hunter || a.team != Some(self.team) {
                continue;
            }
            let Some(plan) = planning_node(&self.building, a) else {
                continue;
            };
            let stationary = a.heading.is_none() && a.node.is_some();
            let advice = self.advise(plan, stationary, &blocked);
            if self.sent.get(&a.client) == Some(&(plan, advice)) {
                continue;
            }
            self.sent.insert(a.client, (plan, advice));
            match advice {
                Advice::Waypoint(n) => out.push(Directive::Waypoint {
                    hunter: a.client,
                    node: self.building.graph_node(n).id.clone(),
                }),
                Advice::Point => {
                    let center = scenario::hunt_region(&self.building, &self.hunt).center;
                    let from = self.building.graph_node(plan).pos;
                    out.push(Directive::Point {
                        hunter: a.client,
                        angle: from.angle_to(center),
                    });
                }
                Advice::Wait => {}
            }
        }
        out
    }

    fn advise(&self, plan: usize, stationary: bool, blocked: &BTreeSet<EdgeId>) -> Advice {
        let Some(target) = self.target_node(plan, blocked) else {
            return Advice::Wait;
        };
        if plan != target {
            return match path::shortest_path_idx(&self.building, plan, target, blocked) {
                Some((nodes, _)) => Advice::Waypoint(nodes[1]),
                None => Advice::Wait,
            };
        }
        match (&self.hunt, stationary) {
            (HuntType::PointAtEquipment { .. }, true) => Advice::Point,
            _ => Advice::Wait,
        }
    }
}

fn planning_node(building: &Building, a: &AvatarView) -> Option<usize> {
    a.heading
        .as_ref()
        .or(a.node.as_ref())
        .and_then(|n| building.node_index(n).ok())
}

/// Follows guidance addressed to it, after a reaction delay.
#[derive(Debug)]
pub struct HunterBot {
    building: Arc<Building>,
    policy: BotPolicy,
    rng: ChaCha8Rng,
    me: Option<ClientId>,
    tick: u64,
    you: Option<AvatarView>,
    scheduled: VecDeque<(u64, Directive)>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum HunterAction {
    MoveTo { node: NodeId, guided: NodeId },
    Point(f64),
}

impl HunterBot {
    pub fn new(building: Arc<Building>, policy: BotPolicy, seed: u64) -> HunterBot {
        HunterBot {
            building,
            policy,
            rng: ChaCha8Rng::seed_from_u64(seed),
            me: None,
            tick: 0,
            you: None,
            scheduled: VecDeque::new(),
        }
    }

    pub fn client(&self) -> Option<ClientId> {
        self.me
    }

    pub fn set_client(&mut self, client: ClientId) {
        self.me = Some(client);
    }

    pub fn observe(&mut self, tick: u64, you: Option<AvatarView>) {
        self.tick = tick;
        if you.is_some() {
            self.you = you;
        }
    }

    /// Queue a directive; ignored unless addressed to this hunter.
    pub fn guide(&mut self, tick: u64, d: Directive) {
        let mine = match &d {
            Directive::Waypoint { hunter, .. } | Directive::Point { hunter, .. } => {
                Some(*hunter) == self.me
            }
        };
        if mine {
            self.tick = self.tick.max(tick);
            self.scheduled.push_back((tick + self.policy.reaction_delay, d));
        }
    }

    /// Actions whose reaction delay has elapsed by `now`.
    pub fn due(&mut self, now: u64) -> Vec<HunterAction> {
        let mut out = Vec::new();
        while let Some((at, _)) = self.scheduled.front() {
            if *at > now {
                break;
            }
            let (_, d) = self.scheduled.pop_front().expect("front exists");
            out.push(match d {
                Directive::Waypoint { node, .. } => HunterAction::MoveTo {
                    node: self.choose(&node),
                    guided: node,
                },
                Directive::Point { angle, .. } => HunterAction::Point(angle),
            });
        }
        out
    }

    fn choose(&mut self, guided: &NodeId) -> NodeId {
        if self.policy.compliance >= 1.0 || self.rng.gen::<f64>() < self.policy.compliance {
            return guided.clone();
        }
        let Some(plan) = self.you.as_ref().and_then(|y| planning_node(&self.building, y)) else {
            return guided.clone();
        };
        let neighbours: Vec<usize> = self
            .building
            .incident_edges(plan)
            .iter()
            .map(|&e| self.building.graph_edge(e).other(plan))
            .collect();
        let pick = neighbours[self.rng.gen_range(0..neighbours.len())];
        self.building.graph_node(pick).id.clone()
    }
}

/// Scripted trainer actions keyed by hunt-relative tick.
#[derive(Clone, Debug, Default)]
pub struct TrainerScript {
    pub screenshots: Vec<(u64, FloorId, Point)>,
    pub visibility: Vec<(u64, BTreeSet<TeamId>)>,
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub teams: usize,
    pub hunters_per_team: usize,
    pub seed: u64,
    /// One policy per team; the last one repeats for extra teams.
    pub policies: Vec<BotPolicy>,
    /// Hunt ticks before giving up.
    pub max_ticks: u64,
    pub trainer: TrainerScript,
    pub started_at: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            teams: 1,
            hunters_per_team: 2,
            seed: 0,
            policies: vec![BotPolicy::default()],
            max_ticks: 12_000,
            trainer: TrainerScript::default(),
            started_at: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("bot was refused: {} ({})", .0.code, .0.message)]
    Refused(WireError),
    #[error("hunt not finished after {0} ticks")]
    Timeout(u64),
    #[error(transparent)]
    Log(#[from] LogError),
}

impl SimError {
    pub fn code(&self) -> &'static str {
        match self {
            SimError::Scenario(e) => e.code(),
            SimError::Session(e) => e.code(),
            SimError::Refused(_) => "Refused",
            SimError::Timeout(_) => "Timeout",
            SimError::Log(e) => e.code(),
        }
    }
}

#[derive(Debug)]
pub struct SimOutcome {
    pub log: EventLog,
    pub scoreboard: Vec<ScoreEntry>,
    pub final_hash: String,
    pub hunt_ticks: u64,
}

enum Agent {
    Trainer,
    Radio(RadioBot),
    Hunter(HunterBot),
}

struct Bot {
    conn: ConnId,
    seq: u64,
    role: Role,
    team: Option<TeamId>,
    client: Option<ClientId>,
    agent: Agent,
    /// Outstanding moves by seq: (chosen node, guided node).
    moves: BTreeMap<u64, (NodeId, NodeId)>,
}

/// Every frame a bot receives, for inspection by tests.
pub struct FrameSeen<'a> {
    pub client: Option<ClientId>,
    pub role: Role,
    pub team: Option<TeamId>,
    pub frame: &'a Frame,
    pub raw: &'a str,
}

struct Driver<'o> {
    server: Server,
    bots: Vec<Bot>,
    observer: Box<dyn FnMut(FrameSeen<'_>) + 'o>,
    refusal: Option<WireError>,
}

impl Driver<'_> {
    fn send(&mut self, i: usize, message: Message) -> u64 {
        let bot = &mut self.bots[i];
        bot.seq += 1;
        let text = encode(&Frame::new(bot.seq, message)).expect("bot frames are small");
        let conn = bot.conn;
        self.server.receive(conn, text.as_bytes());
        self.bots[i].seq
    }

    /// Deliver frames until no bot has anything left to say.
    fn pump(&mut self) {
        loop {
            let mut quiet = true;
            for i in 0..self.bots.len() {
                let frames = self.server.drain(self.bots[i].conn);
                for raw in frames {
                    quiet = false;
                    let frame = decode(raw.as_bytes()).expect("server frames decode");
                    let bot = &self.bots[i];
                    (self.observer)(FrameSeen {
                        client: bot.client,
                        role: bot.role,
                        team: bot.team,
                        frame: &frame,
                        raw: &raw,
                    });
                    self.handle(i, frame);
                }
            }
            if quiet {
                break;
            }
        }
    }

    fn handle(&mut self, i: usize, frame: Frame) {
        let tick = frame.tick.unwrap_or(0);
        let mut outgoing = Vec::new();
        let mut messages = Vec::new();
        let bot = &mut self.bots[i];
        match (frame.message, &mut bot.agent) {
            (Message::Welcome { client_id, .. }, agent) => {
                bot.client = Some(client_id);
                if let Agent::Hunter(h) = agent {
                    h.set_client(client_id);
                }
            }
            (Message::Refused { reason }, _) => {
                self.refusal.get_or_insert(reason);
            }
            (Message::Snapshot(snap), Agent::Radio(radio)) => {
                for d in radio.step(&snap) {
                    let text = match &d {
                        Directive::Waypoint { hunter, node } => format!("{hunter}: go to {node}"),
                        Directive::Point { hunter, angle } => {
                            format!("{hunter}: point at {angle:.3} rad")
                        }
                    };
                    messages.push(Message::Guidance {
                        text,
                        directive: Some(d),
                        from: None,
                        team: None,
                    });
                }
            }
            (Message::Snapshot(snap), Agent::Hunter(h)) => h.observe(tick, snap.you),
            (Message::Guidance { directive: Some(d), .. }, Agent::Hunter(h)) => {
                h.guide(tick, d);
                if h.policy.reaction_delay == 0 {
                    outgoing.extend(h.due(tick));
                }
            }
            (Message::Nack { seq, .. }, Agent::Hunter(_)) => {
                if let Some((chosen, guided)) = bot.moves.remove(&seq) {
                    if chosen != guided {
                        outgoing.push(HunterAction::MoveTo {
                            node: guided.clone(),
                            guided,
                        });
                    }
                }
            }
            (Message::Ack { seq }, Agent::Hunter(_)) => {
                bot.moves.remove(&seq);
            }
            _ => {}
        }
        for m in messages {
            self.send(i, m);
        }
        for a in outgoing {
            self.act(i, a);
        }
    }

    fn act(&mut self, i: usize, action: HunterAction) {
        match action {
            HunterAction::MoveTo { node, guided } => {
                let seq = self.send(i, Message::MoveTo { node: node.clone() });
                self.bots[i].moves.insert(seq, (node, guided));
            }
            HunterAction::Point(angle) => {
                self.send(i, Message::Point { angle: Some(angle) });
            }
        }
    }
}

/// Play a complete hunt: lobby, preparation, hunting until every team has
/// validated, then debrief. The returned log replays to the same state.
pub fn run_simulation(
    building: Arc<Building>,
    config: HuntConfig,
    sim: &SimConfig,
) -> Result<SimOutcome, SimError> {
    run_simulation_observed(building, config, sim, |_| {})
}

pub fn run_simulation_observed<'o>(
    building: Arc<Building>,
    config: HuntConfig,
    sim: &SimConfig,
    observer: impl FnMut(FrameSeen<'_>) + 'o,
) -> Result<SimOutcome, SimError> {
    let scenario: Scenario = scenario::create_hunt(&building, config)?;
    let hunt = scenario.hunt_type().clone();
    let session = Session::new(building.clone(), scenario, sim.seed)?;
    let log = EventLog::new(LogHeader::for_session(&session, sim.started_at));
    let server = Server::new(session, log, ServerConfig::default());
    let mut driver = Driver {
        server,
        bots: Vec::new(),
        observer: Box::new(observer),
        refusal: None,
    };

    let add = |driver: &mut Driver<'_>, role: Role, team: Option<TeamId>, agent: Agent| {
        let conn = driver.server.connect();
        driver.bots.push(Bot {
            conn,
            seq: 0,
            role,
            team,
            client: None,
            agent,
            moves: BTreeMap::new(),
        });
    };
    add(&mut driver, Role::Trainer, None, Agent::Trainer);
    for t in 0..sim.teams {
        let team = TeamId(t as u32 + 1);
        let policy = sim
            .policies
            .get(t)
            .or(sim.policies.last())
            .copied()
            .unwrap_or_default();
        add(
            &mut driver,
            Role::Radio,
            Some(team),
            Agent::Radio(RadioBot::new(building.clone(), hunt.clone(), team)),
        );
        for h in 0..sim.hunters_per_team {
            let seed = sim.seed ^ ((t as u64 + 1) << 32) ^ (h as u64 + 1);
            add(
                &mut driver,
                Role::Hunter,
                Some(team),
                Agent::Hunter(HunterBot::new(building.clone(), policy, seed)),
            );
        }
    }

    for i in 0..driver.bots.len() {
        let (role, team) = (driver.bots[i].role, driver.bots[i].team);
        let name = match role {
            Role::Trainer => "trainer-bot".to_owned(),
            Role::Radio => format!("radio-bot-{}", team.map(|t| t.0).unwrap_or(0)),
            Role::Hunter => format!("hunter-bot-{i}"),
        };
        driver.send(
            i,
            Message::Hello {
                protocol_version: crate::protocol::PROTOCOL_VERSION,
                client_name: name,
                role,
                team_id: team,
            },
        );
        driver.pump();
    }
    if let Some(r) = driver.refusal.take() {
        return Err(SimError::Refused(r));
    }

    for m in [Message::StartPreparation {}, Message::StartHunt {}] {
        driver.send(0, m);
        driver.pump();
    }
    let session = driver.server.session();
    if session.phase() != crate::session::Phase::Hunting {
        // surface the session's own reason
        let mut probe = session.clone();
        probe.start_preparation()?;
        probe.start_hunt()?;
    }
    let start = session.hunt_start().expect("hunt started");

    let mut shots: VecDeque<_> = sim.trainer.screenshots.iter().cloned().collect();
    let mut toggles: VecDeque<_> = sim.trainer.visibility.iter().cloned().collect();
    while driver.server.session().phase() == crate::session::Phase::Hunting {
        let now = driver.server.session().tick();
        if now - start >= sim.max_ticks {
            return Err(SimError::Timeout(sim.max_ticks));
        }
        while shots.front().is_some_and(|s| s.0 <= now - start) {
            let (_, floor, viewpoint) = shots.pop_front().expect("front exists");
            driver.send(
                0,
                Message::Screenshot {
                    floor,
                    viewpoint,
                    team: None,
                },
            );
        }
        while toggles.front().is_some_and(|s| s.0 <= now - start) {
            let (_, teams) = toggles.pop_front().expect("front exists");
            driver.send(0, Message::SetVisibility { teams });
        }
        for i in 0..driver.bots.len() {
            if let Agent::Hunter(h) = &mut driver.bots[i].agent {
                for a in h.due(now) {
                    driver.act(i, a);
                }
            }
        }
        driver.server.tick();
        driver.pump();
    }

    driver.server.shutdown()?;
    let session = driver.server.session();
    let scoreboard = session.scoreboard();
    let final_hash = session.state_hash();
    let hunt_ticks = session.tick() - start;
    Ok(SimOutcome {
        log: driver.server.into_log(),
        scoreboard,
        final_hash,
        hunt_ticks,
    })
}
