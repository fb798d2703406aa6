use std::collections::{BTreeMap, VecDeque};

use super::{
    decode, encode, peek_seq, DebriefData, DebriefQuery, Frame, Message, ScenarioSummary,
    WireError, PROTOCOL_VERSION,
};
use crate::ids::ClientId;
use crate::recording::{Debrief, EventKind, EventLog, LogError, CHECKPOINT_EVERY};
use crate::session::{Command, Event, Phase, Role, Session, SessionError};

pub type ConnId = u64;

#[derive(Clone, Debug)]
pub struct ServerConfig {
    /// Outbound frames a connection may have queued before it is detached.
    pub max_backlog: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig { max_backlog: 1024 }
    }
}

#[derive(Debug, Default)]
struct Conn {
    client: Option<ClientId>,
    last_seq: Option<u64>,
    out_seq: u64,
    outbox: VecDeque<String>,
    /// Cleared after a refusal or when the backlog overflows.
    open: bool,
}

#[derive(Debug)]
struct Pending {
    conn: ConnId,
    seq: u64,
    client: ClientId,
    command: Command,
}

/// Transport-agnostic server: feed it decoded bytes per connection, call
/// [`Server::tick`] at the tick rate and drain each connection's outbox.
pub struct Server {
    session: Session,
    log: EventLog,
    config: ServerConfig,
    conns: BTreeMap<ConnId, Conn>,
    by_client: BTreeMap<ClientId, ConnId>,
    next_conn: ConnId,
    next_client: u32,
    pending: Vec<Pending>,
    debrief: Option<(usize, Debrief)>,
    log_failure: Option<LogError>,
    ended: bool,
}

impl Server {
    pub fn new(session: Session, log: EventLog, config: ServerConfig) -> Server {
        Server {
            session,
            log,
            config,
            conns: BTreeMap::new(),
            by_client: BTreeMap::new(),
            next_conn: 1,
            next_client: 1,
            pending: Vec::new(),
            debrief: None,
            log_failure: None,
            ended: false,
        }
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn into_log(self) -> EventLog {
        self.log
    }

    /// First failure of the log sink, if any.
    pub fn log_failure(&self) -> Option<&LogError> {
        self.log_failure.as_ref()
    }

    pub fn connect(&mut self) -> ConnId {
        let id = self.next_conn;
        self.next_conn += 1;
        self.conns.insert(
            id,
            Conn {
                open: true,
                ..Conn::default()
            },
        );
        id
    }

    pub fn disconnect(&mut self, conn: ConnId) {
        if let Some(c) = self.conns.remove(&conn) {
            if let Some(client) = c.client {
                self.by_client.remove(&client);
            }
        }
    }

    /// False once the server refused or detached the connection; the
    /// transport should close it after draining.
    pub fn is_open(&self, conn: ConnId) -> bool {
        self.conns.get(&conn).map(|c| c.open).unwrap_or(false)
    }

    pub fn client_of(&self, conn: ConnId) -> Option<ClientId> {
        self.conns.get(&conn).and_then(|c| c.client)
    }

    pub fn connection_count(&self) -> usize {
        self.conns.len()
    }

    /// Take every queued outbound frame for `conn`.
    pub fn drain(&mut self, conn: ConnId) -> Vec<String> {
        self.conns
            .get_mut(&conn)
            .map(|c| c.outbox.drain(..).collect())
            .unwrap_or_default()
    }

    fn send(&mut self, conn: ConnId, message: Message) {
        let tick = self.session.tick();
        let max = self.config.max_backlog;
        let Some(c) = self.conns.get_mut(&conn) else {
            return;
        };
        if !c.open {
            return;
        }
        if c.outbox.len() >= max {
            c.open = false;
            c.outbox.clear();
            return;
        }
        c.out_seq += 1;
        let frame = Frame {
            seq: c.out_seq,
            tick: Some(tick),
            message,
        };
        let text = encode(&frame).unwrap_or_else(|e| {
            let nack = Message::Nack {
                seq: 0,
                error: WireError::new(e.code(), &e),
            };
            encode(&Frame { message: nack, ..frame }).expect("small frames encode")
        });
        c.outbox.push_back(text);
    }

    fn send_client(&mut self, client: ClientId, message: Message) {
        if let Some(&conn) = self.by_client.get(&client) {
            self.send(conn, message);
        }
    }

    fn broadcast(&mut self, message: Message) {
        let conns: Vec<ConnId> = self
            .conns
            .iter()
            .filter(|(_, c)| c.client.is_some())
            .map(|(id, _)| *id)
            .collect();
        for conn in conns {
            self.send(conn, message.clone());
        }
    }

    fn record(&mut self, kind: EventKind) {
        let tick = self.session.tick();
        if let Err(e) = self.log.append(tick, kind) {
            self.log_failure.get_or_insert(e);
        }
    }

    fn checkpoint(&mut self) {
        let hash = self.session.state_hash();
        self.record(EventKind::Checkpoint { hash });
    }

    fn nack(&mut self, conn: ConnId, seq: u64, error: WireError) {
        self.send(conn, Message::Nack { seq, error });
    }

    fn refuse(&mut self, conn: ConnId, reason: WireError) {
        self.send(conn, Message::Refused { reason });
        if let Some(c) = self.conns.get_mut(&conn) {
            c.open = false;
        }
    }

    /// Handle one inbound frame.
    pub fn receive(&mut self, conn: ConnId, bytes: &[u8]) {
        if !self.is_open(conn) {
            return;
        }
        let frame = match decode(bytes) {
            Ok(f) => f,
            Err(e) => {
                self.nack(conn, peek_seq(bytes), WireError::new(e.code(), &e));
                return;
            }
        };
        let seq = frame.seq;
        if !frame.message.is_client_message() {
            let tag = frame.message.type_tag();
            self.nack(
                conn,
                seq,
                WireError::new("UnexpectedMessage", format!("{tag} is a server message")),
            );
            return;
        }
        let c = self.conns.get_mut(&conn).expect("open connection exists");
        if c.last_seq.is_some_and(|last| seq <= last) {
            self.send(conn, Message::Ack { seq });
            return;
        }
        c.last_seq = Some(seq);
        let client = c.client;

        match (frame.message, client) {
            (Message::Hello { .. }, Some(_)) => {
                self.nack(conn, seq, WireError::new("AlreadyJoined", "hello already accepted"));
            }
            (
                Message::Hello {
                    protocol_version,
                    client_name,
                    role,
                    team_id,
                },
                None,
            ) => self.handshake(conn, protocol_version, client_name, role, team_id),
            (Message::Resume { .. }, _) => self.refuse(
                conn,
                WireError::new(
                    "ResumeUnsupported",
                    "reconnect with a fresh hello while the session is in the lobby",
                ),
            ),
            (_, None) => {
                self.nack(conn, seq, WireError::new("NotJoined", "send hello first"));
            }
            (Message::DebriefQuery(q), Some(client)) => self.debrief_query(conn, seq, client, q),
            (message, Some(client)) => {
                let command = to_command(message).expect("client messages map to commands");
                if self.session.phase() == Phase::Hunting && command.is_tick_bound() {
                    self.pending.push(Pending {
                        conn,
                        seq,
                        client,
                        command,
                    });
                } else {
                    match self.session.apply(client, &command) {
                        Ok(events) => {
                            self.record(EventKind::Cmd { client, command });
                            self.send(conn, Message::Ack { seq });
                            self.publish(events);
                        }
                        Err(e) => self.nack(conn, seq, session_error(&e)),
                    }
                }
            }
        }
    }

    fn handshake(
        &mut self,
        conn: ConnId,
        version: u32,
        name: String,
        role: Role,
        team: Option<crate::ids::TeamId>,
    ) {
        if version != PROTOCOL_VERSION {
            self.refuse(
                conn,
                WireError::new(
                    "VersionMismatch",
                    format!("server speaks protocol {PROTOCOL_VERSION}, client sent {version}"),
                ),
            );
            return;
        }
        let client = ClientId(self.next_client);
        let command = Command::Join { role, team, name };
        match self.session.apply(client, &command) {
            Ok(events) => {
                self.next_client += 1;
                self.record(EventKind::Cmd { client, command });
                if let Some(c) = self.conns.get_mut(&conn) {
                    c.client = Some(client);
                }
                self.by_client.insert(client, conn);
                let s = self.session.scenario();
                let welcome = Message::Welcome {
                    protocol_version: PROTOCOL_VERSION,
                    session_id: self.session.session_id().to_owned(),
                    client_id: client,
                    building_digest: self.session.building().digest().to_owned(),
                    scenario_summary: ScenarioSummary {
                        id: s.id().to_owned(),
                        hunt_type: s.hunt_type().clone(),
                        start_room: s.start_room().clone(),
                        objective_text: s.objective_text().to_owned(),
                    },
                };
                self.send(conn, welcome);
                self.publish(events);
            }
            Err(e) => self.refuse(
                conn,
                WireError::new("JoinRejected", format!("{}: {e}", e.code())),
            ),
        }
    }

    fn debrief_query(&mut self, conn: ConnId, seq: u64, client: ClientId, q: DebriefQuery) {
        if self.session.avatar(client).map(|a| a.role) != Some(Role::Trainer) {
            self.nack(conn, seq, session_error(&SessionError::NotTrainer(client)));
            return;
        }
        let fresh = matches!(&self.debrief, Some((n, _)) if *n == self.log.events().len());
        if !fresh {
            match Debrief::build(self.session.building().clone(), &self.log) {
                Ok(d) => self.debrief = Some((self.log.events().len(), d)),
                Err(e) => {
                    self.nack(conn, seq, WireError::new(e.code(), &e));
                    return;
                }
            }
        }
        let (_, d) = self.debrief.as_ref().expect("debrief built above");
        let answer = match q {
            DebriefQuery::Timeline => Ok(DebriefData::Timeline(d.timeline())),
            DebriefQuery::Scoreboard => Ok(DebriefData::Scoreboard {
                entries: d.scoreboard().to_vec(),
            }),
            DebriefQuery::TeamPaths { team, t0, t1 } => d
                .team_paths(team, t0, t1)
                .map(|paths| DebriefData::TeamPaths { team, paths }),
            DebriefQuery::CursorState { t } => d.cursor_state(t).map(DebriefData::CursorState),
        };
        match answer {
            Ok(data) => {
                self.send(conn, Message::Ack { seq });
                self.send(conn, Message::DebriefData(data));
            }
            Err(e) => self.nack(conn, seq, WireError::new(e.code(), &e)),
        }
    }

    /// Log transitions and fan out session events.
    fn publish(&mut self, events: Vec<Event>) {
        let mut transition = false;
        for event in events {
            match event {
                Event::PhaseChanged { phase } => {
                    self.record(EventKind::Phase { phase });
                    transition = true;
                }
                Event::TeamFinished {
                    team,
                    finish_tick,
                    seconds,
                } => {
                    self.record(EventKind::Finish {
                        team,
                        finish_tick,
                        seconds,
                    });
                    let entries = self.session.scoreboard();
                    self.broadcast(Message::Scoreboard { entries });
                }
                Event::HuntEnded { scoreboard } => {
                    self.broadcast(Message::HuntEnded { scoreboard });
                }
                Event::Guidance {
                    from,
                    team,
                    text,
                    directive,
                    recipients,
                } => {
                    for r in recipients {
                        self.send_client(
                            r,
                            Message::Guidance {
                                text: text.clone(),
                                directive: directive.clone(),
                                from: Some(from),
                                team: Some(team),
                            },
                        );
                    }
                }
                Event::Joined { .. } | Event::ScenarioChanged | Event::ScreenshotTaken(_) => {}
            }
        }
        if transition {
            self.checkpoint();
            self.send_snapshots();
        }
    }

    /// Advance the session by one tick while hunting, then send every
    /// attached client its filtered snapshot.
    pub fn tick(&mut self) {
        let pending = std::mem::take(&mut self.pending);
        if self.session.phase() == Phase::Hunting {
            let batch: Vec<(ClientId, Command)> =
                pending.iter().map(|p| (p.client, p.command.clone())).collect();
            let out = self.session.step(&batch);
            for (p, result) in pending.into_iter().zip(out.results) {
                match result {
                    Ok(events) => {
                        self.record(EventKind::TickCmd {
                            client: p.client,
                            command: p.command,
                        });
                        self.send(p.conn, Message::Ack { seq: p.seq });
                        self.publish(events);
                    }
                    Err(e) => self.nack(p.conn, p.seq, session_error(&e)),
                }
            }
            let ended = self.session.phase() != Phase::Hunting;
            self.publish(out.events);
            if !ended && self.session.tick() % CHECKPOINT_EVERY == 0 {
                self.checkpoint();
            }
        } else {
            let actual = self.session.phase();
            for p in pending {
                self.nack(p.conn, p.seq, session_error(&SessionError::WrongPhase { actual }));
            }
        }
        self.send_snapshots();
    }

    fn send_snapshots(&mut self) {
        let targets: Vec<(ConnId, ClientId)> = self
            .conns
            .iter()
            .filter(|(_, c)| c.open)
            .filter_map(|(id, c)| c.client.map(|cl| (*id, cl)))
            .collect();
        for (conn, client) in targets {
            if let Ok(view) = self.session.visibility_view(client) {
                self.send(conn, Message::Snapshot(view));
            }
        }
    }

    /// Write the closing `end` record and flush the log. Idempotent.
    pub fn shutdown(&mut self) -> Result<(), LogError> {
        if !self.ended {
            self.ended = true;
            let hash = self.session.state_hash();
            self.record(EventKind::End { hash });
        }
        self.log.flush()?;
        match self.log_failure.take() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

fn session_error(e: &SessionError) -> WireError {
    WireError::new(e.code(), e)
}

fn to_command(message: Message) -> Option<Command> {
    Some(match message {
        Message::CreateHunt { config } => Command::CreateHunt { config },
        Message::PlaceObstacle { edge } => Command::PlaceObstacle { edge },
        Message::StartPreparation {} => Command::StartPreparation,
        Message::StartHunt {} => Command::StartHunt,
        Message::MoveTo { node } => Command::MoveTo { node },
        Message::MoveRadio { node } => Command::MoveRadio { node },
        Message::Point { angle } => Command::Point { angle },
        Message::Guidance {
            text, directive, ..
        } => Command::Guidance { text, directive },
        Message::Screenshot {
            floor,
            viewpoint,
            team,
        } => Command::Screenshot {
            floor,
            viewpoint,
            team,
        },
        Message::SetVisibility { teams } => Command::SetVisibility { teams },
        Message::Observe { teams } => Command::Observe { teams },
        _ => return None,
    })
}
