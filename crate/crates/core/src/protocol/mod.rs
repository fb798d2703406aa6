//! Wire protocol: a catalog of JSON messages wrapped in sequenced frames,
//! and a transport-agnostic [`Server`] that multiplexes connections onto a
//! single session.
//!
//! A frame is one JSON object `{"seq": n, "tick": t?, "type": tag, "body": {..}}`.
//! Over WebSocket each text message carries one frame; in TCP test mode
//! frames are newline delimited.

mod server;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::geometry::Point;
use crate::ids::{ClientId, EdgeId, FloorId, NodeId, RoomId, TeamId};
use crate::recording::{CursorState, HunterPath, Timeline};
use crate::scenario::{HuntConfig, HuntType};
use crate::session::{Directive, Role, ScoreEntry, Snapshot};

pub use server::{ConnId, Server, ServerConfig};

pub const PROTOCOL_VERSION: u32 = 1;
pub const MAX_FRAME_BYTES: usize = 64 * 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("unknown message type {0:?}")]
    UnknownType(String),
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("frame of {0} bytes exceeds the 64 KiB limit")]
    OversizeFrame(usize),
}

impl ProtocolError {
    pub fn code(&self) -> &'static str {
        match self {
            ProtocolError::UnknownType(_) | ProtocolError::Malformed(_) => "DecodeError",
            ProtocolError::OversizeFrame(_) => "OversizeFrame",
        }
    }
}

/// Error payload carried by `nack` and `refused`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireError {
    pub code: String,
    pub message: String,
}

impl WireError {
    pub fn new(code: impl Into<String>, message: impl ToString) -> WireError {
        WireError {
            code: code.into(),
            message: message.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub id: String,
    pub hunt_type: HuntType,
    pub start_room: RoomId,
    pub objective_text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "query", rename_all = "snake_case")]
pub enum DebriefQuery {
    Timeline,
    Scoreboard,
    TeamPaths { team: TeamId, t0: f64, t1: f64 },
    CursorState { t: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DebriefData {
    Timeline(Timeline),
    Scoreboard { entries: Vec<ScoreEntry> },
    TeamPaths { team: TeamId, paths: Vec<HunterPath> },
    CursorState(CursorState),
}

/// Every message of protocol version 1, both directions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "body", rename_all = "snake_case")]
pub enum Message {
    // client -> server
    Hello {
        protocol_version: u32,
        client_name: String,
        role: Role,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        team_id: Option<TeamId>,
    },
    CreateHunt {
        config: HuntConfig,
    },
    PlaceObstacle {
        edge: EdgeId,
    },
    StartPreparation {},
    StartHunt {},
    MoveTo {
        node: NodeId,
    },
    MoveRadio {
        node: NodeId,
    },
    Point {
        angle: Option<f64>,
    },
    /// Sent by a radio; relayed by the server to the team's hunters and
    /// the trainer with `from` and `team` filled in.
    Guidance {
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        directive: Option<Directive>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        from: Option<ClientId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        team: Option<TeamId>,
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
    DebriefQuery(DebriefQuery),
    /// Reserved; refused by version 1 servers.
    Resume {
        client_id: ClientId,
        token: String,
    },

    // server -> client
    Welcome {
        protocol_version: u32,
        session_id: String,
        client_id: ClientId,
        building_digest: String,
        scenario_summary: ScenarioSummary,
    },
    Ack {
        seq: u64,
    },
    Nack {
        seq: u64,
        error: WireError,
    },
    Snapshot(Snapshot),
    Scoreboard {
        entries: Vec<ScoreEntry>,
    },
    HuntEnded {
        scoreboard: Vec<ScoreEntry>,
    },
    DebriefData(DebriefData),
    Refused {
        reason: WireError,
    },
}

/// Message tags sent by clients.
pub const CLIENT_TYPES: &[&str] = &[
    "hello",
    "create_hunt",
    "place_obstacle",
    "start_preparation",
    "start_hunt",
    "move_to",
    "move_radio",
    "point",
    "guidance",
    "screenshot",
    "set_visibility",
    "observe",
    "debrief_query",
    "resume",
];

/// Message tags sent by the server.
pub const SERVER_TYPES: &[&str] = &[
    "welcome",
    "ack",
    "nack",
    "snapshot",
    "guidance",
    "scoreboard",
    "hunt_ended",
    "debrief_data",
    "refused",
];

impl Message {
    pub fn type_tag(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "hello",
            Message::CreateHunt { .. } => "create_hunt",
            Message::PlaceObstacle { .. } => "place_obstacle",
            Message::StartPreparation {} => "start_preparation",
            Message::StartHunt {} => "start_hunt",
            Message::MoveTo { .. } => "move_to",
            Message::MoveRadio { .. } => "move_radio",
            Message::Point { .. } => "point",
            Message::Guidance { .. } => "guidance",
            Message::Screenshot { .. } => "screenshot",
            Message::SetVisibility { .. } => "set_visibility",
            Message::Observe { .. } => "observe",
            Message::DebriefQuery(_) => "debrief_query",
            Message::Resume { .. } => "resume",
            Message::Welcome { .. } => "welcome",
            Message::Ack { .. } => "ack",
            Message::Nack { .. } => "nack",
            Message::Snapshot(_) => "snapshot",
            Message::Scoreboard { .. } => "scoreboard",
            Message::HuntEnded { .. } => "hunt_ended",
            Message::DebriefData(_) => "debrief_data",
            Message::Refused { .. } => "refused",
        }
    }

    /// Whether clients may send this message.
    pub fn is_client_message(&self) -> bool {
        CLIENT_TYPES.contains(&self.type_tag())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub seq: u64,
    pub tick: Option<u64>,
    pub message: Message,
}

impl Frame {
    pub fn new(seq: u64, message: Message) -> Frame {
        Frame {
            seq,
            tick: None,
            message,
        }
    }
}

pub fn encode(frame: &Frame) -> Result<String, ProtocolError> {
    let mut value = serde_json::to_value(&frame.message).expect("messages serialize");
    let obj = value.as_object_mut().expect("adjacently tagged enums are objects");
    if !obj.contains_key("body") {
        obj.insert("body".into(), Value::Object(Default::default()));
    }
    obj.insert("seq".into(), frame.seq.into());
    if let Some(t) = frame.tick {
        obj.insert("tick".into(), t.into());
    }
    let text = serde_json::to_string(&value).expect("values serialize");
    if text.len() > MAX_FRAME_BYTES {
        return Err(ProtocolError::OversizeFrame(text.len()));
    }
    Ok(text)
}

pub fn decode(bytes: &[u8]) -> Result<Frame, ProtocolError> {
    if bytes.len() > MAX_FRAME_BYTES {
        return Err(ProtocolError::OversizeFrame(bytes.len()));
    }
    let mut value: Value =
        serde_json::from_slice(bytes).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| ProtocolError::Malformed("frame is not an object".into()))?;
    let tag = obj
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| ProtocolError::Malformed("missing type".into()))?
        .to_owned();
    if !CLIENT_TYPES.contains(&tag.as_str()) && !SERVER_TYPES.contains(&tag.as_str()) {
        return Err(ProtocolError::UnknownType(tag));
    }
    obj.entry("body").or_insert_with(|| Value::Object(Default::default()));
    let seq = obj
        .remove("seq")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| ProtocolError::Malformed("missing or invalid seq".into()))?;
    let tick = match obj.remove("tick") {
        None | Some(Value::Null) => None,
        Some(v) => Some(
            v.as_u64()
                .ok_or_else(|| ProtocolError::Malformed("invalid tick".into()))?,
        ),
    };
    let message: Message =
        serde_json::from_value(value).map_err(|e| ProtocolError::Malformed(format!("{tag}: {e}")))?;
    Ok(Frame { seq, tick, message })
}

/// Best-effort `seq` of an undecodable frame, used to address the nack.
pub fn peek_seq(bytes: &[u8]) -> u64 {
    serde_json::from_slice::<Value>(bytes)
        .ok()
        .and_then(|v| v.get("seq").and_then(Value::as_u64))
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_shape() {
        let f = Frame {
            seq: 3,
            tick: Some(9),
            message: Message::MoveTo { node: "n2".into() },
        };
        let text = encode(&f).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["seq"], 3);
        assert_eq!(v["tick"], 9);
        assert_eq!(v["type"], "move_to");
        assert_eq!(v["body"]["node"], "n2");
        assert_eq!(decode(text.as_bytes()).unwrap(), f);
    }

    #[test]
    fn empty_bodies_are_objects() {
        let text = encode(&Frame::new(1, Message::StartHunt {})).unwrap();
        assert_eq!(text, r#"{"body":{},"seq":1,"type":"start_hunt"}"#);
        let text = r#"{"seq":1,"type":"start_preparation"}"#;
        assert_eq!(decode(text.as_bytes()).unwrap().message, Message::StartPreparation {});
    }

    #[test]
    fn unknown_type_carries_tag() {
        let text = r#"{"seq":1,"type":"nope","body":{}}"#;
        assert_eq!(
            decode(text.as_bytes()),
            Err(ProtocolError::UnknownType("nope".into()))
        );
    }

    #[test]
    fn oversize_frames() {
        let big = format!(
            r#"{{"seq":1,"type":"guidance","body":{{"text":"{}"}}}}"#,
            "x".repeat(70 * 1024)
        );
        assert!(matches!(
            decode(big.as_bytes()),
            Err(ProtocolError::OversizeFrame(_))
        ));
        let f = Frame::new(
            1,
            Message::Guidance {
                text: "x".repeat(70 * 1024),
                directive: None,
                from: None,
                team: None,
            },
        );
        assert!(matches!(encode(&f), Err(ProtocolError::OversizeFrame(_))));
    }

    #[test]
    fn malformed_frames() {
        for text in [
            "[]",
            "{",
            r#"{"type":"ack","body":{"seq":1}}"#,
            r#"{"seq":1,"type":"move_to","body":{}}"#,
            r#"{"seq":-1,"type":"start_hunt","body":{}}"#,
        ] {
            assert!(
                matches!(decode(text.as_bytes()), Err(ProtocolError::Malformed(_))),
                "{text}"
            );
        }
        assert_eq!(peek_seq(br#"{"seq":12,"type":"zzz"}"#), 12);
        assert_eq!(peek_seq(b"garbage"), 0);
    }

    #[test]
    fn catalog_is_partitioned() {
        let all: BTreeSet<_> = CLIENT_TYPES.iter().chain(SERVER_TYPES).collect();
        // guidance travels both ways
        assert_eq!(all.len(), CLIENT_TYPES.len() + SERVER_TYPES.len() - 1);
        assert!(Message::Ack { seq: 1 }.type_tag() == "ack");
        assert!(!Message::Ack { seq: 1 }.is_client_message());
        assert!(Message::StartHunt {}.is_client_message());
    }
}
