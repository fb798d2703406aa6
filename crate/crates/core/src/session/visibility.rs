//! Per-client filtered views of the session.
//!
//! Hunters see their team's other hunters but never their radio, radios see
//! their own hunters, and nobody sees another team. The trainer sees every
//! avatar of the teams it observes and is itself shown only to the teams in
//! its `visible_to` set.

use serde::{Deserialize, Serialize};

use super::{placement, Avatar, Location, Phase, Role, Session, SessionError};
use crate::ids::{ClientId, EdgeId, EquipmentId, FloorId, NodeId, TeamId};
use crate::scenario::Marking;
use crate::ticks_to_seconds;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AvatarView {
    pub client: ClientId,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub team: Option<TeamId>,
    pub floor: FloorId,
    pub x: f64,
    pub y: f64,
    /// Set when standing on a node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<NodeId>,
    /// Final node of the queued route while moving.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pointing: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub highlight: Option<EquipmentId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeamStatus {
    pub team: TeamId,
    pub progress: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finish_seconds: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub tick: u64,
    pub phase: Phase,
    pub hunt_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub you: Option<AvatarView>,
    pub avatars: Vec<AvatarView>,
    pub markings: Vec<Marking>,
    pub obstacles: Vec<EdgeId>,
    pub teams: Vec<TeamStatus>,
}

impl Session {
    fn view_of(&self, avatar: &Avatar) -> Option<AvatarView> {
        let loc = avatar.location?;
        let at = placement(&self.building, loc);
        let node = match loc {
            Location::Node { node } => Some(self.building.graph_node(node).id.clone()),
            Location::Edge { .. } => None,
        };
        let heading = avatar
            .queue
            .back()
            .map(|&(_, to)| to)
            .or(match loc {
                Location::Edge { to, .. } => Some(to),
                Location::Node { .. } => None,
            })
            .map(|n| self.building.graph_node(n).id.clone());
        Some(AvatarView {
            client: avatar.client,
            role: avatar.role,
            team: avatar.team,
            floor: self.building.floor_id(at.floor).clone(),
            x: at.pos.x,
            y: at.pos.y,
            node,
            heading,
            pointing: avatar.pointing,
            highlight: avatar.highlight.clone(),
        })
    }

    /// Whether `viewer` may see `other` (never called with viewer == other).
    fn can_see(&self, viewer: &Avatar, other: &Avatar) -> bool {
        match viewer.role {
            Role::Trainer => other
                .team
                .map(|t| self.trainer.observed.contains(&t))
                .unwrap_or(false),
            Role::Hunter | Role::Radio => {
                let team = viewer.team.expect("learners belong to a team");
                match other.role {
                    Role::Trainer => self.trainer.visible_to.contains(&team),
                    Role::Hunter => other.team == Some(team),
                    Role::Radio => false,
                }
            }
        }
    }

    /// Snapshot restricted to what `client` is allowed to see.
    pub fn visibility_view(&self, client: ClientId) -> Result<Snapshot, SessionError> {
        let viewer = self
            .roster
            .get(&client)
            .ok_or(SessionError::UnknownClient(client))?;
        let avatars = self
            .avatars()
            .filter(|a| a.client != client && self.can_see(viewer, a))
            .filter_map(|a| self.view_of(a))
            .collect();
        let start = self.hunt_start.unwrap_or(self.tick);
        let teams = self
            .teams
            .iter()
            .filter(|t| match viewer.role {
                Role::Trainer => self.trainer.observed.contains(&t.id),
                _ => viewer.team == Some(t.id),
            })
            .map(|t| TeamStatus {
                team: t.id,
                progress: t.progress,
                finish_seconds: t.finish_tick.map(|f| ticks_to_seconds(f - start)),
            })
            .collect();
        Ok(Snapshot {
            tick: self.tick,
            phase: self.phase,
            hunt_seconds: self.hunt_seconds(),
            you: self.view_of(viewer),
            avatars,
            markings: self.scenario.markings().to_vec(),
            obstacles: self.scenario.obstacles().iter().cloned().collect(),
            teams,
        })
    }
}
