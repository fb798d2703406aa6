//! Authoritative session server core for a collaborative treasure hunt used
//! in building-navigation training.
//!
//! Hunters walk a navigation graph and point at equipment; radios guide them
//! from floor maps; a trainer authors the hunt, observes and debriefs. The
//! [`session`] core is a deterministic tick simulation, [`protocol`] is the
//! wire layer on top of it, [`recording`] logs and replays sessions, and
//! [`bots`] drives whole hunts unattended over the real protocol.

pub mod bots;
pub mod building;
pub mod fixtures;
pub mod geometry;
pub mod ids;
pub mod path;
pub mod protocol;
pub mod raycast;
pub mod recording;
pub mod scenario;
pub mod session;

pub use building::{Building, BuildingError};
pub use ids::{ClientId, EdgeId, EquipmentId, FloorId, NodeId, RoomId, TeamId};
pub use scenario::{HuntConfig, HuntType, Scenario, ScenarioError};

/// Simulation step, seconds.
pub const TICK_SECONDS: f64 = 0.05;
pub const TICKS_PER_SECOND: u64 = 20;
/// Walking pace for hunters, meters per second.
pub const WALK_SPEED: f64 = 1.4;
/// Distance a hunter covers in one tick, micrometers (1.4 m/s * 50 ms).
pub const STEP_UM: u64 = 70_000;
/// Consecutive qualifying ticks that validate an objective (2 s).
pub const VALIDATION_TICKS: u32 = 40;
/// Maximum reach of a pointing ray, meters.
pub const POINTING_RANGE_M: f64 = 15.0;

/// Hunt-relative seconds for a tick count.
pub fn ticks_to_seconds(ticks: u64) -> f64 {
    ticks as f64 * TICK_SECONDS
}
