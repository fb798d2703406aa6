//! The two-second objective timer.

use crate::geometry::Point;
use crate::ids::{EquipmentId, FloorId};
use crate::scenario::HuntType;
use crate::VALIDATION_TICKS;

/// What the validator needs to know about one hunter on one tick.
#[derive(Clone, Debug, PartialEq)]
pub struct HunterObservation<'a> {
    pub floor: &'a FloorId,
    pub position: Point,
    pub highlight: Option<&'a EquipmentId>,
}

/// Every hunter satisfies the objective on this tick. An empty team never does.
pub fn objective_met(hunt: &HuntType, hunters: &[HunterObservation<'_>]) -> bool {
    if hunters.is_empty() {
        return false;
    }
    match hunt {
        HuntType::PointAtEquipment { equipment } => {
            hunters.iter().all(|h| h.highlight == Some(equipment))
        }
        HuntType::RegroupInZone {
            floor,
            center,
            radius,
        } => hunters
            .iter()
            .all(|h| h.floor == floor && h.position.distance(*center) <= *radius),
    }
}

/// Consecutive-tick counter: any miss resets to zero, capped at the
/// validation threshold.
pub fn advance(progress: u32, met: bool) -> u32 {
    if met {
        (progress + 1).min(VALIDATION_TICKS)
    } else {
        0
    }
}
