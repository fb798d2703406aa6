//! Pointing rays: walls occlude, equipment discs are the only targets.

use serde::{Deserialize, Serialize};

use crate::building::{Building, BuildingError, Floor};
use crate::geometry::{self, Point};
use crate::ids::{EquipmentId, FloorId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum RayHit {
    Hit { equipment: EquipmentId, distance: f64 },
    Miss,
}

impl RayHit {
    pub fn equipment(&self) -> Option<&EquipmentId> {
        match self {
            RayHit::Hit { equipment, .. } => Some(equipment),
            RayHit::Miss => None,
        }
    }
}

/// Nearest equipment along the ray, if strictly closer than every wall it
/// crosses and within `max_range`.
pub fn cast_on_floor(floor: &Floor, origin: Point, angle: f64, max_range: f64) -> RayHit {
    let dir = (angle.cos(), angle.sin());
    let wall = floor
        .walls
        .iter()
        .filter_map(|w| geometry::ray_segment_distance(origin, dir, w))
        .fold(f64::INFINITY, f64::min);
    let mut best: Option<(f64, &EquipmentId)> = None;
    for eq in &floor.equipment {
        if let Some(d) = geometry::ray_disc_distance(origin, dir, eq.center(), eq.radius) {
            let closer = match best {
                None => true,
                Some((bd, bid)) => d < bd || (d == bd && &eq.id < bid),
            };
            if closer {
                best = Some((d, &eq.id));
            }
        }
    }
    match best {
        Some((d, id)) if d < wall && d <= max_range => RayHit::Hit {
            equipment: id.clone(),
            distance: d,
        },
        _ => RayHit::Miss,
    }
}

pub fn ray_cast(
    building: &Building,
    floor: &FloorId,
    origin: Point,
    angle: f64,
    max_range: f64,
) -> Result<RayHit, BuildingError> {
    Ok(cast_on_floor(building.floor(floor)?, origin, angle, max_range))
}
