//! Hunt configuration: objective, start room, learner-facing text, obstacles
//! and markings, validated against a bound building.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::building::Building;
use crate::geometry::{self, Point};
use crate::ids::{EdgeId, EquipmentId, FloorId, RoomId};
use crate::path;
use crate::raycast::{cast_on_floor, RayHit};
use crate::POINTING_RANGE_M;

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("malformed scenario: {0}")]
    Schema(String),
    #[error("scenario is bound to building {found:?}, not {expected:?}")]
    BuildingMismatch { expected: String, found: String },
    #[error("unknown equipment {0}")]
    UnknownEquipment(EquipmentId),
    #[error("unknown room {0}")]
    UnknownRoom(RoomId),
    #[error("unknown floor {0}")]
    UnknownFloor(FloorId),
    #[error("unknown edge {0}")]
    UnknownEdge(EdgeId),
    #[error("zone is empty: {0}")]
    EmptyZone(String),
    #[error("objective unreachable from start room {0}")]
    UnreachableObjective(RoomId),
}

impl ScenarioError {
    pub fn code(&self) -> &'static str {
        match self {
            ScenarioError::Schema(_) => "SchemaError",
            ScenarioError::BuildingMismatch { .. } => "ScenarioBuildingMismatch",
            ScenarioError::UnknownEquipment(_) => "UnknownEquipment",
            ScenarioError::UnknownRoom(_) => "UnknownRoom",
            ScenarioError::UnknownFloor(_) => "UnknownFloor",
            ScenarioError::UnknownEdge(_) => "UnknownEdge",
            ScenarioError::EmptyZone(_) => "EmptyZone",
            ScenarioError::UnreachableObjective(_) => "UnreachableObjective",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HuntType {
    PointAtEquipment {
        equipment: EquipmentId,
    },
    RegroupInZone {
        floor: FloorId,
        center: Point,
        radius: f64,
    },
}

/// Visual annotation. Never affects movement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Marking {
    pub floor: FloorId,
    pub point: Point,
    pub label: String,
}

/// Unvalidated hunt configuration, as authored or read from a file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HuntConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    pub id: String,
    pub building_id: String,
    pub hunt_type: HuntType,
    pub start_room: RoomId,
    #[serde(default)]
    pub objective_text: String,
    #[serde(default)]
    pub obstacles: BTreeSet<EdgeId>,
    #[serde(default)]
    pub markings: Vec<Marking>,
}

fn default_version() -> u32 {
    SCENARIO_VERSION
}

/// A validated scenario. Only obtainable through [`create_hunt`] and
/// [`place_obstacle`], so every instance satisfies the reachability invariant
/// for the building it was validated against.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Scenario(HuntConfig);

impl<'de> Deserialize<'de> for Scenario {
    /// Deserializes without a building. Callers revalidate with
    /// [`Scenario::rebind`] before use.
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        HuntConfig::deserialize(d).map(Scenario)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveRegion {
    pub floor: FloorId,
    pub center: Point,
    pub radius: f64,
}

impl Scenario {
    pub fn config(&self) -> &HuntConfig {
        &self.0
    }

    pub fn id(&self) -> &str {
        &self.0.id
    }

    pub fn building_id(&self) -> &str {
        &self.0.building_id
    }

    pub fn hunt_type(&self) -> &HuntType {
        &self.0.hunt_type
    }

    pub fn start_room(&self) -> &RoomId {
        &self.0.start_room
    }

    pub fn objective_text(&self) -> &str {
        &self.0.objective_text
    }

    pub fn obstacles(&self) -> &BTreeSet<EdgeId> {
        &self.0.obstacles
    }

    pub fn markings(&self) -> &[Marking] {
        &self.0.markings
    }

    /// Parse a scenario file and validate it against `building`.
    pub fn load(building: &Building, bytes: &[u8]) -> Result<Scenario, ScenarioError> {
        let config: HuntConfig =
            serde_json::from_slice(bytes).map_err(|e| ScenarioError::Schema(e.to_string()))?;
        create_hunt(building, config)
    }

    /// Revalidate against a building (e.g. after deserializing from a log).
    pub fn rebind(self, building: &Building) -> Result<Scenario, ScenarioError> {
        create_hunt(building, self.0)
    }

    pub fn render(&self) -> String {
        serde_json::to_string_pretty(&self.0).expect("scenario serializes")
    }
}

/// Validate a configuration into a [`Scenario`].
pub fn create_hunt(building: &Building, config: HuntConfig) -> Result<Scenario, ScenarioError> {
    if config.version != SCENARIO_VERSION {
        return Err(ScenarioError::Schema(format!(
            "unsupported version {}",
            config.version
        )));
    }
    if config.building_id != building.id {
        return Err(ScenarioError::BuildingMismatch {
            expected: building.id.clone(),
            found: config.building_id.clone(),
        });
    }
    match &config.hunt_type {
        HuntType::PointAtEquipment { equipment } => {
            if building.equipment(equipment).is_none() {
                return Err(ScenarioError::UnknownEquipment(equipment.clone()));
            }
        }
        HuntType::RegroupInZone {
            floor,
            center,
            radius,
        } => {
            let floor_def = building
                .floor(floor)
                .map_err(|_| ScenarioError::UnknownFloor(floor.clone()))?;
            if !(radius.is_finite() && *radius > 0.0) {
                return Err(ScenarioError::EmptyZone(format!("radius {radius} is not positive")));
            }
            if !(center.x.is_finite() && center.y.is_finite()) {
                return Err(ScenarioError::Schema("zone center is not finite".into()));
            }
            if !floor_def
                .rooms
                .iter()
                .any(|r| geometry::circle_intersects_polygon(&r.polygon, *center, *radius))
            {
                return Err(ScenarioError::EmptyZone("zone lies outside every room".into()));
            }
        }
    }
    if !building.has_room(&config.start_room) {
        return Err(ScenarioError::UnknownRoom(config.start_room.clone()));
    }
    for marking in &config.markings {
        if building.floor(&marking.floor).is_err() {
            return Err(ScenarioError::UnknownFloor(marking.floor.clone()));
        }
    }
    for edge in &config.obstacles {
        building
            .edge_index(edge)
            .map_err(|_| ScenarioError::UnknownEdge(edge.clone()))?;
    }
    let scenario = Scenario(config);
    let targets = objective_nodes(building, &scenario);
    if targets.is_empty() {
        return Err(match scenario.hunt_type() {
            HuntType::RegroupInZone { .. } => {
                ScenarioError::EmptyZone("no navigation node inside the zone".into())
            }
            HuntType::PointAtEquipment { .. } => {
                ScenarioError::UnreachableObjective(scenario.start_room().clone())
            }
        });
    }
    check_reachable(building, &scenario, scenario.obstacles(), &targets)?;
    Ok(scenario)
}

fn check_reachable(
    building: &Building,
    scenario: &Scenario,
    obstacles: &BTreeSet<EdgeId>,
    targets: &BTreeSet<usize>,
) -> Result<(), ScenarioError> {
    let start = building.room_nodes(scenario.start_room());
    if start.is_empty()
        || !start
            .iter()
            .all(|&n| path::reachable_idx(building, n, targets, obstacles))
    {
        return Err(ScenarioError::UnreachableObjective(scenario.start_room().clone()));
    }
    Ok(())
}

/// Add an obstacle iff the objective stays reachable from every start node.
/// On rejection the input scenario is untouched.
pub fn place_obstacle(
    building: &Building,
    scenario: &Scenario,
    edge: &EdgeId,
) -> Result<Scenario, ScenarioError> {
    building
        .edge_index(edge)
        .map_err(|_| ScenarioError::UnknownEdge(edge.clone()))?;
    if scenario.obstacles().contains(edge) {
        return Ok(scenario.clone());
    }
    let mut obstacles = scenario.obstacles().clone();
    obstacles.insert(edge.clone());
    let targets = objective_nodes(building, scenario);
    check_reachable(building, scenario, &obstacles, &targets)?;
    let mut config = scenario.0.clone();
    config.obstacles = obstacles;
    Ok(Scenario(config))
}

/// Target circle: the zone itself, or the equipment disc.
pub fn objective_region(building: &Building, scenario: &Scenario) -> ObjectiveRegion {
    hunt_region(building, scenario.hunt_type())
}

pub fn hunt_region(building: &Building, hunt: &HuntType) -> ObjectiveRegion {
    match hunt {
        HuntType::PointAtEquipment { equipment } => {
            let (floor, eq) = building
                .equipment(equipment)
                .expect("validated scenario references existing equipment");
            ObjectiveRegion {
                floor: building.floor_id(floor).clone(),
                center: eq.center(),
                radius: eq.radius,
            }
        }
        HuntType::RegroupInZone {
            floor,
            center,
            radius,
        } => ObjectiveRegion {
            floor: floor.clone(),
            center: *center,
            radius: *radius,
        },
    }
}

/// Nodes from which the objective can be completed: inside the zone, or with
/// an unobstructed pointing line to the equipment within pointing range.
pub fn objective_nodes(building: &Building, scenario: &Scenario) -> BTreeSet<usize> {
    hunt_nodes(building, scenario.hunt_type())
}

pub fn hunt_nodes(building: &Building, hunt: &HuntType) -> BTreeSet<usize> {
    let region = hunt_region(building, hunt);
    let Ok(floor_idx) = building.floor_index(&region.floor) else {
        return BTreeSet::new();
    };
    let floor = &building.floors[floor_idx];
    building
        .graph_nodes()
        .iter()
        .enumerate()
        .filter(|(_, n)| n.floor == floor_idx)
        .filter(|(_, n)| match hunt {
            HuntType::RegroupInZone { .. } => n.pos.distance(region.center) <= region.radius,
            HuntType::PointAtEquipment { equipment } => {
                let angle = n.pos.angle_to(region.center);
                matches!(
                    cast_on_floor(floor, n.pos, angle, POINTING_RANGE_M),
                    RayHit::Hit { equipment: ref hit, .. } if hit == equipment
                )
            }
        })
        .map(|(i, _)| i)
        .collect()
}
