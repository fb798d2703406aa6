//! The 2.5D building mockup: per-floor geometry plus a navigation graph whose
//! stairs edges join floors.
//!
//! A [`Building`] is immutable once loaded. Loading validates every
//! structural invariant (unique ids, resolved references, rooms containing
//! their nodes, a connected graph) and builds a dense index used by path
//! search and ray casting.
//!
//! Edge lengths are quantized to whole micrometers at load time so that path
//! lengths are exact integer sums, independent of summation order.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{self, Point, Segment2D};
use crate::ids::{EdgeId, EquipmentId, FloorId, NodeId, RoomId};

pub const SCHEMA_VERSION: u32 = 1;

pub const MICROS_PER_METER: f64 = 1_000_000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BuildingError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("{owner} references missing {kind} {missing:?}")]
    DanglingRef {
        owner: String,
        kind: &'static str,
        missing: String,
    },
    #[error("navigation graph is disconnected: {0} unreachable from the first node")]
    DisconnectedGraph(NodeId),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("unknown edge {0}")]
    UnknownEdge(EdgeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown floor {0}")]
    UnknownFloor(FloorId),
}

impl BuildingError {
    pub fn code(&self) -> &'static str {
        match self {
            BuildingError::Schema(_) => "SchemaError",
            BuildingError::DanglingRef { .. } => "DanglingRef",
            BuildingError::DisconnectedGraph(_) => "DisconnectedGraph",
            BuildingError::DuplicateId(_) => "DuplicateId",
            BuildingError::UnknownEdge(_) => "UnknownEdge",
            BuildingError::UnknownNode(_) => "UnknownNode",
            BuildingError::UnknownFloor(_) => "UnknownFloor",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Walk,
    Stairs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Room {
    pub id: RoomId,
    pub name: String,
    pub polygon: Vec<Point>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NavNode {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
    pub room: RoomId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub id: EdgeId,
    pub a: NodeId,
    pub b: NodeId,
    pub kind: EdgeKind,
    /// Declared length, stairs only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Equipment {
    pub id: EquipmentId,
    pub tag: String,
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

impl Equipment {
    pub fn center(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// Opaque reference to a 360° photograph taken at a node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhotoAnchor {
    pub id: String,
    pub node: NodeId,
    pub asset: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Floor {
    pub id: FloorId,
    pub elevation: f64,
    #[serde(default)]
    pub walls: Vec<Segment2D>,
    #[serde(default)]
    pub rooms: Vec<Room>,
    #[serde(default)]
    pub nodes: Vec<NavNode>,
    #[serde(default)]
    pub edges: Vec<Edge>,
    #[serde(default)]
    pub equipment: Vec<Equipment>,
    #[serde(default)]
    pub photo_anchors: Vec<PhotoAnchor>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BuildingDoc {
    version: u32,
    id: String,
    floors: Vec<Floor>,
}

/// Resolved edge in the dense graph index.
#[derive(Clone, Debug)]
pub struct GraphEdge {
    pub id: EdgeId,
    pub a: usize,
    pub b: usize,
    pub kind: EdgeKind,
    pub length_um: u64,
}

impl GraphEdge {
    pub fn other(&self, node: usize) -> usize {
        if node == self.a {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Clone, Debug)]
pub struct GraphNode {
    pub id: NodeId,
    pub floor: usize,
    pub pos: Point,
    pub room: RoomId,
}

#[derive(Clone, Debug, Default)]
struct Index {
    floors: BTreeMap<FloorId, usize>,
    rooms: BTreeMap<RoomId, usize>,
    nodes: Vec<GraphNode>,
    node_index: BTreeMap<NodeId, usize>,
    edges: Vec<GraphEdge>,
    edge_index: BTreeMap<EdgeId, usize>,
    /// Edge indices per node, ordered by (neighbor index, edge id).
    adjacency: Vec<Vec<usize>>,
    equipment: BTreeMap<EquipmentId, (usize, usize)>,
}

#[derive(Clone, Debug)]
pub struct Building {
    pub id: String,
    pub version: u32,
    pub floors: Vec<Floor>,
    index: Index,
    digest: String,
}

impl PartialEq for Building {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id && self.version == other.version && self.floors == other.floors
    }
}

impl Building {
    /// Parse and validate a building document.
    pub fn load(bytes: &[u8]) -> Result<Building, BuildingError> {
        let doc: BuildingDoc =
            serde_json::from_slice(bytes).map_err(|e| BuildingError::Schema(e.to_string()))?;
        Self::from_doc(doc)
    }

    pub fn load_str(text: &str) -> Result<Building, BuildingError> {
        Self::load(text.as_bytes())
    }

    fn from_doc(doc: BuildingDoc) -> Result<Building, BuildingError> {
        if doc.version != SCHEMA_VERSION {
            return Err(BuildingError::Schema(format!(
                "unsupported version {} (expected {SCHEMA_VERSION})",
                doc.version
            )));
        }
        let index = build_index(&doc)?;
        let canonical = serde_json::to_string(&doc).expect("building serializes");
        let digest = hex_digest(canonical.as_bytes());
        Ok(Building {
            id: doc.id,
            version: doc.version,
            floors: doc.floors,
            index,
            digest,
        })
    }

    /// Pretty JSON in the building file format.
    pub fn render(&self) -> String {
        let doc = BuildingDoc {
            version: self.version,
            id: self.id.clone(),
            floors: self.floors.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("building serializes")
    }

    /// SHA-256 over the canonical compact rendering, hex encoded.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn floor(&self, id: &FloorId) -> Result<&Floor, BuildingError> {
        self.floor_index(id).map(|i| &self.floors[i])
    }

    pub fn floor_index(&self, id: &FloorId) -> Result<usize, BuildingError> {
        self.index
            .floors
            .get(id)
            .copied()
            .ok_or_else(|| BuildingError::UnknownFloor(id.clone()))
    }

    pub fn has_room(&self, id: &RoomId) -> bool {
        self.index.rooms.contains_key(id)
    }

    pub fn room_floor(&self, id: &RoomId) -> Option<usize> {
        self.index.rooms.get(id).copied()
    }

    /// Nodes of a room, sorted by id.
    pub fn room_nodes(&self, id: &RoomId) -> Vec<usize> {
        // Node indices are assigned in sorted id order.
        (0..self.index.nodes.len())
            .filter(|&i| &self.index.nodes[i].room == id)
            .collect()
    }

    pub fn equipment(&self, id: &EquipmentId) -> Option<(usize, &Equipment)> {
        self.index
            .equipment
            .get(id)
            .map(|&(f, e)| (f, &self.floors[f].equipment[e]))
    }

    pub fn node_count(&self) -> usize {
        self.index.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.index.edges.len()
    }

    pub fn node_index(&self, id: &NodeId) -> Result<usize, BuildingError> {
        self.index
            .node_index
            .get(id)
            .copied()
            .ok_or_else(|| BuildingError::UnknownNode(id.clone()))
    }

    pub fn edge_index(&self, id: &EdgeId) -> Result<usize, BuildingError> {
        self.index
            .edge_index
            .get(id)
            .copied()
            .ok_or_else(|| BuildingError::UnknownEdge(id.clone()))
    }

    pub fn graph_node(&self, idx: usize) -> &GraphNode {
        &self.index.nodes[idx]
    }

    pub fn graph_edge(&self, idx: usize) -> &GraphEdge {
        &self.index.edges[idx]
    }

    pub fn graph_nodes(&self) -> &[GraphNode] {
        &self.index.nodes
    }

    pub fn graph_edges(&self) -> &[GraphEdge] {
        &self.index.edges
    }

    /// Incident edge indices of a node, ordered by neighbor then edge id.
    pub fn incident_edges(&self, node: usize) -> &[usize] {
        &self.index.adjacency[node]
    }

    /// Length in meters: declared for stairs, Euclidean for walk edges.
    pub fn edge_length(&self, id: &EdgeId) -> Result<f64, BuildingError> {
        self.edge_length_um(id).map(|um| um as f64 / MICROS_PER_METER)
    }

    pub fn edge_length_um(&self, id: &EdgeId) -> Result<u64, BuildingError> {
        self.edge_index(id).map(|i| self.index.edges[i].length_um)
    }

    pub fn floor_id(&self, floor_idx: usize) -> &FloorId {
        &self.floors[floor_idx].id
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn finite(v: f64, what: &str) -> Result<(), BuildingError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(BuildingError::Schema(format!("{what} is not finite")))
    }
}

fn build_index(doc: &BuildingDoc) -> Result<Index, BuildingError> {
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut claim = |id: &str| -> Result<(), BuildingError> {
        if id.is_empty() {
            return Err(BuildingError::Schema("empty id".into()));
        }
        if !seen.insert(id.to_owned()) {
            return Err(BuildingError::DuplicateId(id.to_owned()));
        }
        Ok(())
    };

    let mut index = Index::default();
    for (fi, floor) in doc.floors.iter().enumerate() {
        claim(floor.id.as_str())?;
        finite(floor.elevation, "elevation")?;
        index.floors.insert(floor.id.clone(), fi);
        for wall in &floor.walls {
            for v in [wall.x1, wall.y1, wall.x2, wall.y2] {
                finite(v, "wall coordinate")?;
            }
            if wall.is_degenerate() {
                return Err(BuildingError::Schema(format!(
                    "wall on floor {} has identical endpoints",
                    floor.id
                )));
            }
        }
        for room in &floor.rooms {
            claim(room.id.as_str())?;
            if room.polygon.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
                return Err(BuildingError::Schema(format!("room {} has non-finite vertices", room.id)));
            }
            if !geometry::polygon_is_simple(&room.polygon) {
                return Err(BuildingError::Schema(format!("room {} polygon is not simple", room.id)));
            }
            index.rooms.insert(room.id.clone(), fi);
        }
        for eq in &floor.equipment {
            claim(eq.id.as_str())?;
            finite(eq.x, "equipment x")?;
            finite(eq.y, "equipment y")?;
            if !(eq.radius > 0.0 && eq.radius.is_finite()) {
                return Err(BuildingError::Schema(format!(
                    "equipment {} radius must be positive",
                    eq.id
                )));
            }
        }
    }

    // Nodes are indexed in sorted id order so index order equals id order.
    let mut raw_nodes: Vec<(&NavNode, usize)> = Vec::new();
    for (fi, floor) in doc.floors.iter().enumerate() {
        for node in &floor.nodes {
            claim(node.id.as_str())?;
            finite(node.x, "node x")?;
            finite(node.y, "node y")?;
            raw_nodes.push((node, fi));
        }
    }
    raw_nodes.sort_by(|a, b| a.0.id.cmp(&b.0.id));
    for (node, fi) in &raw_nodes {
        let floor = &doc.floors[*fi];
        if !floor.rooms.iter().any(|r| r.id == node.room) {
            return Err(BuildingError::DanglingRef {
                owner: format!("node {}", node.id),
                kind: "room",
                missing: node.room.to_string(),
            });
        }
        let pos = Point::new(node.x, node.y);
        let containing: Vec<&Room> = floor
            .rooms
            .iter()
            .filter(|r| geometry::polygon_contains(&r.polygon, pos))
            .collect();
        if containing.len() != 1 || containing[0].id != node.room {
            return Err(BuildingError::Schema(format!(
                "node {} must lie inside exactly its room {} (inside {} rooms)",
                node.id,
                node.room,
                containing.len()
            )));
        }
        index.node_index.insert(node.id.clone(), index.nodes.len());
        index.nodes.push(GraphNode {
            id: node.id.clone(),
            floor: *fi,
            pos,
            room: node.room.clone(),
        });
    }

    let mut raw_edges: Vec<(&Edge, usize)> = Vec::new();
    for (fi, floor) in doc.floors.iter().enumerate() {
        for edge in &floor.edges {
            claim(edge.id.as_str())?;
            raw_edges.push((edge, fi));
        }
        for (ei, eq) in floor.equipment.iter().enumerate() {
            index.equipment.insert(eq.id.clone(), (fi, ei));
        }
        for anchor in &floor.photo_anchors {
            claim(&anchor.id)?;
            if !index.node_index.contains_key(&anchor.node) {
                return Err(BuildingError::DanglingRef {
                    owner: format!("photo anchor {}", anchor.id),
                    kind: "node",
                    missing: anchor.node.to_string(),
                });
            }
        }
    }
    raw_edges.sort_by(|a, b| a.0.id.cmp(&b.0.id));
    for (edge, fi) in raw_edges {
        let resolve = |id: &NodeId| {
            index
                .node_index
                .get(id)
                .copied()
                .ok_or_else(|| BuildingError::DanglingRef {
                    owner: format!("edge {}", edge.id),
                    kind: "node",
                    missing: id.to_string(),
                })
        };
        let a = resolve(&edge.a)?;
        let b = resolve(&edge.b)?;
        if a == b {
            return Err(BuildingError::Schema(format!("edge {} is a self-loop", edge.id)));
        }
        if index.nodes[a].floor != fi {
            return Err(BuildingError::Schema(format!(
                "edge {} must be listed on the floor of its first endpoint",
                edge.id
            )));
        }
        let meters = match edge.kind {
            EdgeKind::Walk => {
                if edge.length.is_some() {
                    return Err(BuildingError::Schema(format!(
                        "walk edge {} must not declare a length",
                        edge.id
                    )));
                }
                if index.nodes[b].floor != fi {
                    return Err(BuildingError::Schema(format!(
                        "walk edge {} crosses floors",
                        edge.id
                    )));
                }
                index.nodes[a].pos.distance(index.nodes[b].pos)
            }
            EdgeKind::Stairs => match edge.length {
                Some(l) if l > 0.0 && l.is_finite() => l,
                _ => {
                    return Err(BuildingError::Schema(format!(
                        "stairs edge {} needs a positive declared length",
                        edge.id
                    )))
                }
            },
        };
        let length_um = (meters * MICROS_PER_METER).round() as u64;
        if length_um == 0 {
            return Err(BuildingError::Schema(format!("edge {} has zero length", edge.id)));
        }
        index.edge_index.insert(edge.id.clone(), index.edges.len());
        index.edges.push(GraphEdge {
            id: edge.id.clone(),
            a,
            b,
            kind: edge.kind,
            length_um,
        });
    }

    index.adjacency = vec![Vec::new(); index.nodes.len()];
    for (ei, e) in index.edges.iter().enumerate() {
        index.adjacency[e.a].push(ei);
        index.adjacency[e.b].push(ei);
    }
    for (n, list) in index.adjacency.iter_mut().enumerate() {
        let edges = &index.edges;
        list.sort_by(|&x, &y| {
            (edges[x].other(n), &edges[x].id).cmp(&(edges[y].other(n), &edges[y].id))
        });
    }

    if let Some(missing) = first_unreachable(&index) {
        return Err(BuildingError::DisconnectedGraph(index.nodes[missing].id.clone()));
    }
    Ok(index)
}

fn first_unreachable(index: &Index) -> Option<usize> {
    if index.nodes.is_empty() {
        return None;
    }
    let mut seen = vec![false; index.nodes.len()];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(n) = queue.pop_front() {
        for &e in &index.adjacency[n] {
            let m = index.edges[e].other(n);
            if !seen[m] {
                seen[m] = true;
                queue.push_back(m);
            }
        }
    }
    seen.iter().position(|s| !s)
}
