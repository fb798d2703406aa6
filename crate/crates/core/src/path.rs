//! Shortest paths and reachability over the navigation graph.
//!
//! Dijkstra with labels `(length, node sequence)`: among paths of equal
//! length the lexicographically smallest node-id sequence wins. Node indices
//! follow sorted id order, so comparing index sequences compares id sequences.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::building::{Building, BuildingError, MICROS_PER_METER};
use crate::ids::{EdgeId, NodeId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub nodes: Vec<NodeId>,
    pub length_um: u64,
}

impl Route {
    pub fn meters(&self) -> f64 {
        self.length_um as f64 / MICROS_PER_METER
    }
}

/// Indices of edges that may be traversed given a blocked set.
fn open_edges(building: &Building, blocked: &BTreeSet<EdgeId>) -> Vec<bool> {
    building
        .graph_edges()
        .iter()
        .map(|e| !blocked.contains(&e.id))
        .collect()
}

/// Cheapest open edge between two adjacent nodes, ties broken by edge id.
pub fn connecting_edge(
    building: &Building,
    from: usize,
    to: usize,
    blocked: &BTreeSet<EdgeId>,
) -> Option<usize> {
    building
        .incident_edges(from)
        .iter()
        .copied()
        .filter(|&e| {
            let edge = building.graph_edge(e);
            edge.other(from) == to && !blocked.contains(&edge.id)
        })
        .min_by(|&x, &y| {
            let (ex, ey) = (building.graph_edge(x), building.graph_edge(y));
            (ex.length_um, &ex.id).cmp(&(ey.length_um, &ey.id))
        })
}

/// Index-level search, shared by the id-level API and internal callers.
///
/// Distances are settled backwards from `to`; the route is then walked
/// forwards taking the smallest-index neighbour that stays on a shortest
/// path. Edge lengths are positive, so every step strictly decreases the
/// remaining distance.
pub fn shortest_path_idx(
    building: &Building,
    from: usize,
    to: usize,
    blocked: &BTreeSet<EdgeId>,
) -> Option<(Vec<usize>, u64)> {
    let open = open_edges(building, blocked);
    let n = building.node_count();
    let mut dist = vec![u64::MAX; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[to] = 0;
    heap.push(Reverse((0u64, to)));
    while let Some(Reverse((d, node))) = heap.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        if node == from {
            break;
        }
        for &e in building.incident_edges(node) {
            if !open[e] {
                continue;
            }
            let edge = building.graph_edge(e);
            let next = edge.other(node);
            let cand = d + edge.length_um;
            if !done[next] && cand < dist[next] {
                dist[next] = cand;
                heap.push(Reverse((cand, next)));
            }
        }
    }
    if !done[from] {
        return None;
    }

    let mut path = vec![from];
    let mut at = from;
    while at != to {
        at = building
            .incident_edges(at)
            .iter()
            .filter(|&&e| open[e])
            .map(|&e| building.graph_edge(e))
            .filter(|edge| {
                let next = edge.other(at);
                done[next] && dist[next] + edge.length_um == dist[at]
            })
            .map(|edge| edge.other(at))
            .min()
            .expect("settled node has a successor on a shortest path");
        path.push(at);
    }
    Some((path, dist[from]))
}

/// Minimal-length route avoiding `blocked`, or `None` when unreachable.
pub fn shortest_path(
    building: &Building,
    from: &NodeId,
    to: &NodeId,
    blocked: &BTreeSet<EdgeId>,
) -> Result<Option<Route>, BuildingError> {
    let a = building.node_index(from)?;
    let b = building.node_index(to)?;
    Ok(shortest_path_idx(building, a, b, blocked).map(|(path, length_um)| Route {
        nodes: path
            .into_iter()
            .map(|i| building.graph_node(i).id.clone())
            .collect(),
        length_um,
    }))
}

/// True iff some target is reachable from `from` without blocked edges.
pub fn reachable(
    building: &Building,
    from: &NodeId,
    targets: &BTreeSet<NodeId>,
    blocked: &BTreeSet<EdgeId>,
) -> Result<bool, BuildingError> {
    let start = building.node_index(from)?;
    let goal = targets
        .iter()
        .map(|t| building.node_index(t))
        .collect::<Result<BTreeSet<_>, _>>()?;
    Ok(reachable_idx(building, start, &goal, blocked))
}

pub fn reachable_idx(
    building: &Building,
    start: usize,
    goal: &BTreeSet<usize>,
    blocked: &BTreeSet<EdgeId>,
) -> bool {
    let seen = component(building, start, blocked);
    goal.iter().any(|&g| seen[g])
}

/// Flags of every node reachable from `start` over open edges.
pub fn component(building: &Building, start: usize, blocked: &BTreeSet<EdgeId>) -> Vec<bool> {
    let open = open_edges(building, blocked);
    let mut seen = vec![false; building.node_count()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(n) = queue.pop_front() {
        for &e in building.incident_edges(n) {
            if !open[e] {
                continue;
            }
            let m = building.graph_edge(e).other(n);
            if !seen[m] {
                seen[m] = true;
                queue.push_back(m);
            }
        }
    }
    seen
}
