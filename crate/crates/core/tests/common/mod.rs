#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use hunt_core::Building;
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Value};

/// A generated building together with the generator's own view of its graph.
pub struct RandomGraph {
    pub building: Building,
    pub node_ids: Vec<String>,
    /// (id, a, b, length in µm), lengths computed here from coordinates.
    pub edges: Vec<(String, usize, usize, u64)>,
    /// Room of each node.
    pub rooms: Vec<String>,
    pub floors: Vec<usize>,
    pub positions: Vec<(f64, f64)>,
}

fn room_polygon(x0: f64, x1: f64) -> Value {
    json!([
        {"x": x0, "y": 0.0}, {"x": x1, "y": 0.0},
        {"x": x1, "y": 100.0}, {"x": x0, "y": 100.0}
    ])
}

/// Connected random building with `n` nodes on one or two floors. Each floor
/// has a west and an east room; parallel edges and stairs are included.
pub fn random_graph(rng: &mut impl Rng, n: usize) -> RandomGraph {
    assert!(n >= 1);
    let floor_count = if n >= 6 && rng.gen_bool(0.5) { 2 } else { 1 };
    let mut floors: Vec<usize> = (0..n).map(|i| if i < floor_count { i } else { rng.gen_range(0..floor_count) }).collect();
    floors.shuffle(rng);

    let mut used = BTreeSet::new();
    let mut positions = Vec::with_capacity(n);
    let mut rooms = Vec::with_capacity(n);
    for &f in &floors {
        let (x, y) = loop {
            let x = rng.gen_range(1..100);
            let y = rng.gen_range(1..100);
            if x != 50 && used.insert((f, x, y)) {
                break (x, y);
            }
        };
        let side = if x < 50 { "W" } else { "E" };
        rooms.push(format!("{side}{f}"));
        positions.push((x as f64, y as f64));
    }
    let node_ids: Vec<String> = (0..n).map(|i| format!("n{i:03}")).collect();

    let mut edges: Vec<(String, usize, usize, u64)> = Vec::new();
    let mut kinds = Vec::new();
    let mut push = |edges: &mut Vec<_>, a: usize, b: usize, len: u64, stairs: Option<f64>| {
        edges.push((format!("e{:04}", edges.len()), a, b, len));
        kinds.push(stairs);
    };
    let walk_len = |a: usize, b: usize| {
        let (xa, ya) = positions[a];
        let (xb, yb) = positions[b];
        (((xa - xb).powi(2) + (ya - yb).powi(2)).sqrt() * 1e6).round() as u64
    };
    for f in 0..floor_count {
        let mut members: Vec<usize> = (0..n).filter(|&i| floors[i] == f).collect();
        members.shuffle(rng);
        for k in 1..members.len() {
            let parent = members[rng.gen_range(0..k)];
            push(&mut edges, members[k], parent, walk_len(members[k], parent), None);
        }
        if members.len() >= 2 {
            for _ in 0..rng.gen_range(0..=members.len()) {
                let a = *members.choose(rng).unwrap();
                let b = *members.choose(rng).unwrap();
                if a != b {
                    push(&mut edges, a, b, walk_len(a, b), None);
                }
            }
        }
    }
    if floor_count == 2 {
        let f0: Vec<usize> = (0..n).filter(|&i| floors[i] == 0).collect();
        let f1: Vec<usize> = (0..n).filter(|&i| floors[i] == 1).collect();
        for _ in 0..rng.gen_range(1..=3) {
            let (a, b) = (*f0.choose(rng).unwrap(), *f1.choose(rng).unwrap());
            let (a, b) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
            let cm = rng.gen_range(50..2000);
            push(&mut edges, a, b, cm * 10_000, Some(cm as f64 / 100.0));
        }
    }

    let floor_docs: Vec<Value> = (0..floor_count)
        .map(|f| {
            let nodes: Vec<Value> = (0..n)
                .filter(|&i| floors[i] == f)
                .map(|i| {
                    json!({"id": node_ids[i], "x": positions[i].0, "y": positions[i].1, "room": rooms[i]})
                })
                .collect();
            let edge_docs: Vec<Value> = edges
                .iter()
                .zip(&kinds)
                .filter(|((_, a, _, _), _)| floors[*a] == f)
                .map(|((id, a, b, _), stairs)| match stairs {
                    None => json!({"id": id, "a": node_ids[*a], "b": node_ids[*b], "kind": "walk"}),
                    Some(len) => json!({"id": id, "a": node_ids[*a], "b": node_ids[*b], "kind": "stairs", "length": len}),
                })
                .collect();
            json!({
                "id": format!("F{f}"),
                "elevation": f as f64 * 4.0,
                "walls": [],
                "rooms": [
                    {"id": format!("W{f}"), "name": "west", "polygon": room_polygon(0.0, 50.0)},
                    {"id": format!("E{f}"), "name": "east", "polygon": room_polygon(50.0, 100.0)}
                ],
                "nodes": nodes,
                "edges": edge_docs
            })
        })
        .collect();
    let doc = json!({"version": 1, "id": "generated", "floors": floor_docs});
    let building = Building::load_str(&doc.to_string()).expect("generated building is valid");
    RandomGraph {
        building,
        node_ids,
        edges,
        rooms,
        floors,
        positions,
    }
}

/// Plain O(V²) Dijkstra over an edge list; `None` marks unreachable nodes.
pub fn dijkstra_oracle(
    n: usize,
    edges: &[(String, usize, usize, u64)],
    blocked: &BTreeSet<String>,
    src: usize,
) -> Vec<Option<u64>> {
    let mut adj: Vec<Vec<(usize, u64)>> = vec![Vec::new(); n];
    for (id, a, b, len) in edges {
        if !blocked.contains(id) {
            adj[*a].push((*b, *len));
            adj[*b].push((*a, *len));
        }
    }
    let mut dist: Vec<Option<u64>> = vec![None; n];
    let mut done = vec![false; n];
    dist[src] = Some(0);
    loop {
        let mut best: Option<(u64, usize)> = None;
        for v in 0..n {
            if let (false, Some(d)) = (done[v], dist[v]) {
                if best.map_or(true, |(bd, _)| d < bd) {
                    best = Some((d, v));
                }
            }
        }
        let Some((d, u)) = best else { break };
        done[u] = true;
        for &(v, len) in &adj[u] {
            let cand = d + len;
            if dist[v].map_or(true, |dv| cand < dv) {
                dist[v] = Some(cand);
            }
        }
    }
    dist
}

/// Breadth-first reachability from every node of `starts` to any of `goals`.
pub fn all_reach(
    n: usize,
    edges: &[(usize, usize, String)],
    blocked: &BTreeSet<String>,
    starts: &[usize],
    goals: &BTreeSet<usize>,
) -> bool {
    let mut adj = vec![Vec::new(); n];
    for (a, b, id) in edges {
        if !blocked.contains(id) {
            adj[*a].push(*b);
            adj[*b].push(*a);
        }
    }
    !starts.is_empty()
        && starts.iter().all(|&s| {
            let mut seen = vec![false; n];
            seen[s] = true;
            let mut q = VecDeque::from([s]);
            while let Some(u) = q.pop_front() {
                if goals.contains(&u) {
                    return true;
                }
                for &v in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        q.push_back(v);
                    }
                }
            }
            false
        })
}
