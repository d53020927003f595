//! Skeleton graph from a contracted cloud: farthest-point sampling, sphere
//! overlap connectivity and triangle removal by edge collapse.

use std::collections::BTreeSet;

use super::contract::ContractedCloud;
use crate::error::{Error, Result};
use crate::geometry::{Point3, SkeletonGraph};
use crate::spatial::PointIndex;

/// Farthest-point sampling from point 0 until every point lies within
/// `radius` of a sample. Returns sample indices in selection order.
pub fn farthest_point_sample(points: &[Point3], radius: f64) -> Vec<usize> {
    if points.is_empty() {
        return Vec::new();
    }
    let mut dist = vec![f64::INFINITY; points.len()];
    let mut picked = Vec::new();
    let mut next = 0;
    loop {
        picked.push(next);
        let c = points[next];
        let mut best = (0.0, usize::MAX);
        for (i, p) in points.iter().enumerate() {
            let d = (p - c).norm();
            if d < dist[i] {
                dist[i] = d;
            }
            if dist[i] > best.0 {
                best = (dist[i], i);
            }
        }
        if best.0 <= radius || best.1 == usize::MAX {
            return picked;
        }
        next = best.1;
    }
}

/// Samples nodes from the contracted points and joins two nodes whenever
/// some contracted point lies within `sample_radius` of both. When the
/// contracted cloud carries one-ring neighbourhoods, nodes are also joined
/// if two neighbouring input points are assigned to them (nearest node),
/// which keeps clumped contractions connected; such links are limited to
/// `LINK_REACH` sample radii.
pub fn build_skeleton_graph(contracted: &ContractedCloud, sample_radius: f64) -> Result<SkeletonGraph> {
    if !(sample_radius > 0.0 && sample_radius.is_finite()) {
        return Err(Error::InvalidInput(format!("sample_radius must be positive, got {sample_radius}")));
    }
    let pts = &contracted.points;
    if pts.is_empty() {
        return Err(Error::Empty("contracted cloud"));
    }
    let picked = farthest_point_sample(pts, sample_radius);
    if picked.len() < 2 {
        return Err(Error::DegenerateSamplingRadius(pts.len()));
    }
    let nodes: Vec<Point3> = picked.iter().map(|&i| pts[i]).collect();
    let index = PointIndex::new(&nodes);
    let mut edges = BTreeSet::new();
    for p in pts {
        let near = index.within(p, sample_radius);
        for (a, &i) in near.iter().enumerate() {
            for &j in &near[a + 1..] {
                edges.insert((i.min(j), i.max(j)));
            }
        }
    }
    if !contracted.neighbors.is_empty() {
        let owner: Vec<usize> = pts.iter().map(|p| index.nearest(p).expect("nodes").0).collect();
        let reach = LINK_REACH * sample_radius;
        for (i, ring) in contracted.neighbors.iter().enumerate() {
            for &j in ring {
                let (a, b) = (owner[i], owner[j]);
                if a != b && (nodes[a] - nodes[b]).norm() <= reach {
                    edges.insert((a.min(b), a.max(b)));
                }
            }
        }
    }
    SkeletonGraph::new(nodes, edges.into_iter().collect())
}

/// Upper bound, in sample radii, on the length of neighbourhood links.
pub const LINK_REACH: f64 = 5.0;

/// Contracts the globally shortest edge that lies on a triangle to its
/// midpoint, repeatedly, until the graph is triangle-free. Ties go to the
/// lexicographically smallest edge.
pub fn collapse_edges(graph: &SkeletonGraph) -> SkeletonGraph {
    let mut nodes = graph.nodes.clone();
    let mut alive = vec![true; nodes.len()];
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); nodes.len()];
    for &(a, b) in &graph.edges {
        adj[a].insert(b);
        adj[b].insert(a);
    }
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..nodes.len() {
            if !alive[a] {
                continue;
            }
            for &b in adj[a].range(a + 1..) {
                if adj[a].intersection(&adj[b]).next().is_none() {
                    continue;
                }
                let len = (nodes[a] - nodes[b]).norm();
                if best.is_none_or(|(l, _, _)| len < l) {
                    best = Some((len, a, b));
                }
            }
        }
        let Some((_, a, b)) = best else { break };
        nodes[a] = Point3::from((nodes[a].coords + nodes[b].coords) * 0.5);
        alive[b] = false;
        let moved: Vec<usize> = std::mem::take(&mut adj[b]).into_iter().collect();
        for c in moved {
            adj[c].remove(&b);
            if c != a {
                adj[c].insert(a);
                adj[a].insert(c);
            }
        }
        adj[a].remove(&a);
    }
    let mut remap = vec![usize::MAX; nodes.len()];
    let mut out_nodes = Vec::new();
    for (i, p) in nodes.iter().enumerate() {
        if alive[i] {
            remap[i] = out_nodes.len();
            out_nodes.push(*p);
        }
    }
    let mut edges = Vec::new();
    for a in 0..nodes.len() {
        if alive[a] {
            for &b in adj[a].range(a + 1..) {
                edges.push((remap[a], remap[b]));
            }
        }
    }
    SkeletonGraph::new(out_nodes, edges).expect("collapse keeps a simple graph")
}
