//! Longest leaf-to-leaf shortest path through a skeleton graph.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::geometry::{Polyline, SkeletonGraph};

#[derive(PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Euclidean-weighted Dijkstra from `src`. Returns distances and parents.
pub fn dijkstra(graph: &SkeletonGraph, adj: &[Vec<usize>], src: usize) -> (Vec<f64>, Vec<usize>) {
    let n = graph.nodes.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(Item(0.0, src));
    while let Some(Item(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &v in &adj[u] {
            let nd = d + (graph.nodes[u] - graph.nodes[v]).norm();
            // Equal-length alternatives keep the smaller parent index.
            if nd < dist[v] || (nd == dist[v] && u < parent[v]) {
                let improved = nd < dist[v];
                dist[v] = nd;
                parent[v] = u;
                if improved {
                    heap.push(Item(nd, v));
                }
            }
        }
    }
    (dist, parent)
}

/// Leaf indices, ordered by the leaf pair chosen, plus the path length.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafPath {
    pub nodes: Vec<usize>,
    pub length: f64,
}

/// Shortest paths between every pair of degree-1 nodes; returns the longest
/// one. Equal lengths resolve to the lexicographically smallest leaf pair.
/// Leaves in different components are never paired.
pub fn longest_leaf_path(graph: &SkeletonGraph) -> Result<LeafPath> {
    if graph.nodes.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "skeleton graph needs at least 2 nodes, got {}",
            graph.nodes.len()
        )));
    }
    let adj = graph.adjacency();
    let leaves: Vec<usize> = (0..graph.nodes.len()).filter(|&i| adj[i].len() == 1).collect();
    if leaves.is_empty() {
        return Err(Error::ClosedLoop);
    }
    let mut best: Option<(f64, usize, usize, Vec<usize>)> = None;
    for (a_pos, &a) in leaves.iter().enumerate() {
        let (dist, parent) = dijkstra(graph, &adj, a);
        for &b in &leaves[a_pos + 1..] {
            let d = dist[b];
            if !d.is_finite() {
                continue;
            }
            let better = match &best {
                None => true,
                Some((bd, ba, bb, _)) => d > *bd || (d == *bd && (a, b) < (*ba, *bb)),
            };
            if better {
                let mut path = vec![b];
                let mut cur = b;
                while cur != a {
                    cur = parent[cur];
                    path.push(cur);
                }
                path.reverse();
                best = Some((d, a, b, path));
            }
        }
    }
    match best {
        Some((length, _, _, nodes)) => Ok(LeafPath { nodes, length }),
        None => Err(Error::InvalidInput(
            "no two leaves of the skeleton graph are connected".into(),
        )),
    }
}

/// The longest leaf-to-leaf shortest path as an ordered polyline.
pub fn longest_path(graph: &SkeletonGraph) -> Result<Polyline> {
    let path = longest_leaf_path(graph)?;
    Polyline::from_points_dedup(path.nodes.iter().map(|&i| graph.nodes[i]).collect(), 0.0)
}
