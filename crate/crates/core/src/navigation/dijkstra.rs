use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use super::{NavError, NavGraph, NodeId};

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    /// Snapped start first, destination last.
    pub waypoints: Vec<NodeId>,
    /// Sum of the traversed edge weights.
    pub total_cost: f64,
    pub destination: NodeId,
    legs: Vec<f64>,
}

impl Route {
    /// Weight of the edge from `waypoints[i]` to `waypoints[i + 1]`.
    pub fn leg_costs(&self) -> &[f64] {
        &self.legs
    }

    /// Route cost from `waypoints[index]` to the destination.
    pub fn cost_from(&self, index: usize) -> f64 {
        self.legs.iter().skip(index).sum()
    }
}

#[derive(PartialEq)]
struct Entry {
    dist: f64,
    node: NodeId,
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // min-heap on (dist, node)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Single-source Dijkstra; pops the smaller `(dist, node_id)` first.
fn distances_from(graph: &NavGraph, source: NodeId) -> BTreeMap<NodeId, f64> {
    let mut dist: BTreeMap<NodeId, f64> = BTreeMap::from([(source, 0.0)]);
    let mut heap = BinaryHeap::from([Entry {
        dist: 0.0,
        node: source,
    }]);
    while let Some(Entry { dist: d, node }) = heap.pop() {
        if d > dist[&node] {
            continue;
        }
        for &(next, w) in graph.neighbors(node) {
            let candidate = d + w;
            if dist.get(&next).is_none_or(|&cur| candidate < cur) {
                dist.insert(next, candidate);
                heap.push(Entry {
                    dist: candidate,
                    node: next,
                });
            }
        }
    }
    dist
}

impl NavGraph {
    /// Minimum-cost route from `src` to `dst`.
    ///
    /// Among equal-cost routes the lexicographically smallest waypoint
    /// sequence is returned: distances to `dst` are settled first, then the
    /// route is walked forward taking the smallest-id neighbor that stays on
    /// a shortest path.
    pub fn shortest_path(&self, src: NodeId, dst: NodeId) -> Result<Route, NavError> {
        self.position(src)?;
        self.position(dst)?;
        let to_dst = distances_from(self, dst);
        let Some(&total) = to_dst.get(&src) else {
            return Err(NavError::NoPath { src, dst });
        };
        let mut waypoints = vec![src];
        let mut legs = Vec::new();
        let mut here = src;
        while here != dst {
            let remaining = to_dst[&here];
            let tolerance = 1e-9 * remaining.max(1.0);
            let (next, w) = self
                .neighbors(here)
                .iter()
                .copied()
                .find(|&(n, w)| {
                    to_dst
                        .get(&n)
                        .is_some_and(|&d| d < remaining && (w + d - remaining).abs() <= tolerance)
                })
                .expect("a settled node always has a shortest-path successor");
            waypoints.push(next);
            legs.push(w);
            here = next;
        }
        let total_cost = if legs.is_empty() { total } else { legs.iter().sum() };
        Ok(Route {
            waypoints,
            total_cost,
            destination: dst,
            legs,
        })
    }
}
