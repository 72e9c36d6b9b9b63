//! Navigation service: shortest paths over an indoor waypoint graph and
//! turn-by-turn guidance toward a destination.

mod dijkstra;
mod guide;
mod mapfile;
mod mapgen;

pub use dijkstra::Route;
pub use guide::{DestInfoMessage, Guidance, MoveInstruction, NavSessionState, DEFAULT_ARRIVAL_RADIUS_M};
pub use mapfile::{parse_map, read_map, write_map};
pub use mapgen::{demo_map, generate_grid_map, GridSpec};

use std::collections::BTreeMap;

use thiserror::Error;

use crate::geom::Point3;
use crate::image::{GrayImage, ImageError};

pub type NodeId = u32;

#[derive(Debug, Error)]
pub enum NavError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("duplicate node {0}")]
    DuplicateNode(NodeId),
    #[error("edge {a}-{b}: {reason}")]
    InvalidEdge { a: NodeId, b: NodeId, reason: String },
    #[error("no path from {src} to {dst}")]
    NoPath { src: NodeId, dst: NodeId },
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("map line {line}: {reason}")]
    MapParse { line: usize, reason: String },
    #[error("map image: {0}")]
    Image(#[from] ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What the glass shows on arrival.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DestinationInfo {
    pub name: String,
    pub image: GrayImage,
}

/// Undirected waypoint graph. Immutable once built; share it behind an `Arc`.
#[derive(Debug, Clone, Default)]
pub struct NavGraph {
    nodes: BTreeMap<NodeId, Point3>,
    // neighbor lists kept sorted by neighbor id
    adjacency: BTreeMap<NodeId, Vec<(NodeId, f64)>>,
    destinations: BTreeMap<NodeId, DestinationInfo>,
}

impl NavGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, id: NodeId, position: Point3) -> Result<(), NavError> {
        if self.nodes.contains_key(&id) {
            return Err(NavError::DuplicateNode(id));
        }
        self.nodes.insert(id, position);
        self.adjacency.insert(id, Vec::new());
        Ok(())
    }

    /// Adds an undirected edge. Without an explicit weight the Euclidean
    /// distance between the endpoints is used.
    pub fn add_edge(&mut self, a: NodeId, b: NodeId, weight: Option<f64>) -> Result<(), NavError> {
        let pa = self.position(a)?;
        let pb = self.position(b)?;
        let invalid = |reason: &str| NavError::InvalidEdge {
            a,
            b,
            reason: reason.to_string(),
        };
        if a == b {
            return Err(invalid("self loop"));
        }
        let w = weight.unwrap_or_else(|| pa.distance(&pb));
        if !(w.is_finite() && w > 0.0) {
            return Err(invalid(&format!("weight {w} must be positive")));
        }
        if self.adjacency[&a].iter().any(|&(n, _)| n == b) {
            return Err(invalid("duplicate edge"));
        }
        for (from, to) in [(a, b), (b, a)] {
            let list = self.adjacency.get_mut(&from).expect("node checked above");
            let at = list.partition_point(|&(n, _)| n < to);
            list.insert(at, (to, w));
        }
        Ok(())
    }

    pub fn remove_edge(&mut self, a: NodeId, b: NodeId) -> bool {
        let mut removed = false;
        for (from, to) in [(a, b), (b, a)] {
            if let Some(list) = self.adjacency.get_mut(&from) {
                let before = list.len();
                list.retain(|&(n, _)| n != to);
                removed |= list.len() != before;
            }
        }
        removed
    }

    pub fn set_destination(&mut self, id: NodeId, info: DestinationInfo) -> Result<(), NavError> {
        self.position(id)?;
        self.destinations.insert(id, info);
        Ok(())
    }

    pub fn position(&self, id: NodeId) -> Result<Point3, NavError> {
        self.nodes.get(&id).copied().ok_or(NavError::UnknownNode(id))
    }

    pub fn neighbors(&self, id: NodeId) -> &[(NodeId, f64)] {
        self.adjacency.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn edge_weight(&self, a: NodeId, b: NodeId) -> Option<f64> {
        self.neighbors(a).iter().find(|&&(n, _)| n == b).map(|&(_, w)| w)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, Point3)> + '_ {
        self.nodes.iter().map(|(&id, &p)| (id, p))
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Each undirected edge once, as `(a, b, weight)` with `a < b`.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        self.adjacency.iter().flat_map(|(&a, list)| {
            list.iter()
                .filter(move |&&(b, _)| a < b)
                .map(move |&(b, w)| (a, b, w))
        })
    }

    pub fn destination(&self, id: NodeId) -> Option<&DestinationInfo> {
        self.destinations.get(&id)
    }

    pub fn destinations(&self) -> impl Iterator<Item = (NodeId, &DestinationInfo)> {
        self.destinations.iter().map(|(&id, info)| (id, info))
    }

    /// Nearest node to `position`; ties go to the smaller id.
    pub fn snap_to_node(&self, position: &Point3) -> Result<NodeId, NavError> {
        let mut best: Option<(f64, NodeId)> = None;
        // BTreeMap iterates in ascending id, so strict `<` keeps the smaller id
        for (&id, p) in &self.nodes {
            let d = p.distance(position);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, id));
            }
        }
        best.map(|(_, id)| id).ok_or(NavError::EmptyGraph)
    }

    pub fn is_connected(&self) -> bool {
        let Some((&start, _)) = self.nodes.iter().next() else {
            return true;
        };
        let mut seen = std::collections::BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(n) = stack.pop() {
            for &(m, _) in self.neighbors(n) {
                if seen.insert(m) {
                    stack.push(m);
                }
            }
        }
        seen.len() == self.nodes.len()
    }
}
