use bytes::BufMut;

use super::{DestinationInfo, NavGraph, NodeId, Route};
use crate::geom::Point3;
use crate::image::GrayImage;
use crate::wire::payload::{get_bytes, get_f64, get_str, get_u16, get_u32, put_str, PayloadError, PayloadResult};
use crate::wire::WirePayload;

pub const DEFAULT_ARRIVAL_RADIUS_M: f64 = 0.5;

/// One step of guidance sent to the glass.
#[derive(Debug, Clone, PartialEq)]
pub struct MoveInstruction {
    pub target_node: NodeId,
    pub target_position: Point3,
    /// Compass bearing from the user to the target, [0, 360).
    pub bearing_deg: f64,
    /// Distance to the target plus the route cost beyond it.
    pub remaining_distance_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Guidance {
    Move(MoveInstruction),
    Arrived {
        destination: NodeId,
        info: Option<DestinationInfo>,
    },
}

/// Per-session progress along a computed route.
#[derive(Debug, Clone)]
pub struct NavSessionState {
    pub route: Route,
    pub next_index: usize,
    pub arrival_radius_m: f64,
}

impl NavSessionState {
    pub fn new(route: Route) -> Self {
        Self {
            route,
            next_index: 0,
            arrival_radius_m: DEFAULT_ARRIVAL_RADIUS_M,
        }
    }

    pub fn is_finished(&self) -> bool {
        self.next_index >= self.route.waypoints.len()
    }

    /// Advances past every waypoint within the arrival radius, then either
    /// reports arrival or points at the next waypoint.
    pub fn next_instruction(&mut self, graph: &NavGraph, position: &Point3) -> Guidance {
        let waypoints = &self.route.waypoints;
        while let Some(&node) = waypoints.get(self.next_index) {
            let p = graph.position(node).expect("route nodes belong to the graph");
            if p.distance(position) > self.arrival_radius_m {
                break;
            }
            self.next_index += 1;
        }
        if self.is_finished() {
            let destination = self.route.destination;
            return Guidance::Arrived {
                destination,
                info: graph.destination(destination).cloned(),
            };
        }
        let target_node = waypoints[self.next_index];
        let target_position = graph.position(target_node).expect("route nodes belong to the graph");
        Guidance::Move(MoveInstruction {
            target_node,
            target_position,
            bearing_deg: position.bearing_to(&target_position),
            remaining_distance_m: position.distance(&target_position) + self.route.cost_from(self.next_index),
        })
    }
}

impl WirePayload for MoveInstruction {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.put_u32(self.target_node);
        self.target_position.put(out);
        out.put_f64(self.bearing_deg);
        out.put_f64(self.remaining_distance_m);
    }

    fn decode_from(buf: &mut &[u8]) -> PayloadResult<Self> {
        Ok(Self {
            target_node: get_u32(buf, "target_node")?,
            target_position: Point3::get(buf, "target_position")?,
            bearing_deg: get_f64(buf, "bearing_deg")?,
            remaining_distance_m: get_f64(buf, "remaining_distance_m")?,
        })
    }
}

/// NAV_DEST_INFO body: node, name and the info image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DestInfoMessage {
    pub node: NodeId,
    pub info: DestinationInfo,
}

impl WirePayload for DestInfoMessage {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.put_u32(self.node);
        put_str(out, &self.info.name);
        out.put_u16(self.info.image.width as u16);
        out.put_u16(self.info.image.height as u16);
        out.put_slice(&self.info.image.pixels);
    }

    fn decode_from(buf: &mut &[u8]) -> PayloadResult<Self> {
        let node = get_u32(buf, "node")?;
        let name = get_str(buf, "destination name")?;
        let w = get_u16(buf, "image width")? as usize;
        let h = get_u16(buf, "image height")? as usize;
        let pixels = get_bytes(buf, w * h, "image pixels")?;
        let image = GrayImage::new(w, h, pixels).map_err(|e| PayloadError::Invalid {
            field: "destination image",
            reason: e.to_string(),
        })?;
        Ok(Self {
            node,
            info: DestinationInfo { name, image },
        })
    }
}
