use std::sync::Arc;

use thiserror::Error;

use super::{lighting_demo, ActuatorCommand, ComputeTiming, ContextRecord};
use crate::facerec::{recognize_frame, FaceModel};
use crate::navigation::{DestInfoMessage, Guidance, NavGraph, NavSessionState};
use crate::wire::payload::NodeRef;
use crate::wire::{Channel, FramePayload, MsgType, PayloadError, WirePayload};

/// A message a service wants sent back to the glass.
#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub channel: Channel,
    pub msg_type: MsgType,
    pub payload: Vec<u8>,
}

impl Reply {
    pub fn data(msg_type: MsgType, payload: Vec<u8>) -> Self {
        Self {
            channel: Channel::Data,
            msg_type,
            payload,
        }
    }

    pub fn control(msg_type: MsgType, payload: Vec<u8>) -> Self {
        Self {
            channel: Channel::Control,
            msg_type,
            payload,
        }
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("bad payload: {0}")]
    BadPayload(#[from] PayloadError),
    #[error("{0}")]
    Failure(String),
}

/// A service registered with the platform. Shared by all sessions.
pub trait Service: Send + Sync {
    fn id(&self) -> &str;

    /// Data-plane message types this service handles.
    fn accepts(&self, msg_type: MsgType) -> bool;

    /// Fresh per-session state, created on activation.
    fn open_session(&self) -> Box<dyn ServiceSession>;
}

pub trait ServiceSession: Send {
    /// Called for every context update while the service is active.
    fn on_context(&mut self, _ctx: &ContextRecord) -> Vec<Reply> {
        Vec::new()
    }

    fn on_data(
        &mut self,
        msg_type: MsgType,
        payload: &[u8],
        ctx: Option<&ContextRecord>,
    ) -> Result<Vec<Reply>, ServiceError>;
}

pub struct NavigationService {
    graph: Arc<NavGraph>,
}

impl NavigationService {
    pub const ID: &'static str = "navigation";

    pub fn new(graph: Arc<NavGraph>) -> Self {
        Self { graph }
    }
}

impl Service for NavigationService {
    fn id(&self) -> &str {
        Self::ID
    }

    fn accepts(&self, msg_type: MsgType) -> bool {
        msg_type == MsgType::NavSelectDest
    }

    fn open_session(&self) -> Box<dyn ServiceSession> {
        Box::new(NavSession {
            graph: Arc::clone(&self.graph),
            state: None,
            arrived: false,
        })
    }
}

struct NavSession {
    graph: Arc<NavGraph>,
    state: Option<NavSessionState>,
    arrived: bool,
}

impl NavSession {
    fn guide(&mut self, ctx: &ContextRecord) -> Vec<Reply> {
        let Some(state) = self.state.as_mut() else {
            return Vec::new();
        };
        if self.arrived {
            return Vec::new();
        }
        match state.next_instruction(&self.graph, &ctx.position) {
            Guidance::Move(m) => vec![Reply::data(MsgType::NavInstruction, m.to_bytes())],
            Guidance::Arrived { destination, info } => {
                self.arrived = true;
                let mut out = vec![Reply::data(MsgType::NavArrived, NodeRef { node: destination }.to_bytes())];
                if let Some(info) = info {
                    let msg = DestInfoMessage {
                        node: destination,
                        info,
                    };
                    out.push(Reply::data(MsgType::NavDestInfo, msg.to_bytes()));
                }
                out
            }
        }
    }
}

impl ServiceSession for NavSession {
    fn on_context(&mut self, ctx: &ContextRecord) -> Vec<Reply> {
        self.guide(ctx)
    }

    fn on_data(
        &mut self,
        _msg_type: MsgType,
        payload: &[u8],
        ctx: Option<&ContextRecord>,
    ) -> Result<Vec<Reply>, ServiceError> {
        let dest = NodeRef::from_bytes(payload)?.node;
        let ctx = ctx.ok_or_else(|| ServiceError::Failure("no position reported yet".into()))?;
        let route = self
            .graph
            .snap_to_node(&ctx.position)
            .and_then(|start| self.graph.shortest_path(start, dest))
            .map_err(|e| ServiceError::Failure(e.to_string()))?;
        self.state = Some(NavSessionState::new(route));
        self.arrived = false;
        Ok(self.guide(ctx))
    }
}

pub struct FaceRecService {
    model: Arc<FaceModel>,
    timing: ComputeTiming,
}

impl FaceRecService {
    pub const ID: &'static str = "facerec";

    pub fn new(model: Arc<FaceModel>, timing: ComputeTiming) -> Self {
        Self { model, timing }
    }
}

impl Service for FaceRecService {
    fn id(&self) -> &str {
        Self::ID
    }

    fn accepts(&self, msg_type: MsgType) -> bool {
        msg_type == MsgType::Frame
    }

    fn open_session(&self) -> Box<dyn ServiceSession> {
        Box::new(FaceRecSession {
            model: Arc::clone(&self.model),
            timing: self.timing,
        })
    }
}

struct FaceRecSession {
    model: Arc<FaceModel>,
    timing: ComputeTiming,
}

impl ServiceSession for FaceRecSession {
    fn on_data(
        &mut self,
        _msg_type: MsgType,
        payload: &[u8],
        _ctx: Option<&ContextRecord>,
    ) -> Result<Vec<Reply>, ServiceError> {
        let frame = FramePayload::from_bytes(payload)?;
        let mut result = recognize_frame(&frame, &self.model).map_err(|e| ServiceError::Failure(e.to_string()))?;
        if self.timing == ComputeTiming::Instant {
            result.processing_time_ms = 0.0;
        }
        Ok(vec![Reply::data(MsgType::RecogResult, result.to_bytes())])
    }
}

/// Switches the zone's lights as illuminance crosses the thresholds.
pub struct LightingService;

impl LightingService {
    pub const ID: &'static str = "lighting";
}

impl Service for LightingService {
    fn id(&self) -> &str {
        Self::ID
    }

    fn accepts(&self, _msg_type: MsgType) -> bool {
        false
    }

    fn open_session(&self) -> Box<dyn ServiceSession> {
        Box::new(LightingSession { last: None })
    }
}

struct LightingSession {
    last: Option<ActuatorCommand>,
}

impl ServiceSession for LightingSession {
    fn on_context(&mut self, ctx: &ContextRecord) -> Vec<Reply> {
        match lighting_demo(ctx) {
            Some(cmd) if self.last.as_ref() != Some(&cmd) => {
                let reply = Reply::control(MsgType::ActuatorCmd, cmd.to_bytes());
                self.last = Some(cmd);
                vec![reply]
            }
            _ => Vec::new(),
        }
    }

    fn on_data(&mut self, msg_type: MsgType, _: &[u8], _: Option<&ContextRecord>) -> Result<Vec<Reply>, ServiceError> {
        Err(ServiceError::Failure(format!("lighting does not handle {}", msg_type.name())))
    }
}
