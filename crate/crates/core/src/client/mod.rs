//! The simulated AR glass: kinematic walker, context sensor, frame streamer
//! and the local-compute variant of face recognition.

mod agent;
mod scenario;
mod script;
mod tcp;

pub use agent::{AgentConfig, ClientAgent, Outgoing};
pub use scenario::{check_assertions, run_scenario, simulate, ScenarioConfig, ScenarioRun, Transcript, TranscriptDir, TranscriptEntry};
pub use tcp::{run_live, Delivered, TcpTransport};
pub use script::{load_stream_source, parse_script, Assertion, ScenarioScript, ScriptEvent, TimedEvent};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::facerec::{recognize_frame, FaceError, FaceModel, RecognitionResult};
use crate::geom::Point3;
use crate::navigation::MoveInstruction;
use crate::netem::NetemError;
use crate::platform::{ContextRecord, MotionState};
use crate::wire::{FramePayload, PayloadError};

pub const DEFAULT_SPEED_MPS: f64 = 1.2;
pub const DEFAULT_TICK_MS: u64 = 100;
pub const DEFAULT_SLOWDOWN: f64 = 10.0;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("script line {line}: {reason}")]
    Script { line: usize, reason: String },
    #[error("assertion failed: {0}")]
    AssertionFailed(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("stream source: {0}")]
    Stream(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Face(#[from] FaceError),
    #[error(transparent)]
    Netem(#[from] NetemError),
    #[error(transparent)]
    Payload(#[from] PayloadError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where recognition runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComputeMode {
    /// Frames are offloaded to the edge server.
    Edge,
    /// Frames are processed on the glass itself.
    Local,
}

impl ComputeMode {
    pub fn name(self) -> &'static str {
        match self {
            ComputeMode::Edge => "edge",
            ComputeMode::Local => "local",
        }
    }
}

impl fmt::Display for ComputeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ComputeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "edge" => Ok(ComputeMode::Edge),
            "local" => Ok(ComputeMode::Local),
            other => Err(format!("unknown mode '{other}' (edge|local)")),
        }
    }
}

/// Physical and sensed state of the glass.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    pub user_id: String,
    pub clock_ms: u64,
    pub position: Point3,
    pub heading_deg: f64,
    pub speed_mps: f64,
    pub tick_ms: u64,
    pub mode: ComputeMode,
    /// How much slower the glass computes than the edge server; >= 1.
    pub compute_slowdown: f64,
    pub zone_id: Option<String>,
    pub illuminance_lux: Option<f64>,
    pub motion: MotionState,
}

impl ClientState {
    pub fn new(user_id: impl Into<String>, position: Point3) -> Self {
        Self {
            user_id: user_id.into(),
            clock_ms: 0,
            position,
            heading_deg: 0.0,
            speed_mps: DEFAULT_SPEED_MPS,
            tick_ms: DEFAULT_TICK_MS,
            mode: ComputeMode::Edge,
            compute_slowdown: DEFAULT_SLOWDOWN,
            zone_id: None,
            illuminance_lux: None,
            motion: MotionState::Still,
        }
    }

    pub fn context(&self) -> ContextRecord {
        ContextRecord {
            user_id: self.user_id.clone(),
            timestamp_ms: self.clock_ms,
            position: self.position,
            heading_deg: self.heading_deg,
            motion: self.motion,
            illuminance_lux: self.illuminance_lux,
            zone_id: self.zone_id.clone(),
        }
    }
}

/// Advances the glass by `dt_ms`: with an instruction it walks straight at
/// the target (never past it) and faces the instructed bearing; without one
/// it stands still. Returns the new state and its context record.
///
/// Panics if `dt_ms` is zero.
pub fn step(state: &ClientState, instruction: Option<&MoveInstruction>, dt_ms: u64) -> (ClientState, ContextRecord) {
    assert!(dt_ms > 0, "step needs a positive time delta");
    let mut next = state.clone();
    next.clock_ms += dt_ms;
    next.motion = MotionState::Still;
    if let Some(m) = instruction {
        let reach = state.speed_mps.max(0.0) * dt_ms as f64 / 1000.0;
        next.position = state.position.step_toward(&m.target_position, reach);
        next.heading_deg = m.bearing_deg;
        if next.position != state.position {
            next.motion = MotionState::Walking;
        }
    }
    let ctx = next.context();
    (next, ctx)
}

/// Runs the recognition pipeline on the glass. The simulated device time is
/// the measured pipeline time scaled by `slowdown`.
pub fn run_local_recognition(
    frame: &FramePayload,
    model: &FaceModel,
    slowdown: f64,
) -> Result<(RecognitionResult, f64), ClientError> {
    if !(slowdown >= 1.0) {
        return Err(ClientError::InvalidArgument(format!("slowdown {slowdown} must be >= 1")));
    }
    let result = recognize_frame(frame, model)?;
    let simulated = result.processing_time_ms * slowdown;
    Ok((result, simulated))
}
