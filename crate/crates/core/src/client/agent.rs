use std::path::PathBuf;
use std::sync::Arc;

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rand_pcg::Pcg64;

use super::script::{load_stream_source, ScenarioScript, ScriptEvent};
use super::{run_local_recognition, step, ClientError, ClientState, ComputeMode, DEFAULT_SLOWDOWN, DEFAULT_SPEED_MPS, DEFAULT_TICK_MS};
use crate::facerec::{FaceModel, RecognitionResult};
use crate::geom::Point3;
use crate::image::GrayImage;
use crate::navigation::{DestInfoMessage, MoveInstruction, NodeId};
use crate::platform::ActuatorCommand;
use crate::wire::payload::{ErrorReport, Hello, NodeRef, ServiceNotice};
use crate::wire::{Channel, Envelope, FramePayload, MsgType, WirePayload};

#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub user_id: String,
    pub start: Point3,
    pub mode: ComputeMode,
    pub slowdown: f64,
    pub speed_mps: f64,
    pub tick_ms: u64,
    /// Standard deviation of the Gaussian noise added to reported x/y, in
    /// metres. Zero reports ground truth.
    pub position_noise_m: f64,
    pub seed: u64,
    /// Needed for local-mode recognition.
    pub model: Option<Arc<FaceModel>>,
    /// Directory that relative stream sources are resolved against.
    pub stream_base: PathBuf,
}

impl AgentConfig {
    pub fn new(user_id: impl Into<String>) -> Self {
        Self {
            user_id: user_id.into(),
            start: Point3::default(),
            mode: ComputeMode::Edge,
            slowdown: DEFAULT_SLOWDOWN,
            speed_mps: DEFAULT_SPEED_MPS,
            tick_ms: DEFAULT_TICK_MS,
            position_noise_m: 0.0,
            seed: 0,
            model: None,
            stream_base: PathBuf::from("."),
        }
    }

    fn validate(&self) -> Result<(), ClientError> {
        let bad = |m: String| Err(ClientError::InvalidArgument(m));
        if self.tick_ms == 0 {
            return bad("tick must be positive".into());
        }
        if !(self.speed_mps >= 0.0 && self.speed_mps.is_finite()) {
            return bad(format!("speed {} must be >= 0", self.speed_mps));
        }
        if !(self.slowdown >= 1.0) {
            return bad(format!("slowdown {} must be >= 1", self.slowdown));
        }
        if !(self.position_noise_m >= 0.0 && self.position_noise_m.is_finite()) {
            return bad(format!("position noise {} must be >= 0", self.position_noise_m));
        }
        if self.mode == ComputeMode::Local && self.model.is_none() {
            return bad("local mode needs a face model".into());
        }
        Ok(())
    }
}

/// An envelope the glass wants on the wire.
#[derive(Debug, Clone, PartialEq)]
pub struct Outgoing {
    pub channel: Channel,
    pub envelope: Envelope,
}

struct Stream {
    frames: Vec<GrayImage>,
    start_ms: u64,
    end_ms: u64,
    fps: f64,
    sent: u64,
}

impl Stream {
    fn due_at(&self) -> u64 {
        self.start_ms + (self.sent as f64 * 1000.0 / self.fps).round() as u64
    }
}

/// The glass as a transport-agnostic state machine. A driver calls
/// [`on_timer`](Self::on_timer) at [`next_wakeup`](Self::next_wakeup) and
/// [`on_receive`](Self::on_receive) for every delivered envelope, and puts
/// the returned envelopes on the wire.
pub struct ClientAgent {
    config: AgentConfig,
    state: ClientState,
    script: ScenarioScript,
    next_event: usize,
    hello_sent: bool,
    session: Option<u32>,
    seqs: [u32; 2],
    next_tick: Option<u64>,
    instruction: Option<MoveInstruction>,
    pending_dest: Option<NodeId>,
    nav_in_progress: bool,
    active: Option<String>,
    stream: Option<Stream>,
    frame_seq: u32,
    rng: Pcg64,

    pub results: Vec<RecognitionResult>,
    /// Simulated on-device time of each local-mode result.
    pub local_times_ms: Vec<f64>,
    pub activated: Vec<String>,
    pub arrived: Vec<NodeId>,
    pub dest_info: Vec<DestInfoMessage>,
    pub actuator_commands: Vec<ActuatorCommand>,
    pub errors: Vec<ErrorReport>,
    pub walked_m: f64,
}

impl ClientAgent {
    pub fn new(config: AgentConfig, script: ScenarioScript) -> Result<Self, ClientError> {
        config.validate()?;
        let mut state = ClientState::new(config.user_id.clone(), config.start);
        state.speed_mps = config.speed_mps;
        state.tick_ms = config.tick_ms;
        state.mode = config.mode;
        state.compute_slowdown = config.slowdown;
        Ok(Self {
            rng: Pcg64::seed_from_u64(config.seed),
            config,
            state,
            script,
            next_event: 0,
            hello_sent: false,
            session: None,
            seqs: [0; 2],
            next_tick: None,
            instruction: None,
            pending_dest: None,
            nav_in_progress: false,
            active: None,
            stream: None,
            frame_seq: 0,
            results: Vec::new(),
            local_times_ms: Vec::new(),
            activated: Vec::new(),
            arrived: Vec::new(),
            dest_info: Vec::new(),
            actuator_commands: Vec::new(),
            errors: Vec::new(),
            walked_m: 0.0,
        })
    }

    pub fn state(&self) -> &ClientState {
        &self.state
    }

    pub fn session_id(&self) -> Option<u32> {
        self.session
    }

    pub fn active_service(&self) -> Option<&str> {
        self.active.as_deref()
    }

    pub fn script(&self) -> &ScenarioScript {
        &self.script
    }

    /// Earliest time the agent has something to do, if any.
    pub fn next_wakeup(&self) -> Option<u64> {
        if self.script.events.is_empty() {
            return None;
        }
        if !self.hello_sent {
            return Some(0);
        }
        let event = self.script.events.get(self.next_event).map(|e| e.at_ms);
        let tick = self.next_tick;
        let frame = self.session.and(self.stream.as_ref().map(Stream::due_at));
        [event, tick, frame].into_iter().flatten().min()
    }

    /// True once the script is exhausted, nothing is streaming and no
    /// navigation is outstanding, and `settle_ms` have passed since the last
    /// scripted event.
    pub fn is_settled(&self, now_ms: u64, settle_ms: u64) -> bool {
        let last = self.script.events.last().map_or(0, |e| e.at_ms);
        self.next_event >= self.script.events.len()
            && self.stream.is_none()
            && self.pending_dest.is_none()
            && !self.nav_in_progress
            && now_ms >= last + settle_ms
    }

    fn envelope(&mut self, channel: Channel, msg_type: MsgType, payload: Vec<u8>) -> Outgoing {
        let slot = &mut self.seqs[channel_index(channel)];
        *slot += 1;
        Outgoing {
            channel,
            envelope: Envelope::new(msg_type, self.session.unwrap_or(0), *slot, payload),
        }
    }

    pub fn on_timer(&mut self, now_ms: u64) -> Result<Vec<Outgoing>, ClientError> {
        let mut out = Vec::new();
        if self.script.events.is_empty() {
            return Ok(out);
        }
        if !self.hello_sent {
            self.hello_sent = true;
            let hello = Hello {
                user_id: self.config.user_id.clone(),
                channel: Channel::Control,
            };
            out.push(self.envelope(Channel::Control, MsgType::Hello, hello.to_bytes()));
        }
        while let Some(ev) = self.script.events.get(self.next_event) {
            if ev.at_ms > now_ms {
                break;
            }
            let event = ev.event.clone();
            self.next_event += 1;
            self.apply(event, now_ms)?;
        }
        if let Some(tick) = self.next_tick {
            if tick <= now_ms {
                out.push(self.tick(now_ms));
                self.next_tick = Some(tick + self.config.tick_ms);
            }
        }
        if self.session.is_some() {
            out.extend(self.stream_frames(now_ms)?);
        }
        out.extend(self.send_pending_dest());
        Ok(out)
    }

    fn apply(&mut self, event: ScriptEvent, now_ms: u64) -> Result<(), ClientError> {
        match event {
            ScriptEvent::SetZone(z) => self.state.zone_id = z,
            ScriptEvent::SetIlluminance(l) => self.state.illuminance_lux = l,
            ScriptEvent::SetPosition(p) => self.state.position = p,
            ScriptEvent::SelectDestination(node) => self.pending_dest = Some(node),
            ScriptEvent::StartStreaming {
                source,
                fps,
                duration_ms,
            } => {
                let frames = load_stream_source(&source, &self.config.stream_base)?;
                self.stream = Some(Stream {
                    frames,
                    start_ms: now_ms,
                    end_ms: now_ms + duration_ms,
                    fps,
                    sent: 0,
                });
            }
            ScriptEvent::Stop => {
                self.stream = None;
                self.instruction = None;
                self.pending_dest = None;
                self.nav_in_progress = false;
            }
        }
        Ok(())
    }

    fn tick(&mut self, now_ms: u64) -> Outgoing {
        let dt = now_ms.saturating_sub(self.state.clock_ms);
        let before = self.state.position;
        let mut ctx = if dt > 0 {
            let (next, ctx) = step(&self.state, self.instruction.as_ref(), dt);
            self.state = next;
            ctx
        } else {
            self.state.context()
        };
        self.walked_m += before.distance(&self.state.position);
        if self.config.position_noise_m > 0.0 {
            let noise = Normal::new(0.0, self.config.position_noise_m).expect("validated sigma");
            ctx.position.x += noise.sample(&mut self.rng);
            ctx.position.y += noise.sample(&mut self.rng);
        }
        self.envelope(Channel::Control, MsgType::ContextUpdate, ctx.to_bytes())
    }

    fn stream_frames(&mut self, now_ms: u64) -> Result<Vec<Outgoing>, ClientError> {
        let mut out = Vec::new();
        loop {
            let Some(stream) = self.stream.as_mut() else { break };
            let due = stream.due_at();
            if due >= stream.end_ms {
                self.stream = None;
                break;
            }
            if due > now_ms {
                break;
            }
            let image = &stream.frames[stream.sent as usize % stream.frames.len()];
            stream.sent += 1;
            self.frame_seq += 1;
            let frame = FramePayload::new(
                self.frame_seq,
                now_ms,
                image.width as u16,
                image.height as u16,
                image.pixels.clone(),
            )?;
            match self.config.mode {
                ComputeMode::Edge => out.push(self.envelope(Channel::Data, MsgType::Frame, frame.to_bytes())),
                ComputeMode::Local => {
                    let model = self.config.model.as_ref().expect("validated: local mode has a model");
                    let (result, simulated) = run_local_recognition(&frame, model, self.config.slowdown)?;
                    self.results.push(result);
                    self.local_times_ms.push(simulated);
                }
            }
        }
        Ok(out)
    }

    fn send_pending_dest(&mut self) -> Option<Outgoing> {
        if self.session.is_none() || self.active.as_deref() != Some("navigation") {
            return None;
        }
        let node = self.pending_dest.take()?;
        self.nav_in_progress = true;
        Some(self.envelope(Channel::Data, MsgType::NavSelectDest, NodeRef { node }.to_bytes()))
    }

    pub fn on_receive(&mut self, env: &Envelope, now_ms: u64) -> Result<Vec<Outgoing>, ClientError> {
        let p = &env.payload[..];
        match env.msg_type {
            MsgType::HelloAck if self.session.is_none() => {
                self.session = Some(env.session_id);
                self.next_tick = Some(now_ms);
            }
            MsgType::ServiceActivate => {
                let id = ServiceNotice::from_bytes(p)?.service_id;
                self.activated.push(id.clone());
                self.active = Some(id);
            }
            MsgType::ServiceDeactivate => {
                self.active = None;
                self.instruction = None;
            }
            MsgType::NavInstruction => self.instruction = Some(MoveInstruction::from_bytes(p)?),
            MsgType::NavArrived => {
                self.instruction = None;
                self.nav_in_progress = false;
                self.arrived.push(NodeRef::from_bytes(p)?.node);
            }
            MsgType::NavDestInfo => self.dest_info.push(DestInfoMessage::from_bytes(p)?),
            MsgType::RecogResult => self.results.push(RecognitionResult::from_bytes(p)?),
            MsgType::ActuatorCmd => self.actuator_commands.push(ActuatorCommand::from_bytes(p)?),
            MsgType::Error => self.errors.push(ErrorReport::from_bytes(p)?),
            _ => {}
        }
        Ok(self.send_pending_dest().into_iter().collect())
    }
}

fn channel_index(channel: Channel) -> usize {
    match channel {
        Channel::Control => 0,
        Channel::Data => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::parse_script;

    fn agent(script: &str) -> ClientAgent {
        ClientAgent::new(AgentConfig::new("u"), parse_script(script).unwrap()).unwrap()
    }

    fn ack(a: &mut ClientAgent, sid: u32, now: u64) {
        a.on_receive(&Envelope::new(MsgType::HelloAck, sid, 1, Vec::new()), now).unwrap();
    }

    #[test]
    fn empty_script_never_wakes() {
        let mut a = agent("");
        assert_eq!(a.next_wakeup(), None);
        assert!(a.on_timer(0).unwrap().is_empty());
    }

    #[test]
    fn hello_then_ticks() {
        let mut a = agent("t=0 zone=gate");
        assert_eq!(a.next_wakeup(), Some(0));
        let out = a.on_timer(0).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].envelope.msg_type, MsgType::Hello);
        assert_eq!(out[0].envelope.seq, 1);
        assert_eq!(a.next_wakeup(), None);
        ack(&mut a, 7, 12);
        assert_eq!(a.next_wakeup(), Some(12));
        let out = a.on_timer(12).unwrap();
        assert_eq!(out[0].envelope.msg_type, MsgType::ContextUpdate);
        assert_eq!(out[0].envelope.session_id, 7);
        assert_eq!(out[0].envelope.seq, 2);
        assert_eq!(a.next_wakeup(), Some(112));
    }

    #[test]
    fn destination_waits_for_navigation() {
        let mut a = agent("t=0 zone=gate dest=23");
        a.on_timer(0).unwrap();
        ack(&mut a, 1, 10);
        let out = a.on_timer(10).unwrap();
        assert!(out.iter().all(|o| o.envelope.msg_type != MsgType::NavSelectDest));
        assert!(!a.is_settled(10_000, 0));
        let notice = ServiceNotice {
            service_id: "navigation".into(),
        };
        let out = a
            .on_receive(&Envelope::new(MsgType::ServiceActivate, 1, 2, notice.to_bytes()), 520)
            .unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].channel, Channel::Data);
        assert_eq!(out[0].envelope.seq, 1);
        assert_eq!(NodeRef::from_bytes(&out[0].envelope.payload).unwrap().node, 23);
        a.on_receive(&Envelope::new(MsgType::NavArrived, 1, 2, NodeRef { node: 23 }.to_bytes()), 900)
            .unwrap();
        assert!(a.is_settled(1000, 1000));
        assert!(!a.is_settled(999, 1000));
    }

    #[test]
    fn streams_at_fps_until_duration() {
        let mut a = agent("t=0 stream @two-face fps=10 for=1000");
        a.on_timer(0).unwrap();
        ack(&mut a, 1, 0);
        let mut frames = 0;
        while let Some(t) = a.next_wakeup() {
            if t > 3000 {
                break;
            }
            frames += a
                .on_timer(t)
                .unwrap()
                .iter()
                .filter(|o| o.envelope.msg_type == MsgType::Frame)
                .count();
        }
        assert_eq!(frames, 10);
        assert!(a.is_settled(3000, 0));
    }

    #[test]
    fn noise_perturbs_reports_not_truth() {
        let mut cfg = AgentConfig::new("u");
        cfg.position_noise_m = 0.5;
        cfg.seed = 3;
        let mut a = ClientAgent::new(cfg, parse_script("t=0 zone=x").unwrap()).unwrap();
        a.on_timer(0).unwrap();
        ack(&mut a, 1, 0);
        let out = a.on_timer(0).unwrap();
        let ctx = crate::platform::ContextRecord::from_bytes(&out[0].envelope.payload).unwrap();
        assert_ne!(ctx.position, Point3::default());
        assert_eq!(a.state().position, Point3::default());
    }

    #[test]
    fn local_mode_requires_model() {
        let mut cfg = AgentConfig::new("u");
        cfg.mode = ComputeMode::Local;
        assert!(ClientAgent::new(cfg, ScenarioScript::default()).is_err());
    }
}
