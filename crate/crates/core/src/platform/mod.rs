//! The edge middleware: sessions, context-driven service dispatch and
//! data-plane routing to the active service.

mod actuator;
mod context;
mod rules;
mod services;

pub use actuator::{lighting_demo, ActuatorAction, ActuatorCommand, LIGHT_OFF_AT_LUX, LIGHT_ON_BELOW_LUX};
pub use context::{ContextRecord, MotionState};
pub use rules::{evaluate_rules, parse_rules, Atom, RuleSet, ServiceRule, DEFAULT_DWELL_MS};
pub use services::{
    FaceRecService, LightingService, NavigationService, Reply, Service, ServiceError, ServiceSession,
};

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::facerec::FaceModel;
use crate::navigation::NavGraph;
use crate::wire::payload::{ByteCount, ErrorReport, Hello, ServiceNotice};
use crate::wire::{Channel, Envelope, MsgType, PayloadError, Plane, WirePayload};

#[derive(Debug, Error)]
pub enum PlatformError {
    #[error("rules line {line}: {reason}")]
    RuleParse { line: usize, reason: String },
    #[error("rules: {0}")]
    Rules(String),
    #[error("rule names unregistered service '{0}'")]
    UnknownService(String),
    #[error("unknown session {0}")]
    UnknownSession(u32),
    #[error("context for user '{got}' on a session of user '{expected}'")]
    UnknownUser { expected: String, got: String },
    #[error("context timestamp {got} precedes {last}")]
    StaleContext { last: u64, got: u64 },
    #[error("{msg_type} is not allowed on the {channel} channel")]
    WrongChannel { msg_type: &'static str, channel: &'static str },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Whether services report the real pipeline time or zero. Zero keeps
/// virtual-clock transcripts byte-identical across runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComputeTiming {
    Measured,
    Instant,
}

/// A service switch. An empty directive list means nothing changes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Directive {
    Activate(String),
    Deactivate(String),
}

/// An envelope to send on one of the session's channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Outbound {
    pub channel: Channel,
    pub envelope: Envelope,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Pending {
    target: Option<String>,
    since_ms: u64,
}

/// Hysteresis between the top-ranked service and the active one: a switch
/// happens only after the same candidate has led for its rule's dwell time.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dispatcher {
    active: Option<String>,
    pending: Option<Pending>,
}

impl Dispatcher {
    pub fn active(&self) -> Option<&str> {
        self.active.as_deref()
    }

    /// Feeds one ranking (best first) observed at `now_ms`.
    pub fn update(&mut self, ranked: &[String], rules: &RuleSet, now_ms: u64) -> Vec<Directive> {
        let top = ranked.first().cloned();
        if top == self.active {
            self.pending = None;
            return Vec::new();
        }
        let since_ms = match &self.pending {
            Some(p) if p.target == top => p.since_ms,
            _ => now_ms,
        };
        self.pending = Some(Pending {
            target: top.clone(),
            since_ms,
        });
        // leaving for nothing waits out the active rule's dwell
        let dwell = top
            .as_deref()
            .or(self.active.as_deref())
            .and_then(|id| rules.get(id))
            .map_or(0, |r| r.dwell_ms);
        if now_ms.saturating_sub(since_ms) < dwell {
            return Vec::new();
        }
        let mut out = Vec::new();
        if let Some(old) = self.active.take() {
            out.push(Directive::Deactivate(old));
        }
        if let Some(new) = top.clone() {
            out.push(Directive::Activate(new));
        }
        self.active = top;
        self.pending = None;
        out
    }
}

/// One glass's connection state.
pub struct Session {
    pub id: u32,
    pub user_id: String,
    /// Set by the first data-plane envelope carrying this session's id.
    pub data_bound: bool,
    pub last_context: Option<ContextRecord>,
    dispatcher: Dispatcher,
    service_state: Option<Box<dyn ServiceSession>>,
    /// Number of directives issued so far.
    pub switches: u64,
}

impl Session {
    pub fn active_service(&self) -> Option<&str> {
        self.dispatcher.active()
    }
}

pub struct PlatformConfig {
    pub rules: RuleSet,
    pub graph: Option<Arc<NavGraph>>,
    pub model: Option<Arc<FaceModel>>,
    pub timing: ComputeTiming,
}

pub struct Platform {
    rules: RuleSet,
    services: BTreeMap<String, Arc<dyn Service>>,
    sessions: Mutex<BTreeMap<u32, Arc<Mutex<Session>>>>,
    next_session: AtomicU32,
    // outgoing sequence numbers per (session, channel)
    seqs: Mutex<BTreeMap<(u32, Channel), u32>>,
    uploads: Mutex<BTreeMap<(u32, Channel), u64>>,
}

fn error_reply(code: u16, message: impl Into<String>) -> Reply {
    Reply::control(
        MsgType::Error,
        ErrorReport {
            code,
            message: message.into(),
        }
        .to_bytes(),
    )
}

fn payload_error(e: PayloadError) -> Reply {
    error_reply(ErrorReport::BAD_PAYLOAD, e.to_string())
}

impl Platform {
    /// Registers lighting always, navigation with a map and face recognition
    /// with a model. Every rule must name a registered service.
    pub fn new(config: PlatformConfig) -> Result<Self, PlatformError> {
        let mut services: BTreeMap<String, Arc<dyn Service>> = BTreeMap::new();
        services.insert(LightingService::ID.into(), Arc::new(LightingService));
        if let Some(graph) = config.graph {
            services.insert(NavigationService::ID.into(), Arc::new(NavigationService::new(graph)));
        }
        if let Some(model) = config.model {
            services.insert(FaceRecService::ID.into(), Arc::new(FaceRecService::new(model, config.timing)));
        }
        Self::with_services(config.rules, services.into_values().collect())
    }

    pub fn with_services(rules: RuleSet, services: Vec<Arc<dyn Service>>) -> Result<Self, PlatformError> {
        let services: BTreeMap<String, Arc<dyn Service>> =
            services.into_iter().map(|s| (s.id().to_string(), s)).collect();
        if let Some(r) = rules.iter().find(|r| !services.contains_key(&r.service_id)) {
            return Err(PlatformError::UnknownService(r.service_id.clone()));
        }
        Ok(Self {
            rules,
            services,
            sessions: Mutex::new(BTreeMap::new()),
            next_session: AtomicU32::new(1),
            seqs: Mutex::new(BTreeMap::new()),
            uploads: Mutex::new(BTreeMap::new()),
        })
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    pub fn service_ids(&self) -> Vec<&str> {
        self.services.keys().map(String::as_str).collect()
    }

    pub fn session(&self, id: u32) -> Option<Arc<Mutex<Session>>> {
        self.sessions.lock().expect("sessions lock").get(&id).cloned()
    }

    pub fn session_ids(&self) -> Vec<u32> {
        self.sessions.lock().expect("sessions lock").keys().copied().collect()
    }

    pub fn close_session(&self, id: u32) {
        self.sessions.lock().expect("sessions lock").remove(&id);
        self.seqs.lock().expect("seq lock").retain(|(s, _), _| *s != id);
        self.uploads.lock().expect("upload lock").retain(|(s, _), _| *s != id);
    }

    fn envelope(&self, session_id: u32, reply: Reply) -> Outbound {
        let mut seqs = self.seqs.lock().expect("seq lock");
        let seq = seqs.entry((session_id, reply.channel)).or_insert(0);
        *seq += 1;
        Outbound {
            channel: reply.channel,
            envelope: Envelope::new(reply.msg_type, session_id, *seq, reply.payload),
        }
    }

    /// Processes one inbound envelope and returns what to send back, in
    /// order. Errors are fatal for the connection; recoverable problems come
    /// back as ERROR messages on the control channel instead.
    pub fn handle(&self, channel: Channel, env: &Envelope, now_ms: u64) -> Result<Vec<Outbound>, PlatformError> {
        if !env.msg_type.allowed_on(channel) {
            return Err(PlatformError::WrongChannel {
                msg_type: env.msg_type.name(),
                channel: channel.name(),
            });
        }
        if env.msg_type.plane() == Plane::Bench {
            let replies = self.handle_bench(channel, env);
            return Ok(replies.into_iter().map(|r| self.envelope(env.session_id, r)).collect());
        }
        let (session_id, replies) = match env.msg_type {
            MsgType::Hello => self.handle_hello(channel, env)?,
            MsgType::Heartbeat => {
                self.require_session(env.session_id)?;
                (env.session_id, vec![Reply::control(MsgType::Heartbeat, Vec::new())])
            }
            MsgType::ContextUpdate => (env.session_id, self.handle_context(env, now_ms)?),
            MsgType::NavSelectDest | MsgType::Frame => (env.session_id, self.handle_data(env)?),
            other => (
                env.session_id,
                vec![error_reply(
                    ErrorReport::PROTOCOL,
                    format!("{} is not accepted from a client", other.name()),
                )],
            ),
        };
        Ok(replies.into_iter().map(|r| self.envelope(session_id, r)).collect())
    }

    fn require_session(&self, id: u32) -> Result<Arc<Mutex<Session>>, PlatformError> {
        self.session(id).ok_or(PlatformError::UnknownSession(id))
    }

    fn handle_hello(&self, channel: Channel, env: &Envelope) -> Result<(u32, Vec<Reply>), PlatformError> {
        let hello = Hello::from_bytes(&env.payload).map_err(|e| PlatformError::Protocol(format!("HELLO: {e}")))?;
        if hello.channel != channel {
            return Err(PlatformError::Protocol(format!(
                "HELLO for the {} channel arrived on {}",
                hello.channel.name(),
                channel.name()
            )));
        }
        let id = self.next_session.fetch_add(1, Ordering::Relaxed);
        let session = Session {
            id,
            user_id: hello.user_id,
            data_bound: false,
            last_context: None,
            dispatcher: Dispatcher::default(),
            service_state: None,
            switches: 0,
        };
        self.sessions
            .lock()
            .expect("sessions lock")
            .insert(id, Arc::new(Mutex::new(session)));
        Ok((id, vec![Reply::control(MsgType::HelloAck, Vec::new())]))
    }

    fn handle_context(&self, env: &Envelope, now_ms: u64) -> Result<Vec<Reply>, PlatformError> {
        let session = self.require_session(env.session_id)?;
        let ctx = match ContextRecord::from_bytes(&env.payload) {
            Ok(ctx) => ctx,
            Err(e) => return Ok(vec![payload_error(e)]),
        };
        let mut s = session.lock().expect("session lock");
        match self.ingest_context(&mut s, ctx, now_ms) {
            Ok(replies) => Ok(replies),
            Err(e @ PlatformError::StaleContext { .. }) => Ok(vec![error_reply(ErrorReport::STALE_CONTEXT, e.to_string())]),
            Err(e @ PlatformError::UnknownUser { .. }) => Ok(vec![error_reply(ErrorReport::PROTOCOL, e.to_string())]),
            Err(e) => Err(e),
        }
    }

    /// Stores the context, runs dispatch and lets the active service react.
    /// Activation notices precede any service output.
    pub fn ingest_context(&self, s: &mut Session, ctx: ContextRecord, now_ms: u64) -> Result<Vec<Reply>, PlatformError> {
        if ctx.user_id != s.user_id {
            return Err(PlatformError::UnknownUser {
                expected: s.user_id.clone(),
                got: ctx.user_id,
            });
        }
        if let Some(last) = &s.last_context {
            if ctx.timestamp_ms < last.timestamp_ms {
                return Err(PlatformError::StaleContext {
                    last: last.timestamp_ms,
                    got: ctx.timestamp_ms,
                });
            }
        }
        let ranked = evaluate_rules(&ctx, &self.rules);
        let directives = s.dispatcher.update(&ranked, &self.rules, now_ms);
        let mut replies = Vec::new();
        for d in directives {
            s.switches += 1;
            match d {
                Directive::Deactivate(id) => {
                    s.service_state = None;
                    replies.push(Reply::control(
                        MsgType::ServiceDeactivate,
                        ServiceNotice { service_id: id }.to_bytes(),
                    ));
                }
                Directive::Activate(id) => {
                    s.service_state = Some(self.services[&id].open_session());
                    replies.push(Reply::control(
                        MsgType::ServiceActivate,
                        ServiceNotice { service_id: id }.to_bytes(),
                    ));
                }
            }
        }
        if let Some(state) = s.service_state.as_mut() {
            replies.extend(state.on_context(&ctx));
        }
        s.last_context = Some(ctx);
        Ok(replies)
    }

    fn handle_data(&self, env: &Envelope) -> Result<Vec<Reply>, PlatformError> {
        let session = self.require_session(env.session_id)?;
        let mut s = session.lock().expect("session lock");
        s.data_bound = true;
        let Some(active) = s.active_service().map(str::to_string) else {
            return Ok(vec![error_reply(
                ErrorReport::NO_ACTIVE_SERVICE,
                format!("{} with no active service", env.msg_type.name()),
            )]);
        };
        if !self.services[&active].accepts(env.msg_type) {
            return Ok(vec![error_reply(
                ErrorReport::TYPE_NOT_ACCEPTED,
                format!("{active} does not accept {}", env.msg_type.name()),
            )]);
        }
        let Session {
            service_state,
            last_context,
            ..
        } = &mut *s;
        let state = service_state.as_mut().expect("active service has state");
        match state.on_data(env.msg_type, &env.payload, last_context.as_ref()) {
            Ok(replies) => Ok(replies),
            Err(ServiceError::BadPayload(e)) => Ok(vec![payload_error(e)]),
            Err(ServiceError::Failure(msg)) => Ok(vec![error_reply(ErrorReport::SERVICE_FAILURE, msg)]),
        }
    }

    /// Echo and upload probes, answered on the channel they came in on.
    fn handle_bench(&self, channel: Channel, env: &Envelope) -> Vec<Reply> {
        let reply = |msg_type, payload| Reply {
            channel,
            msg_type,
            payload,
        };
        let key = (env.session_id, channel);
        let mut uploads = self.uploads.lock().expect("upload lock");
        match env.msg_type {
            MsgType::EchoReq => vec![reply(MsgType::EchoResp, env.payload.clone())],
            MsgType::UploadBegin => {
                uploads.insert(key, 0);
                Vec::new()
            }
            MsgType::UploadChunk => {
                *uploads.entry(key).or_insert(0) += env.payload.len() as u64;
                Vec::new()
            }
            MsgType::UploadEnd => {
                let bytes = uploads.remove(&key).unwrap_or(0);
                vec![reply(MsgType::UploadAck, ByteCount { bytes }.to_bytes())]
            }
            _ => Vec::new(),
        }
    }
}
