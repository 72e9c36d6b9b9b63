use std::sync::Arc;
use std::time::Duration;

use super::BenchError;
use crate::client::{Delivered, TcpTransport};
use crate::facerec::RecognitionResult;
use crate::netem::{ClockMode, Direction, EmulatedLink, NetProfile, SimQueue};
use crate::platform::Platform;
use crate::wire::{Channel, Envelope, MsgType, WirePayload};

/// A request/response path from the glass to a platform, on some clock.
pub trait Exchange {
    fn now_ms(&self) -> f64;

    /// Puts an envelope on the wire now; returns the send time.
    fn send(&mut self, channel: Channel, env: Envelope) -> Result<f64, BenchError>;

    /// Next envelope to reach the glass.
    fn recv(&mut self) -> Result<Delivered, BenchError>;

    /// Idles until `t_ms`.
    fn wait_until(&mut self, t_ms: f64);
}

/// In-process platform behind emulated links on a virtual clock.
///
/// The platform handles each envelope at its arrival time. Replies leave
/// after the compute time the reply itself reports (the pipeline time of a
/// recognition result, zero otherwise), so measured server time shows up in
/// the client's round trip without making the links nondeterministic.
pub struct VirtualExchange {
    platform: Arc<Platform>,
    control: EmulatedLink,
    data: EmulatedLink,
    clock: f64,
    inbox: SimQueue<(Channel, Envelope)>,
}

impl VirtualExchange {
    pub fn new(platform: Arc<Platform>, control: NetProfile, data: NetProfile, seed: u64) -> Result<Self, BenchError> {
        Ok(Self {
            platform,
            control: EmulatedLink::open(control, seed, ClockMode::Virtual)?,
            data: EmulatedLink::open(data, seed.wrapping_add(1), ClockMode::Virtual)?,
            clock: 0.0,
            inbox: SimQueue::new(),
        })
    }

    fn link(&self, channel: Channel) -> &EmulatedLink {
        match channel {
            Channel::Control => &self.control,
            Channel::Data => &self.data,
        }
    }
}

fn reported_compute_ms(env: &Envelope) -> f64 {
    if env.msg_type == MsgType::RecogResult {
        if let Ok(r) = RecognitionResult::from_bytes(&env.payload) {
            return r.processing_time_ms.max(0.0);
        }
    }
    0.0
}

impl Exchange for VirtualExchange {
    fn now_ms(&self) -> f64 {
        self.clock
    }

    fn send(&mut self, channel: Channel, env: Envelope) -> Result<f64, BenchError> {
        let sent = self.clock;
        let arrival = self.link(channel).transmit(Direction::Up, env.wire_len(), sent)?;
        let replies = self
            .platform
            .handle(channel, &env, arrival.ceil() as u64)
            .map_err(|e| BenchError::Transport(format!("platform closed the link: {e}")))?;
        let mut depart = arrival;
        for r in replies {
            depart += reported_compute_ms(&r.envelope);
            let at = self.link(r.channel).transmit(Direction::Down, r.envelope.wire_len(), depart)?;
            self.inbox.schedule(at, (r.channel, r.envelope));
        }
        Ok(sent)
    }

    fn recv(&mut self) -> Result<Delivered, BenchError> {
        let (at, (channel, envelope)) = self
            .inbox
            .advance()
            .ok_or_else(|| BenchError::Transport("waiting for a reply with nothing in flight".into()))?;
        self.clock = self.clock.max(at);
        Ok(Delivered {
            at_ms: at,
            channel,
            envelope,
        })
    }

    fn wait_until(&mut self, t_ms: f64) {
        self.clock = self.clock.max(t_ms);
        self.inbox.advance_to(self.clock);
    }
}

/// A live server over TCP on the wall clock.
pub struct TcpExchange {
    transport: TcpTransport,
    timeout: Duration,
}

impl TcpExchange {
    pub fn new(transport: TcpTransport, timeout: Duration) -> Self {
        Self { transport, timeout }
    }
}

impl Exchange for TcpExchange {
    fn now_ms(&self) -> f64 {
        self.transport.now_ms()
    }

    fn send(&mut self, channel: Channel, env: Envelope) -> Result<f64, BenchError> {
        Ok(self.transport.send(channel, &env)?)
    }

    fn recv(&mut self) -> Result<Delivered, BenchError> {
        self.transport
            .recv_timeout(self.timeout)?
            .ok_or_else(|| BenchError::Transport(format!("no reply within {:?}", self.timeout)))
    }

    fn wait_until(&mut self, t_ms: f64) {
        let left = t_ms - self.now_ms();
        if left > 0.0 {
            std::thread::sleep(Duration::from_secs_f64(left / 1000.0));
        }
    }
}
