use std::io::Write;
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use super::agent::{AgentConfig, ClientAgent};
use super::scenario::{ScenarioRun, Transcript, TranscriptDir};
use super::script::ScenarioScript;
use super::ClientError;
use crate::netem::{ClockMode, DelayLine, Direction, EmulatedLink, NetProfile};
use crate::wire::{encode_frame, Channel, Envelope, FramedReader, MsgType};

/// An envelope that reached the glass, stamped on the transport clock.
#[derive(Debug, Clone, PartialEq)]
pub struct Delivered {
    pub at_ms: f64,
    pub channel: Channel,
    pub envelope: Envelope,
}

type Inbox = Receiver<Result<Delivered, String>>;

/// Control and data connections to a platform server, with the uplink of
/// each shaped by an emulated link.
pub struct TcpTransport {
    epoch: Instant,
    // dropped before the sockets are shut down so queued sends drain
    uplinks: Option<[DelayLine; 2]>,
    sockets: [TcpStream; 2],
    inbox: Inbox,
    readers: Vec<JoinHandle<()>>,
}

impl TcpTransport {
    pub fn connect(
        addr: impl ToSocketAddrs + Copy,
        control_profile: NetProfile,
        data_profile: NetProfile,
        seed: u64,
    ) -> Result<Self, ClientError> {
        let epoch = Instant::now();
        let (tx, inbox) = mpsc::channel();
        let mut uplinks = Vec::new();
        let mut sockets = Vec::new();
        let mut readers = Vec::new();
        for (i, (channel, profile)) in [(Channel::Control, control_profile), (Channel::Data, data_profile)]
            .into_iter()
            .enumerate()
        {
            let stream = TcpStream::connect(addr).map_err(|e| ClientError::Transport(format!("connect: {e}")))?;
            stream.set_nodelay(true)?;
            let link = Arc::new(EmulatedLink::open(profile, seed.wrapping_add(i as u64), ClockMode::Real)?);
            let mut writer = stream.try_clone()?;
            uplinks.push(DelayLine::spawn(link, Direction::Up, move |bytes| writer.write_all(&bytes))?);
            let reader = stream.try_clone()?;
            let tx = tx.clone();
            readers.push(
                thread::Builder::new()
                    .name(format!("glass-rx-{}", channel.name()))
                    .spawn(move || {
                        let mut r = FramedReader::new(reader);
                        loop {
                            let item = match r.next_envelope() {
                                Ok(Some(envelope)) => Ok(Delivered {
                                    at_ms: epoch.elapsed().as_secs_f64() * 1000.0,
                                    channel,
                                    envelope,
                                }),
                                Ok(None) => Err(format!("{} connection closed", channel.name())),
                                Err(e) => Err(format!("{} connection: {e}", channel.name())),
                            };
                            let stop = item.is_err();
                            if tx.send(item).is_err() || stop {
                                break;
                            }
                        }
                    })?,
            );
            sockets.push(stream);
        }
        Ok(Self {
            epoch,
            uplinks: Some(uplinks.try_into().ok().expect("two uplinks")),
            sockets: sockets.try_into().ok().expect("two sockets"),
            inbox,
            readers,
        })
    }

    pub fn now_ms(&self) -> f64 {
        self.epoch.elapsed().as_secs_f64() * 1000.0
    }

    /// Queues the envelope on the channel's uplink; returns the send time.
    pub fn send(&self, channel: Channel, env: &Envelope) -> Result<f64, ClientError> {
        let bytes = encode_frame(env).map_err(|e| ClientError::Transport(e.to_string()))?;
        let now = self.now_ms();
        let line = &self.uplinks.as_ref().expect("uplinks live until drop")[index(channel)];
        line.send(bytes)?;
        Ok(now)
    }

    /// Waits up to `timeout` for the next delivery. A closed connection is an
    /// error.
    pub fn recv_timeout(&self, timeout: Duration) -> Result<Option<Delivered>, ClientError> {
        match self.inbox.recv_timeout(timeout) {
            Ok(Ok(d)) => Ok(Some(d)),
            Ok(Err(reason)) => Err(ClientError::Transport(reason)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(ClientError::Transport("receivers gone".into())),
        }
    }
}

impl Drop for TcpTransport {
    fn drop(&mut self) {
        self.uplinks.take();
        for s in &self.sockets {
            let _ = s.shutdown(Shutdown::Both);
        }
        for r in self.readers.drain(..) {
            let _ = r.join();
        }
    }
}

fn index(channel: Channel) -> usize {
    match channel {
        Channel::Control => 0,
        Channel::Data => 1,
    }
}

/// Plays the script against a live server on the wall clock. The run ends
/// once the agent has settled and nothing but context ticks has moved for
/// `settle_ms`, or at `max_duration_ms`.
pub fn run_live(
    script: ScenarioScript,
    transport: &TcpTransport,
    agent: AgentConfig,
    settle_ms: u64,
    max_duration_ms: u64,
) -> Result<ScenarioRun, ClientError> {
    let mut agent = ClientAgent::new(agent, script)?;
    let mut transcript = Transcript::default();
    let mut timed_out = false;
    let is_empty = agent.script().events.is_empty();
    let start = transport.now_ms();
    let clock = |t: f64| (t - start).max(0.0);
    // replies may still be in flight when the agent settles, so the run also
    // waits for a quiet period with nothing but periodic context ticks
    let mut last_activity = 0.0_f64;
    while !is_empty {
        let now = clock(transport.now_ms());
        if agent.is_settled(now as u64, settle_ms) && now >= last_activity + settle_ms as f64 {
            break;
        }
        if now > max_duration_ms as f64 {
            timed_out = true;
            break;
        }
        let out = match agent.next_wakeup() {
            Some(w) if w as f64 <= now => agent.on_timer(now as u64)?,
            wake => {
                let wait = wake.map_or(50.0, |w| (w as f64 - now).min(50.0));
                match transport.recv_timeout(Duration::from_secs_f64(wait.max(0.0) / 1000.0))? {
                    Some(d) => {
                        let at = clock(d.at_ms);
                        last_activity = last_activity.max(at);
                        transcript.record(at, TranscriptDir::Received, d.channel, &d.envelope)?;
                        agent.on_receive(&d.envelope, at as u64)?
                    }
                    None => Vec::new(),
                }
            }
        };
        for o in out {
            let at = clock(transport.send(o.channel, &o.envelope)?);
            if o.envelope.msg_type != MsgType::ContextUpdate {
                last_activity = last_activity.max(at);
            }
            transcript.record(at, TranscriptDir::Sent, o.channel, &o.envelope)?;
        }
    }
    Ok(ScenarioRun {
        transcript,
        agent,
        end_ms: clock(transport.now_ms()),
        timed_out,
    })
}
