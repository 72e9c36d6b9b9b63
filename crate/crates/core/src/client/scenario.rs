use std::fmt;

use super::agent::{AgentConfig, ClientAgent, Outgoing};
use super::script::{Assertion, ScenarioScript};
use super::ClientError;
use crate::netem::{ClockMode, Direction, EmulatedLink, NetProfile, SimQueue};
use crate::platform::Platform;
use crate::wire::{encode_frame, Channel, Envelope, MsgType};

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub agent: AgentConfig,
    pub control_profile: NetProfile,
    pub data_profile: NetProfile,
    pub seed: u64,
    /// How long to keep ticking after the last scripted event so dwell-gated
    /// switches can still happen.
    pub settle_ms: u64,
    /// Hard stop on the virtual clock.
    pub max_duration_ms: u64,
}

impl ScenarioConfig {
    pub fn new(agent: AgentConfig) -> Self {
        Self {
            agent,
            control_profile: NetProfile::control(),
            data_profile: NetProfile::edge(),
            seed: 0,
            settle_ms: 1000,
            max_duration_ms: 600_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TranscriptDir {
    /// Left the glass.
    Sent,
    /// Reached the glass.
    Received,
}

impl fmt::Display for TranscriptDir {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TranscriptDir::Sent => "tx",
            TranscriptDir::Received => "rx",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptEntry {
    pub time_ms: f64,
    pub dir: TranscriptDir,
    pub channel: Channel,
    pub msg_type: MsgType,
    pub session_id: u32,
    pub seq: u32,
    pub wire_len: usize,
    pub crc: u32,
}

impl fmt::Display for TranscriptEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:>12.3} {} {:<7} {:<18} session={} seq={} len={} crc={:08x}",
            self.time_ms,
            self.dir,
            self.channel.name(),
            self.msg_type.name(),
            self.session_id,
            self.seq,
            self.wire_len,
            self.crc
        )
    }
}

/// Every envelope the glass sent or received, in event order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn received(&self, msg_type: MsgType) -> impl Iterator<Item = &TranscriptEntry> {
        self.entries
            .iter()
            .filter(move |e| e.dir == TranscriptDir::Received && e.msg_type == msg_type)
    }

    /// One line per entry.
    pub fn to_text(&self) -> String {
        self.entries.iter().map(|e| format!("{e}\n")).collect()
    }

    pub(crate) fn record(&mut self, time_ms: f64, dir: TranscriptDir, channel: Channel, env: &Envelope) -> Result<(), ClientError> {
        let bytes = encode_frame(env).map_err(|e| ClientError::Transport(e.to_string()))?;
        let crc = u32::from_be_bytes(bytes[bytes.len() - 4..].try_into().expect("4-byte trailer"));
        self.entries.push(TranscriptEntry {
            time_ms,
            dir,
            channel,
            msg_type: env.msg_type,
            session_id: env.session_id,
            seq: env.seq,
            wire_len: bytes.len(),
            crc,
        });
        Ok(())
    }
}

/// Outcome of a virtual-clock run, before assertions are checked.
pub struct ScenarioRun {
    pub transcript: Transcript,
    pub agent: ClientAgent,
    pub end_ms: f64,
    /// The run hit `max_duration_ms` before settling.
    pub timed_out: bool,
}

enum Flight {
    ToPlatform(Channel, Envelope),
    ToGlass(Channel, Envelope),
}

struct Links {
    control: EmulatedLink,
    data: EmulatedLink,
}

impl Links {
    fn transmit(&self, channel: Channel, dir: Direction, env: &Envelope, at: f64) -> Result<f64, ClientError> {
        let link = match channel {
            Channel::Control => &self.control,
            Channel::Data => &self.data,
        };
        Ok(link.transmit(dir, env.wire_len(), at)?)
    }
}

fn ceil_ms(t: f64) -> u64 {
    t.ceil().max(0.0) as u64
}

/// Plays the script against `platform` over emulated links on a virtual
/// clock. Deliveries due at or before the agent's next wake-up are handled
/// first. The platform should be fresh: session ids show up in the
/// transcript.
pub fn simulate(script: ScenarioScript, platform: &Platform, config: &ScenarioConfig) -> Result<ScenarioRun, ClientError> {
    // distinct seeds so the two channels jitter independently
    let links = Links {
        control: EmulatedLink::open(config.control_profile.clone(), config.seed, ClockMode::Virtual)?,
        data: EmulatedLink::open(config.data_profile.clone(), config.seed.wrapping_add(1), ClockMode::Virtual)?,
    };
    let mut agent = ClientAgent::new(config.agent.clone(), script)?;
    let mut transcript = Transcript::default();
    let mut queue: SimQueue<Flight> = SimQueue::new();
    let mut timed_out = false;

    let send = |out: Vec<Outgoing>, now: f64, q: &mut SimQueue<Flight>, tr: &mut Transcript| -> Result<(), ClientError> {
        for o in out {
            tr.record(now, TranscriptDir::Sent, o.channel, &o.envelope)?;
            let at = links.transmit(o.channel, Direction::Up, &o.envelope, now)?;
            q.schedule(at, Flight::ToPlatform(o.channel, o.envelope));
        }
        Ok(())
    };

    loop {
        let wake = agent.next_wakeup();
        let delivery = queue.peek_time();
        let now = match (delivery, wake) {
            (Some(t), w) if w.is_none_or(|w| t <= w as f64) => {
                let (now, flight) = queue.advance().expect("peeked");
                match flight {
                    Flight::ToPlatform(channel, env) => {
                        let replies = platform
                            .handle(channel, &env, ceil_ms(now))
                            .map_err(|e| ClientError::Transport(format!("platform closed the link: {e}")))?;
                        for r in replies {
                            let at = links.transmit(r.channel, Direction::Down, &r.envelope, now)?;
                            queue.schedule(at, Flight::ToGlass(r.channel, r.envelope));
                        }
                    }
                    Flight::ToGlass(channel, env) => {
                        transcript.record(now, TranscriptDir::Received, channel, &env)?;
                        let out = agent.on_receive(&env, ceil_ms(now))?;
                        send(out, now, &mut queue, &mut transcript)?;
                    }
                }
                now
            }
            (_, Some(w)) => {
                let now = w as f64;
                queue.advance_to(now);
                let out = agent.on_timer(w)?;
                send(out, now, &mut queue, &mut transcript)?;
                now
            }
            (_, None) => break,
        };
        if queue.is_empty() && agent.is_settled(ceil_ms(now), config.settle_ms) {
            break;
        }
        if now > config.max_duration_ms as f64 {
            timed_out = true;
            break;
        }
    }
    Ok(ScenarioRun {
        transcript,
        agent,
        end_ms: queue.now(),
        timed_out,
    })
}

/// Checks the script's assertions in order and reports the first failure.
pub fn check_assertions(run: &ScenarioRun) -> Result<(), ClientError> {
    for a in &run.agent.script().assertions {
        let ok = match a {
            Assertion::Received { msg_type, before_ms } => run
                .transcript
                .received(*msg_type)
                .any(|e| before_ms.is_none_or(|b| e.time_ms < b as f64)),
            Assertion::Count { msg_type, n } => run.transcript.received(*msg_type).count() == *n,
            Assertion::Labels(expected) => {
                !run.agent.results.is_empty()
                    && run.agent.results.iter().all(|r| {
                        let mut got: Vec<&str> = r.labels();
                        got.sort_unstable();
                        got == expected.iter().map(String::as_str).collect::<Vec<_>>()
                    })
            }
            Assertion::Activated(id) => run.agent.activated.iter().any(|s| s == id),
        };
        if !ok {
            let mut msg = a.to_string();
            if run.timed_out {
                msg.push_str(" (run hit the duration cap)");
            }
            return Err(ClientError::AssertionFailed(msg));
        }
    }
    Ok(())
}

/// [`simulate`] followed by [`check_assertions`].
pub fn run_scenario(script: ScenarioScript, platform: &Platform, config: &ScenarioConfig) -> Result<Transcript, ClientError> {
    let run = simulate(script, platform, config)?;
    check_assertions(&run)?;
    Ok(run.transcript)
}
