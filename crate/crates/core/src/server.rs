//! TCP front end for a [`Platform`].
//!
//! Every connection carries one channel. A connection whose first envelope
//! is control-plane (normally HELLO) is a control channel; anything else
//! makes it a data channel. Outgoing traffic is shaped on the server side by
//! a per-connection emulated link, so a client that shapes its own uplink
//! with the same profile sees the profile in both directions.

use std::collections::HashMap;
use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Instant;

use crate::netem::{ClockMode, DelayLine, Direction, EmulatedLink, NetProfile};
use crate::platform::Platform;
use crate::wire::{encode_frame, Channel, Envelope, FramedReader, MsgType, Plane};

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub control_profile: NetProfile,
    pub data_profile: NetProfile,
    pub seed: u64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            control_profile: NetProfile::control(),
            data_profile: NetProfile::edge(),
            seed: 0,
        }
    }
}

type Registry = Mutex<HashMap<(u32, Channel), Arc<DelayLine>>>;

struct Shared {
    platform: Arc<Platform>,
    config: ServerConfig,
    registry: Registry,
    epoch: Instant,
    connections: AtomicU64,
    stopping: AtomicBool,
}

/// A server accepting connections on a background thread. Dropping it stops
/// accepting; connections already open run until their peer hangs up.
pub struct ServerHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    acceptor: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shared.stopping.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.acceptor.take() {
            let _ = t.join();
        }
    }
}

/// Binds `addr` and serves on a background thread.
pub fn spawn_server(addr: &str, platform: Arc<Platform>, config: ServerConfig) -> io::Result<ServerHandle> {
    config.control_profile.validate().map_err(io::Error::other)?;
    config.data_profile.validate().map_err(io::Error::other)?;
    let listener = TcpListener::bind(addr)?;
    let addr = listener.local_addr()?;
    let shared = Arc::new(Shared {
        platform,
        config,
        registry: Mutex::new(HashMap::new()),
        epoch: Instant::now(),
        connections: AtomicU64::new(0),
        stopping: AtomicBool::new(false),
    });
    let acceptor_shared = shared.clone();
    let acceptor = thread::Builder::new()
        .name("edge-accept".into())
        .spawn(move || accept_loop(listener, acceptor_shared))?;
    Ok(ServerHandle {
        addr,
        shared,
        acceptor: Some(acceptor),
    })
}

/// Serves forever on the calling thread.
pub fn serve(addr: &str, platform: Arc<Platform>, config: ServerConfig) -> io::Result<()> {
    let handle = spawn_server(addr, platform, config)?;
    eprintln!("listening on {}", handle.local_addr());
    let mut handle = handle;
    if let Some(t) = handle.acceptor.take() {
        let _ = t.join();
    }
    Ok(())
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    for stream in listener.incoming() {
        if shared.stopping.load(Ordering::SeqCst) {
            break;
        }
        let Ok(stream) = stream else { continue };
        let shared = shared.clone();
        let spawned = thread::Builder::new().name("edge-conn".into()).spawn(move || {
            let peer = stream.peer_addr().ok();
            if let Err(e) = run_connection(stream, &shared) {
                eprintln!("connection {peer:?}: {e}");
            }
        });
        if let Err(e) = spawned {
            eprintln!("cannot spawn connection thread: {e}");
        }
    }
}

fn run_connection(stream: TcpStream, shared: &Shared) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let mut reader = FramedReader::new(stream.try_clone()?);
    let mut own: Option<(Channel, Arc<DelayLine>)> = None;
    let mut bound: Vec<(u32, Channel)> = Vec::new();
    let result = loop {
        let env = match reader.next_envelope() {
            Ok(Some(env)) => env,
            Ok(None) => break Ok(()),
            Err(e) => break Err(e),
        };
        let (channel, line) = match &own {
            Some((c, l)) => (*c, l.clone()),
            None => {
                let channel = match env.msg_type.plane() {
                    Plane::Control => Channel::Control,
                    _ => Channel::Data,
                };
                let line = Arc::new(open_line(shared, channel, stream.try_clone()?)?);
                own = Some((channel, line.clone()));
                (channel, line)
            }
        };
        let now = shared.epoch.elapsed().as_millis() as u64;
        let replies = match shared.platform.handle(channel, &env, now) {
            Ok(r) => r,
            Err(e) => break Err(io::Error::new(io::ErrorKind::InvalidData, e.to_string())),
        };
        if channel == Channel::Data && env.msg_type.plane() == Plane::Data {
            bind(shared, &mut bound, (env.session_id, Channel::Data), &line);
        }
        for r in replies {
            if r.envelope.msg_type == MsgType::HelloAck {
                bind(shared, &mut bound, (r.envelope.session_id, Channel::Control), &line);
            }
            let target = if r.channel == channel {
                Some(line.clone())
            } else {
                shared
                    .registry
                    .lock()
                    .expect("registry lock")
                    .get(&(r.envelope.session_id, r.channel))
                    .cloned()
            };
            match target {
                Some(t) => send(&t, &r.envelope)?,
                None => eprintln!(
                    "dropping {} for session {}: no {} connection",
                    r.envelope.msg_type,
                    r.envelope.session_id,
                    r.channel.name()
                ),
            }
        }
    };
    let mut registry = shared.registry.lock().expect("registry lock");
    for key in &bound {
        registry.remove(key);
        if key.1 == Channel::Control {
            shared.platform.close_session(key.0);
        }
    }
    result
}

fn bind(shared: &Shared, bound: &mut Vec<(u32, Channel)>, key: (u32, Channel), line: &Arc<DelayLine>) {
    if !bound.contains(&key) {
        shared.registry.lock().expect("registry lock").insert(key, line.clone());
        bound.push(key);
    }
}

fn open_line(shared: &Shared, channel: Channel, mut stream: TcpStream) -> io::Result<DelayLine> {
    let profile = match channel {
        Channel::Control => shared.config.control_profile.clone(),
        Channel::Data => shared.config.data_profile.clone(),
    };
    let n = shared.connections.fetch_add(1, Ordering::Relaxed);
    let link = EmulatedLink::open(profile, shared.config.seed.wrapping_add(n), ClockMode::Real).map_err(io::Error::other)?;
    DelayLine::spawn(Arc::new(link), Direction::Down, move |bytes| {
        use std::io::Write;
        stream.write_all(&bytes)
    })
    .map_err(io::Error::other)
}

fn send(line: &DelayLine, env: &Envelope) -> io::Result<()> {
    let bytes = encode_frame(env).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    line.send(bytes).map_err(io::Error::other)?;
    Ok(())
}
