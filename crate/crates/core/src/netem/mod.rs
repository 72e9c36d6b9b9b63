//! Deterministic link emulation for the edge and cloud routes.
//!
//! A link is two independent directions, each with its own pacing state and
//! jitter generator. Timing is computed, never waited out: in virtual mode a
//! [`SimQueue`] carries deliveries, in real mode a [`DelayLine`] sleeps until
//! the computed delivery instant.

mod config;
mod queue;
mod real;

pub use config::{parse_profiles, ProfileSet};
pub use queue::SimQueue;
pub use real::{sleep_until, DelayLine};

use std::fmt;
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetemError {
    #[error("invalid profile '{name}': {reason}")]
    InvalidProfile { name: String, reason: String },
    #[error("clock regression on {direction}: send at {send_ms} ms precedes earlier send at {last_ms} ms")]
    ClockRegression {
        direction: Direction,
        send_ms: f64,
        last_ms: f64,
    },
    #[error("unknown net profile '{0}'")]
    UnknownProfile(String),
    #[error("profile config line {line}: {reason}")]
    Config { line: usize, reason: String },
    #[error("link operation needs {0} clock mode")]
    WrongClock(ClockMode),
    #[error("delivery sink closed: {0}")]
    SinkClosed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Unlimited,
    BytesPerSec(f64),
}

impl Bandwidth {
    /// Milliseconds needed to clock `bytes` onto the link.
    pub fn serialization_ms(self, bytes: usize) -> f64 {
        match self {
            Bandwidth::Unlimited => 0.0,
            Bandwidth::BytesPerSec(rate) => bytes as f64 / rate * 1000.0,
        }
    }
}

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bandwidth::Unlimited => f.write_str("inf"),
            Bandwidth::BytesPerSec(r) => write!(f, "{r}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetProfile {
    pub name: String,
    pub one_way_delay_ms: f64,
    /// Half-width of the uniform jitter window.
    pub jitter_ms: f64,
    pub bandwidth: Bandwidth,
}

impl NetProfile {
    pub fn new(name: &str, one_way_delay_ms: f64, jitter_ms: f64, bandwidth: Bandwidth) -> Self {
        Self {
            name: name.to_string(),
            one_way_delay_ms,
            jitter_ms,
            bandwidth,
        }
    }

    /// Local 5G/WiFi route to the edge server.
    pub fn edge() -> Self {
        Self::new("edge", 2.0, 0.0, Bandwidth::BytesPerSec(25e6))
    }

    /// Internet/WiMAX route to a remote cloud server.
    pub fn cloud() -> Self {
        Self::new("cloud", 40.0, 5.0, Bandwidth::BytesPerSec(1e6))
    }

    /// Control-plane link carrying context and service notices.
    pub fn control() -> Self {
        Self::new("control", 10.0, 1.0, Bandwidth::BytesPerSec(5e6))
    }

    /// Edge route including the glass's video capture/encode pipeline,
    /// calibrated so one 400x300 bench frame plus its result spends about
    /// 350 ms (300-400 ms) in transit.
    pub fn edge_stream() -> Self {
        Self::new("edge-stream", 75.0, 12.0, Bandwidth::BytesPerSec(6.0e5))
    }

    /// Zero delay, unlimited bandwidth.
    pub fn ideal() -> Self {
        Self::new("ideal", 0.0, 0.0, Bandwidth::Unlimited)
    }

    pub fn validate(&self) -> Result<(), NetemError> {
        let invalid = |reason: String| NetemError::InvalidProfile {
            name: self.name.clone(),
            reason,
        };
        if !(self.one_way_delay_ms.is_finite() && self.one_way_delay_ms >= 0.0) {
            return Err(invalid(format!("delay {} ms", self.one_way_delay_ms)));
        }
        if !(self.jitter_ms.is_finite() && self.jitter_ms >= 0.0) {
            return Err(invalid(format!("jitter {} ms", self.jitter_ms)));
        }
        if self.jitter_ms > self.one_way_delay_ms {
            return Err(invalid(format!(
                "jitter {} ms exceeds delay {} ms",
                self.jitter_ms, self.one_way_delay_ms
            )));
        }
        if let Bandwidth::BytesPerSec(rate) = self.bandwidth {
            if !(rate.is_finite() && rate > 0.0) {
                return Err(invalid(format!("bandwidth {rate} B/s")));
            }
        }
        Ok(())
    }

    /// Delivery time of a lone message on an idle link with zero jitter.
    pub fn one_way_ms(&self, bytes: usize) -> f64 {
        self.bandwidth.serialization_ms(bytes) + self.one_way_delay_ms
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockMode {
    Virtual,
    Real,
}

impl fmt::Display for ClockMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClockMode::Virtual => "virtual",
            ClockMode::Real => "real",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Glass to platform.
    Up,
    /// Platform to glass.
    Down,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Up => "uplink",
            Direction::Down => "downlink",
        })
    }
}

struct Pacer {
    free_at: f64,
    last_send: f64,
    last_delivery: f64,
    rng: Pcg64,
}

impl Pacer {
    fn new(seed: u64) -> Self {
        Self {
            free_at: f64::NEG_INFINITY,
            last_send: f64::NEG_INFINITY,
            last_delivery: f64::NEG_INFINITY,
            rng: Pcg64::seed_from_u64(seed),
        }
    }

    fn transmit(
        &mut self,
        profile: &NetProfile,
        direction: Direction,
        size: usize,
        send_ms: f64,
    ) -> Result<f64, NetemError> {
        if send_ms < self.last_send {
            return Err(NetemError::ClockRegression {
                direction,
                send_ms,
                last_ms: self.last_send,
            });
        }
        self.last_send = send_ms;
        let start = send_ms.max(self.free_at);
        self.free_at = start + profile.bandwidth.serialization_ms(size);
        let jitter = if profile.jitter_ms > 0.0 {
            self.rng.random_range(-profile.jitter_ms..=profile.jitter_ms)
        } else {
            0.0
        };
        // A reliable byte stream never lets a later message overtake an
        // earlier one.
        let delivery = (self.free_at + profile.one_way_delay_ms + jitter).max(self.last_delivery);
        self.last_delivery = delivery;
        Ok(delivery)
    }
}

/// One emulated link: an uplink and a downlink sharing a profile.
pub struct EmulatedLink {
    profile: NetProfile,
    seed: u64,
    clock: ClockMode,
    epoch: Instant,
    up: Mutex<Pacer>,
    down: Mutex<Pacer>,
}

impl EmulatedLink {
    pub fn open(profile: NetProfile, seed: u64, clock: ClockMode) -> Result<Self, NetemError> {
        profile.validate()?;
        Ok(Self {
            up: Mutex::new(Pacer::new(direction_seed(seed, Direction::Up))),
            down: Mutex::new(Pacer::new(direction_seed(seed, Direction::Down))),
            profile,
            seed,
            clock,
            epoch: Instant::now(),
        })
    }

    pub fn profile(&self) -> &NetProfile {
        &self.profile
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn clock_mode(&self) -> ClockMode {
        self.clock
    }

    /// Schedules `payload_size` bytes sent at `send_ms` and returns when the
    /// last byte reaches the far end.
    pub fn transmit(
        &self,
        direction: Direction,
        payload_size: usize,
        send_ms: f64,
    ) -> Result<f64, NetemError> {
        let pacer = match direction {
            Direction::Up => &self.up,
            Direction::Down => &self.down,
        };
        pacer
            .lock()
            .expect("pacer lock poisoned")
            .transmit(&self.profile, direction, payload_size, send_ms)
    }

    /// Milliseconds since the link was opened. Real mode only.
    pub fn now_ms(&self) -> Result<f64, NetemError> {
        match self.clock {
            ClockMode::Real => Ok(self.epoch.elapsed().as_secs_f64() * 1000.0),
            ClockMode::Virtual => Err(NetemError::WrongClock(ClockMode::Real)),
        }
    }

    pub(crate) fn epoch(&self) -> Instant {
        self.epoch
    }
}

fn direction_seed(seed: u64, direction: Direction) -> u64 {
    match direction {
        Direction::Up => seed,
        Direction::Down => seed ^ 0x9E37_79B9_7F4A_7C15,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn link(delay: f64, jitter: f64, bw: Bandwidth, seed: u64) -> EmulatedLink {
        EmulatedLink::open(NetProfile::new("t", delay, jitter, bw), seed, ClockMode::Virtual)
            .unwrap()
    }

    #[test]
    fn pure_delay_round_trip() {
        let l = link(10.0, 0.0, Bandwidth::Unlimited, 1);
        let there = l.transmit(Direction::Up, 100, 0.0).unwrap();
        assert_eq!(there, 10.0);
        let back = l.transmit(Direction::Down, 100, there).unwrap();
        assert_eq!(back, 20.0);
    }

    #[test]
    fn bandwidth_only() {
        let l = link(0.0, 0.0, Bandwidth::BytesPerSec(1e6), 1);
        assert_eq!(l.transmit(Direction::Up, 1_000_000, 0.0).unwrap(), 1000.0);
    }

    #[test]
    fn back_to_back_sends_serialize() {
        let l = link(0.0, 0.0, Bandwidth::BytesPerSec(1e6), 1);
        assert_eq!(l.transmit(Direction::Up, 500_000, 0.0).unwrap(), 500.0);
        assert_eq!(l.transmit(Direction::Up, 500_000, 0.0).unwrap(), 1000.0);
        // the other direction has its own pacing
        assert_eq!(l.transmit(Direction::Down, 500_000, 0.0).unwrap(), 500.0);
    }

    #[test]
    fn idle_gap_resets_pacing() {
        let l = link(5.0, 0.0, Bandwidth::BytesPerSec(1e6), 1);
        assert_eq!(l.transmit(Direction::Up, 1000, 0.0).unwrap(), 6.0);
        assert_eq!(l.transmit(Direction::Up, 1000, 100.0).unwrap(), 106.0);
    }

    #[test]
    fn default_profiles_valid() {
        for p in [
            NetProfile::edge(),
            NetProfile::cloud(),
            NetProfile::control(),
            NetProfile::edge_stream(),
            NetProfile::ideal(),
        ] {
            EmulatedLink::open(p, 0, ClockMode::Virtual).unwrap();
        }
    }

    #[test]
    fn jitter_above_delay_rejected() {
        let p = NetProfile::new("bad", 40.0, 50.0, Bandwidth::BytesPerSec(1e6));
        assert!(matches!(
            EmulatedLink::open(p, 0, ClockMode::Virtual),
            Err(NetemError::InvalidProfile { .. })
        ));
        let p = NetProfile::new("bad", 1.0, 0.0, Bandwidth::BytesPerSec(0.0));
        assert!(p.validate().is_err());
        let p = NetProfile::new("bad", -1.0, 0.0, Bandwidth::Unlimited);
        assert!(p.validate().is_err());
    }

    #[test]
    fn clock_regression_rejected() {
        let l = link(1.0, 0.0, Bandwidth::Unlimited, 1);
        l.transmit(Direction::Up, 1, 50.0).unwrap();
        assert!(matches!(
            l.transmit(Direction::Up, 1, 49.0),
            Err(NetemError::ClockRegression { .. })
        ));
        // equal time is fine, and directions are independent
        l.transmit(Direction::Up, 1, 50.0).unwrap();
        l.transmit(Direction::Down, 1, 0.0).unwrap();
    }

    #[test]
    fn virtual_link_has_no_wall_clock() {
        let l = link(1.0, 0.0, Bandwidth::Unlimited, 1);
        assert!(l.now_ms().is_err());
    }

    fn run(link: &EmulatedLink, sends: &[(usize, f64)]) -> Vec<f64> {
        sends
            .iter()
            .map(|&(size, t)| link.transmit(Direction::Up, size, t).unwrap())
            .collect()
    }

    fn sends_strategy() -> impl Strategy<Value = Vec<(usize, f64)>> {
        prop::collection::vec((1usize..200_000, 0.0f64..50.0), 1..40).prop_map(|v| {
            let mut t = 0.0;
            v.into_iter()
                .map(|(size, gap)| {
                    t += gap;
                    (size, t)
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn deterministic_per_seed(sends in sends_strategy(), seed in any::<u64>(), jitter in 0.0f64..20.0) {
            let bw = Bandwidth::BytesPerSec(1e6);
            let a = run(&link(20.0, jitter, bw, seed), &sends);
            let b = run(&link(20.0, jitter, bw, seed), &sends);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn fifo_and_causal(sends in sends_strategy(), seed in any::<u64>(), delay in 0.0f64..50.0, frac in 0.0f64..=1.0) {
            let l = link(delay, delay * frac, Bandwidth::BytesPerSec(2e6), seed);
            let out = run(&l, &sends);
            for w in out.windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
            for (d, (_, t)) in out.iter().zip(&sends) {
                prop_assert!(*d >= *t);
            }
        }

        #[test]
        fn monotone_in_delay_and_bandwidth(sends in sends_strategy(), d1 in 0.0f64..50.0, extra in 0.0f64..50.0, bw in 1e4f64..1e7, bw_cut in 1.0f64..10.0) {
            let base = run(&link(d1, 0.0, Bandwidth::BytesPerSec(bw), 3), &sends);
            let slower = run(&link(d1 + extra, 0.0, Bandwidth::BytesPerSec(bw), 3), &sends);
            let thinner = run(&link(d1, 0.0, Bandwidth::BytesPerSec(bw / bw_cut), 3), &sends);
            for i in 0..base.len() {
                prop_assert!(slower[i] >= base[i]);
                prop_assert!(thinner[i] >= base[i] - 1e-9);
            }
        }
    }
}
