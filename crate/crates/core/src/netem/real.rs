use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use super::{ClockMode, Direction, EmulatedLink, NetemError};

/// Sleeps until `deadline`, finishing with a short spin so wake-up lands
/// well under a millisecond late.
pub fn sleep_until(deadline: Instant) {
    const SPIN: Duration = Duration::from_micros(1500);
    loop {
        let now = Instant::now();
        if now >= deadline {
            return;
        }
        let left = deadline - now;
        if left > SPIN {
            thread::sleep(left - SPIN);
        } else {
            thread::yield_now();
        }
    }
}

type Sink = Box<dyn FnMut(Vec<u8>) -> std::io::Result<()> + Send>;

/// Wall-clock delivery for one direction of a real-mode link.
///
/// `send` stamps the message with its emulated delivery instant and returns
/// immediately; a worker thread hands it to the sink at that instant.
pub struct DelayLine {
    link: Arc<EmulatedLink>,
    direction: Direction,
    tx: Option<Sender<(Instant, Vec<u8>)>>,
    failed: Arc<AtomicBool>,
    worker: Option<JoinHandle<()>>,
}

impl DelayLine {
    pub fn spawn<F>(link: Arc<EmulatedLink>, direction: Direction, mut sink: F) -> Result<Self, NetemError>
    where
        F: FnMut(Vec<u8>) -> std::io::Result<()> + Send + 'static,
    {
        if link.clock_mode() != ClockMode::Real {
            return Err(NetemError::WrongClock(ClockMode::Real));
        }
        let (tx, rx) = mpsc::channel::<(Instant, Vec<u8>)>();
        let failed = Arc::new(AtomicBool::new(false));
        let worker_failed = failed.clone();
        let mut sink: Sink = Box::new(move |b| sink(b));
        let worker = thread::Builder::new()
            .name(format!("delay-line-{direction}"))
            .spawn(move || {
                for (deadline, bytes) in rx {
                    sleep_until(deadline);
                    if sink(bytes).is_err() {
                        worker_failed.store(true, Ordering::SeqCst);
                        break;
                    }
                }
            })?;
        Ok(Self {
            link,
            direction,
            tx: Some(tx),
            failed,
            worker: Some(worker),
        })
    }

    /// Queues `bytes`; returns the scheduled delivery time in link milliseconds.
    pub fn send(&self, bytes: Vec<u8>) -> Result<f64, NetemError> {
        if self.failed.load(Ordering::SeqCst) {
            return Err(NetemError::SinkClosed("earlier delivery failed".into()));
        }
        let now = self.link.now_ms()?;
        let at = self.link.transmit(self.direction, bytes.len(), now)?;
        let deadline = self.link.epoch() + Duration::from_secs_f64(at / 1000.0);
        self.tx
            .as_ref()
            .expect("sender present until drop")
            .send((deadline, bytes))
            .map_err(|_| NetemError::SinkClosed("worker gone".into()))?;
        Ok(at)
    }

    pub fn link(&self) -> &EmulatedLink {
        &self.link
    }
}

impl Drop for DelayLine {
    fn drop(&mut self) {
        // closing the channel lets the worker drain and exit
        self.tx.take();
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netem::NetProfile;
    use std::sync::Mutex;

    fn measure(profile: NetProfile, sizes: &[usize], gap: Duration) -> Vec<(f64, f64, f64)> {
        let link = Arc::new(EmulatedLink::open(profile, 11, ClockMode::Real).unwrap());
        let arrivals = Arc::new(Mutex::new(Vec::new()));
        let sink_arrivals = arrivals.clone();
        let sink_link = link.clone();
        let line = DelayLine::spawn(link.clone(), Direction::Up, move |_b| {
            sink_arrivals.lock().unwrap().push(sink_link.now_ms().unwrap());
            Ok(())
        })
        .unwrap();
        let mut sent = Vec::new();
        for &size in sizes {
            let t = link.now_ms().unwrap();
            let predicted = line.send(vec![0; size]).unwrap();
            sent.push((t, predicted));
            thread::sleep(gap);
        }
        drop(line);
        let arrivals = arrivals.lock().unwrap();
        sent.iter()
            .zip(arrivals.iter())
            .map(|(&(t, p), &a)| (t, p, a))
            .collect()
    }

    #[test]
    fn real_delivery_tracks_virtual_prediction() {
        // bench-sized messages on the default profiles
        let cases = [
            (NetProfile::edge(), vec![64usize, 64 * 1024, 256 * 1024]),
            (NetProfile::cloud(), vec![64usize, 16 * 1024]),
        ];
        for (profile, sizes) in cases {
            for (send, predicted, arrived) in measure(profile.clone(), &sizes, Duration::from_millis(60)) {
                let want = predicted - send;
                let got = arrived - send;
                assert!(got >= want - 1e-6, "{}: delivered early {got} < {want}", profile.name);
                assert!(got <= want * 1.25, "{}: lag {got} ms vs predicted {want} ms", profile.name);
            }
        }
    }

    #[test]
    fn real_delivery_is_fifo() {
        let p = NetProfile::new("j", 6.0, 5.0, crate::netem::Bandwidth::Unlimited);
        let link = Arc::new(EmulatedLink::open(p, 5, ClockMode::Real).unwrap());
        let got = Arc::new(Mutex::new(Vec::new()));
        let g = got.clone();
        let line = DelayLine::spawn(link, Direction::Down, move |b| {
            g.lock().unwrap().push(b[0]);
            Ok(())
        })
        .unwrap();
        for i in 0..50u8 {
            line.send(vec![i]).unwrap();
        }
        drop(line);
        assert_eq!(*got.lock().unwrap(), (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn virtual_link_refused() {
        let link = Arc::new(EmulatedLink::open(NetProfile::edge(), 0, ClockMode::Virtual).unwrap());
        assert!(DelayLine::spawn(link, Direction::Up, |_| Ok(())).is_err());
    }
}
