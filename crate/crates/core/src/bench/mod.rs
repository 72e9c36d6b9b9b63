//! Latency, throughput and recognition benchmarks with CSV reports.
//!
//! Percentiles are nearest-rank: the p-th percentile of n sorted samples is
//! the one at rank ceil(p/100 * n), counting from 1.

mod exchange;

pub use exchange::{Exchange, TcpExchange, VirtualExchange};

use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{run_local_recognition, ClientError, ComputeMode};
use crate::facerec::{FaceError, FaceModel, RecognitionResult};
use crate::geom::Point3;
use crate::navigation::demo_map;
use crate::netem::{NetProfile, NetemError};
use crate::platform::{ComputeTiming, ContextRecord, Platform, PlatformConfig, PlatformError, RuleSet, DEFAULT_DWELL_MS};
use crate::wire::payload::{ByteCount, ErrorReport, Hello, ServiceNotice};
use crate::wire::{Channel, Envelope, FramePayload, MsgType, PayloadError, WirePayload, HEADER_LEN, TRAILER_LEN};

/// Frame size used by the recognition benchmark.
pub const BENCH_FRAME_WIDTH: usize = 400;
pub const BENCH_FRAME_HEIGHT: usize = 300;
pub const DEFAULT_CHUNK_BYTES: usize = 64 * 1024;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("no samples to summarize")]
    EmptySamples,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("latency run aborted after {} probes: {reason}", partial.len())]
    LatencyAborted { partial: Vec<LatencySample>, reason: String },
    #[error("server rejected the request: {0}")]
    ServerRejected(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Netem(#[from] NetemError),
    #[error(transparent)]
    Face(#[from] FaceError),
    #[error(transparent)]
    Payload(#[from] PayloadError),
    #[error(transparent)]
    Platform(#[from] PlatformError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<ClientError> for BenchError {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::Face(f) => BenchError::Face(f),
            ClientError::InvalidArgument(m) => BenchError::InvalidArgument(m),
            other => BenchError::Transport(other.to_string()),
        }
    }
}

impl From<csv::Error> for BenchError {
    fn from(e: csv::Error) -> Self {
        BenchError::Csv(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencySample {
    pub probe_seq: u32,
    pub rtt_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputSample {
    pub bytes: u64,
    pub elapsed_ms: f64,
    #[serde(rename = "rate_Bps")]
    pub rate_bps: f64,
}

impl ThroughputSample {
    pub fn new(bytes: u64, elapsed_ms: f64) -> Self {
        Self {
            bytes,
            elapsed_ms,
            rate_bps: bytes as f64 / elapsed_ms * 1000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecogSample {
    pub frame_seq: u32,
    pub mode: ComputeMode,
    pub compute_ms: f64,
    pub transport_ms: f64,
    pub total_ms: f64,
}

/// A sample type with a fixed CSV layout.
pub trait CsvRow: Serialize + DeserializeOwned {
    const HEADER: &'static [&'static str];
    /// The column summarized by default.
    fn value(&self) -> f64;
}

impl CsvRow for LatencySample {
    const HEADER: &'static [&'static str] = &["probe_seq", "rtt_ms"];
    fn value(&self) -> f64 {
        self.rtt_ms
    }
}

impl CsvRow for ThroughputSample {
    const HEADER: &'static [&'static str] = &["bytes", "elapsed_ms", "rate_Bps"];
    fn value(&self) -> f64 {
        self.rate_bps
    }
}

impl CsvRow for RecogSample {
    const HEADER: &'static [&'static str] = &["frame_seq", "mode", "compute_ms", "transport_ms", "total_ms"];
    fn value(&self) -> f64 {
        self.total_ms
    }
}

/// Writes the header row and then one row per sample.
pub fn write_csv<T: CsvRow, W: Write>(out: W, rows: &[T]) -> Result<(), BenchError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(T::HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows written by [`write_csv`]; the header must match exactly.
pub fn read_csv<T: CsvRow, R: Read>(input: R) -> Result<Vec<T>, BenchError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != T::HEADER {
        return Err(BenchError::Csv(format!("header {header:?}, expected {:?}", T::HEADER)));
    }
    r.deserialize().map(|row| row.map_err(BenchError::from)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStats {
    pub n: usize,
    pub min: f64,
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    pub max: f64,
}

impl fmt::Display for SummaryStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "n={} min={:.3} mean={:.3} p50={:.3} p95={:.3} max={:.3}",
            self.n, self.min, self.mean, self.p50, self.p95, self.max
        )
    }
}

/// Nearest-rank percentile of an ascending slice; `p` in (0, 100].
fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn summarize(samples: &[f64]) -> Result<SummaryStats, BenchError> {
    if samples.is_empty() {
        return Err(BenchError::EmptySamples);
    }
    if let Some(bad) = samples.iter().find(|v| !v.is_finite()) {
        return Err(BenchError::InvalidArgument(format!("non-finite sample {bad}")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(SummaryStats {
        n: sorted.len(),
        min: sorted[0],
        mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        p50: nearest_rank(&sorted, 50.0),
        p95: nearest_rank(&sorted, 95.0),
        max: sorted[sorted.len() - 1],
    })
}

/// Round trip of a lone request/response pair on an idle, jitter-free link.
pub fn predicted_rtt_ms(profile: &NetProfile, request_payload: usize, response_payload: usize) -> f64 {
    let framed = |n: usize| HEADER_LEN + n + TRAILER_LEN;
    profile.one_way_ms(framed(request_payload)) + profile.one_way_ms(framed(response_payload))
}

/// The platform the benchmarks talk to: default rules, the demo map and the
/// given model, reporting measured compute time.
pub fn bench_platform(model: Arc<FaceModel>) -> Result<Platform, BenchError> {
    Ok(Platform::new(PlatformConfig {
        rules: RuleSet::defaults(),
        graph: Some(Arc::new(demo_map())),
        model: Some(model),
        timing: ComputeTiming::Measured,
    })?)
}

/// Sequential echo probes on the data channel. Each probe carries its
/// sequence number padded to `payload_bytes` (at least 4).
pub fn bench_latency(ex: &mut dyn Exchange, n_probes: usize, payload_bytes: usize) -> Result<Vec<LatencySample>, BenchError> {
    if n_probes == 0 {
        return Err(BenchError::InvalidArgument("need at least one probe".into()));
    }
    let size = payload_bytes.max(4);
    let mut samples = Vec::with_capacity(n_probes);
    for i in 0..n_probes {
        let probe_seq = i as u32 + 1;
        let mut payload = probe_seq.to_be_bytes().to_vec();
        payload.resize(size, 0);
        let result = (|| {
            let sent = ex.send(Channel::Data, Envelope::new(MsgType::EchoReq, 0, probe_seq, payload))?;
            loop {
                let d = ex.recv()?;
                if d.envelope.msg_type == MsgType::EchoResp && d.envelope.payload.get(..4) == Some(&probe_seq.to_be_bytes()) {
                    return Ok::<f64, BenchError>(d.at_ms - sent);
                }
            }
        })();
        match result {
            Ok(rtt_ms) => samples.push(LatencySample { probe_seq, rtt_ms }),
            Err(e) => {
                return Err(BenchError::LatencyAborted {
                    partial: samples,
                    reason: e.to_string(),
                })
            }
        }
    }
    Ok(samples)
}

/// One upload of `total_bytes` in `chunk_bytes` pieces, timed from
/// UPLOAD_BEGIN to UPLOAD_ACK.
pub fn bench_throughput(ex: &mut dyn Exchange, total_bytes: usize, chunk_bytes: usize) -> Result<ThroughputSample, BenchError> {
    if chunk_bytes == 0 || total_bytes < chunk_bytes {
        return Err(BenchError::InvalidArgument(format!(
            "need total ({total_bytes}) >= chunk ({chunk_bytes}) >= 1"
        )));
    }
    let mut seq = 0;
    let mut next = || {
        seq += 1;
        seq
    };
    let announce = ByteCount {
        bytes: total_bytes as u64,
    };
    let started = ex.send(Channel::Data, Envelope::new(MsgType::UploadBegin, 0, next(), announce.to_bytes()))?;
    let mut left = total_bytes;
    while left > 0 {
        let n = left.min(chunk_bytes);
        ex.send(Channel::Data, Envelope::new(MsgType::UploadChunk, 0, next(), vec![0xA5; n]))?;
        left -= n;
    }
    ex.send(Channel::Data, Envelope::new(MsgType::UploadEnd, 0, next(), Vec::new()))?;
    loop {
        let d = ex.recv()?;
        if d.envelope.msg_type == MsgType::UploadAck {
            let got = ByteCount::from_bytes(&d.envelope.payload)?.bytes;
            if got != total_bytes as u64 {
                return Err(BenchError::ServerRejected(format!("acknowledged {got} of {total_bytes} bytes")));
            }
            return Ok(ThroughputSample::new(total_bytes as u64, d.at_ms - started));
        }
    }
}

/// Where the recognition benchmark runs the pipeline.
pub enum RecognitionSetup<'a> {
    /// Offload every frame through the exchange.
    Edge(&'a mut dyn Exchange),
    /// Run on the glass, `slowdown` times slower than measured.
    Local { model: &'a FaceModel, slowdown: f64 },
}

/// Frames are processed one at a time. Edge samples split the round trip
/// into the server's reported pipeline time and everything else.
pub fn bench_recognition(frames: &[FramePayload], setup: RecognitionSetup<'_>) -> Result<Vec<RecogSample>, BenchError> {
    if frames.is_empty() {
        return Err(BenchError::InvalidArgument("no frames".into()));
    }
    match setup {
        RecognitionSetup::Local { model, slowdown } => frames
            .iter()
            .map(|f| {
                let (_, simulated) = run_local_recognition(f, model, slowdown)?;
                Ok(RecogSample {
                    frame_seq: f.frame_seq,
                    mode: ComputeMode::Local,
                    compute_ms: simulated,
                    transport_ms: 0.0,
                    total_ms: simulated,
                })
            })
            .collect(),
        RecognitionSetup::Edge(ex) => {
            let mut session = open_facerec_session(ex)?;
            frames
                .iter()
                .map(|f| {
                    let (result, total_ms) = session.recognize(ex, f)?;
                    let compute_ms = result.processing_time_ms;
                    Ok(RecogSample {
                        frame_seq: f.frame_seq,
                        mode: ComputeMode::Edge,
                        compute_ms,
                        transport_ms: (total_ms - compute_ms).max(0.0),
                        total_ms,
                    })
                })
                .collect()
        }
    }
}

/// A session with face recognition active.
pub struct FacerecSession {
    pub session_id: u32,
    data_seq: u32,
}

/// Says HELLO, reports the glass in the reception zone and waits out the
/// dwell until face recognition is activated.
pub fn open_facerec_session(ex: &mut dyn Exchange) -> Result<FacerecSession, BenchError> {
    let hello = Hello {
        user_id: "bench".into(),
        channel: Channel::Control,
    };
    ex.send(Channel::Control, Envelope::new(MsgType::Hello, 0, 1, hello.to_bytes()))?;
    let sid = expect(ex, MsgType::HelloAck)?.session_id;
    let ctx = |t: f64| ContextRecord::new("bench", t as u64, Point3::default()).with_zone("reception");
    let t0 = ex.now_ms();
    ex.send(Channel::Control, Envelope::new(MsgType::ContextUpdate, sid, 2, ctx(t0).to_bytes()))?;
    ex.wait_until(t0 + DEFAULT_DWELL_MS as f64 + 100.0);
    let t1 = ex.now_ms();
    ex.send(Channel::Control, Envelope::new(MsgType::ContextUpdate, sid, 3, ctx(t1).to_bytes()))?;
    let notice = ServiceNotice::from_bytes(&expect(ex, MsgType::ServiceActivate)?.payload)?;
    if notice.service_id != "facerec" {
        return Err(BenchError::ServerRejected(format!("activated {} instead of facerec", notice.service_id)));
    }
    Ok(FacerecSession {
        session_id: sid,
        data_seq: 0,
    })
}

impl FacerecSession {
    /// Sends one frame and waits for its result; returns it with the round
    /// trip time.
    pub fn recognize(&mut self, ex: &mut dyn Exchange, frame: &FramePayload) -> Result<(RecognitionResult, f64), BenchError> {
        self.data_seq += 1;
        let sent = ex.send(
            Channel::Data,
            Envelope::new(MsgType::Frame, self.session_id, self.data_seq, frame.to_bytes()),
        )?;
        loop {
            let d = ex.recv()?;
            match d.envelope.msg_type {
                MsgType::RecogResult => {
                    let r = RecognitionResult::from_bytes(&d.envelope.payload)?;
                    if r.frame_seq == frame.frame_seq {
                        return Ok((r, d.at_ms - sent));
                    }
                }
                MsgType::Error => {
                    let e = ErrorReport::from_bytes(&d.envelope.payload)?;
                    return Err(BenchError::ServerRejected(e.message));
                }
                _ => {}
            }
        }
    }
}

fn expect(ex: &mut dyn Exchange, msg_type: MsgType) -> Result<Envelope, BenchError> {
    loop {
        let d = ex.recv()?;
        if d.envelope.msg_type == msg_type {
            return Ok(d.envelope);
        }
        if d.envelope.msg_type == MsgType::Error {
            let e = ErrorReport::from_bytes(&d.envelope.payload)?;
            return Err(BenchError::ServerRejected(e.message));
        }
    }
}
