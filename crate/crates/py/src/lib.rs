//! Python bindings: wire codec, link profiles, eigenface model, navigation
//! graph, virtual-clock scenarios and benchmarks.

use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use edgeframe_core::bench::{self, VirtualExchange};
use edgeframe_core::client::{check_assertions, parse_script, simulate, AgentConfig, ComputeMode, ScenarioConfig};
use edgeframe_core::facerec::synth::{self, FaceGenSpec};
use edgeframe_core::facerec::{self as fr, GalleryImage};
use edgeframe_core::image::GrayImage;
use edgeframe_core::navigation::{self as nav, read_map};
use edgeframe_core::netem::{self, Bandwidth};
use edgeframe_core::platform::{ComputeTiming, Platform, PlatformConfig, RuleSet};
use edgeframe_core::wire::{self, Decoded, FramePayload, MsgType};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn standard() -> Arc<fr::FaceModel> {
    static MODEL: OnceLock<Arc<fr::FaceModel>> = OnceLock::new();
    MODEL.get_or_init(|| Arc::new(synth::standard_model())).clone()
}

/// One decoded message.
#[pyclass(frozen)]
struct Envelope {
    inner: wire::Envelope,
}

#[pymethods]
impl Envelope {
    #[new]
    #[pyo3(signature = (msg_type, session_id, seq, payload))]
    fn new(msg_type: &str, session_id: u32, seq: u32, payload: &[u8]) -> PyResult<Self> {
        let msg_type: MsgType = msg_type.parse().map_err(value_err)?;
        Ok(Self {
            inner: wire::Envelope::new(msg_type, session_id, seq, payload.to_vec()),
        })
    }

    #[getter]
    fn msg_type(&self) -> &'static str {
        self.inner.msg_type.name()
    }

    #[getter]
    fn session_id(&self) -> u32 {
        self.inner.session_id
    }

    #[getter]
    fn seq(&self) -> u32 {
        self.inner.seq
    }

    #[getter]
    fn payload<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.payload)
    }

    fn wire_len(&self) -> usize {
        self.inner.wire_len()
    }

    fn encode<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
        let bytes = wire::encode_frame(&self.inner).map_err(value_err)?;
        Ok(PyBytes::new(py, &bytes))
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!(
            "Envelope({}, session={}, seq={}, {} payload bytes)",
            self.inner.msg_type,
            self.inner.session_id,
            self.inner.seq,
            self.inner.payload.len()
        )
    }
}

/// Decodes one message from the front of `data`. Returns the envelope and
/// the number of bytes it used, or None if more bytes are needed.
#[pyfunction]
fn decode(data: &[u8]) -> PyResult<Option<(Envelope, usize)>> {
    match wire::decode_frame(data).map_err(value_err)? {
        Decoded::Frame(inner, rest) => {
            let used = data.len() - rest.len();
            Ok(Some((Envelope { inner }, used)))
        }
        Decoded::NeedMoreData => Ok(None),
    }
}

/// Delay, jitter and bandwidth of one emulated link.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct NetProfile {
    inner: netem::NetProfile,
}

#[pymethods]
impl NetProfile {
    /// `bandwidth_bps` of None means unlimited.
    #[new]
    #[pyo3(signature = (name, delay_ms, jitter_ms=0.0, bandwidth_bps=None))]
    fn new(name: &str, delay_ms: f64, jitter_ms: f64, bandwidth_bps: Option<f64>) -> PyResult<Self> {
        let bandwidth = bandwidth_bps.map_or(Bandwidth::Unlimited, Bandwidth::BytesPerSec);
        let inner = netem::NetProfile::new(name, delay_ms, jitter_ms, bandwidth);
        inner.validate().map_err(value_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn named(name: &str) -> PyResult<Self> {
        let set = netem::ProfileSet::default();
        Ok(Self {
            inner: set.get(name).map_err(value_err)?.clone(),
        })
    }

    #[staticmethod]
    fn edge() -> Self {
        Self {
            inner: netem::NetProfile::edge(),
        }
    }

    #[staticmethod]
    fn cloud() -> Self {
        Self {
            inner: netem::NetProfile::cloud(),
        }
    }

    #[staticmethod]
    fn edge_stream() -> Self {
        Self {
            inner: netem::NetProfile::edge_stream(),
        }
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn delay_ms(&self) -> f64 {
        self.inner.one_way_delay_ms
    }

    #[getter]
    fn jitter_ms(&self) -> f64 {
        self.inner.jitter_ms
    }

    #[getter]
    fn bandwidth_bps(&self) -> Option<f64> {
        match self.inner.bandwidth {
            Bandwidth::Unlimited => None,
            Bandwidth::BytesPerSec(r) => Some(r),
        }
    }

    /// Delivery time of a lone message of `size` bytes on an idle link.
    fn one_way_ms(&self, size: usize) -> f64 {
        self.inner.one_way_ms(size)
    }

    /// Jitter-free round trip of a request/response pair, framing included.
    fn predicted_rtt_ms(&self, request_payload: usize, response_payload: usize) -> f64 {
        bench::predicted_rtt_ms(&self.inner, request_payload, response_payload)
    }

    fn __repr__(&self) -> String {
        format!(
            "NetProfile({}, delay_ms={}, jitter_ms={}, bandwidth={})",
            self.inner.name, self.inner.one_way_delay_ms, self.inner.jitter_ms, self.inner.bandwidth
        )
    }
}

type GalleryTuple = (String, usize, usize, Vec<u8>);

fn image(width: usize, height: usize, pixels: &[u8]) -> PyResult<GrayImage> {
    GrayImage::new(width, height, pixels.to_vec()).map_err(value_err)
}

/// A trained eigenface model.
#[pyclass(frozen)]
struct FaceModel {
    inner: Arc<fr::FaceModel>,
}

#[pymethods]
impl FaceModel {
    /// The model trained on the built-in synthetic gallery.
    #[staticmethod]
    fn standard() -> Self {
        Self { inner: standard() }
    }

    /// Trains on `(label, width, height, pixels)` tuples.
    #[staticmethod]
    fn train(gallery: Vec<GalleryTuple>, k: usize) -> PyResult<Self> {
        let images = gallery
            .into_iter()
            .map(|(label, w, h, pixels)| Ok(GalleryImage::new(label, GrayImage::new(w, h, pixels).map_err(value_err)?)))
            .collect::<PyResult<Vec<_>>>()?;
        let model = fr::FaceModel::train(&images, k).map_err(value_err)?;
        Ok(Self { inner: Arc::new(model) })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: Arc::new(fr::FaceModel::load(&path).map_err(runtime_err)?),
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(runtime_err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigenvalues.clone()
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.class_centers.keys().cloned().collect()
    }

    /// Nearest identity of a face-sized image, as `(label or None, distance)`.
    fn classify(&self, width: usize, height: usize, pixels: &[u8]) -> PyResult<(Option<String>, f64)> {
        let weights = self.inner.project(&image(width, height, pixels)?).map_err(value_err)?;
        let c = self.inner.classify(&weights);
        Ok((c.label, c.distance))
    }

    /// Distance from face space of a face-sized image.
    fn dffs(&self, width: usize, height: usize, pixels: &[u8]) -> PyResult<f64> {
        self.inner.dffs(&image(width, height, pixels)?).map_err(value_err)
    }

    /// Detects and labels every face in a frame. Each box is a dict with
    /// `x`, `y`, `w`, `h`, `label` (None if unknown) and `distance`.
    fn recognize<'py>(&self, py: Python<'py>, width: u16, height: u16, pixels: &[u8]) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let frame = FramePayload::new(0, 0, width, height, pixels.to_vec()).map_err(value_err)?;
        let result = fr::recognize_frame(&frame, &self.inner).map_err(value_err)?;
        result
            .boxes
            .into_iter()
            .map(|b| {
                let d = PyDict::new(py);
                d.set_item("x", b.x)?;
                d.set_item("y", b.y)?;
                d.set_item("w", b.w)?;
                d.set_item("h", b.h)?;
                d.set_item("label", b.label)?;
                d.set_item("distance", b.distance)?;
                Ok(d)
            })
            .collect()
    }
}

/// Synthetic gallery as `(label, width, height, pixels)` tuples.
#[pyfunction]
#[pyo3(signature = (identities=10, per_identity=5, width=32, height=32, seed=42))]
fn generate_gallery<'py>(
    py: Python<'py>,
    identities: usize,
    per_identity: usize,
    width: usize,
    height: usize,
    seed: u64,
) -> Vec<(String, usize, usize, Bound<'py, PyBytes>)> {
    synth::generate_gallery(&FaceGenSpec::new(identities, per_identity, width, height, seed))
        .into_iter()
        .map(|g| (g.label, g.image.width, g.image.height, PyBytes::new(py, &g.image.pixels)))
        .collect()
}

/// A floor graph for navigation.
#[pyclass(frozen)]
struct NavGraph {
    inner: Arc<nav::NavGraph>,
}

#[pymethods]
impl NavGraph {
    #[staticmethod]
    fn demo() -> Self {
        Self {
            inner: Arc::new(nav::demo_map()),
        }
    }

    #[staticmethod]
    #[pyo3(signature = (width, height, spacing_m=5.0, seed=0))]
    fn grid(width: u32, height: u32, spacing_m: f64, seed: u64) -> Self {
        Self {
            inner: Arc::new(nav::generate_grid_map(nav::GridSpec::new(width, height, spacing_m, seed))),
        }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: Arc::new(read_map(&path).map_err(runtime_err)?),
        })
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    /// `(node, name)` of every destination.
    fn destinations(&self) -> Vec<(u32, String)> {
        self.inner.destinations().map(|(id, info)| (id, info.name.clone())).collect()
    }

    /// Cheapest route as `(waypoints, cost)`.
    fn shortest_path(&self, src: u32, dst: u32) -> PyResult<(Vec<u32>, f64)> {
        let route = self.inner.shortest_path(src, dst).map_err(value_err)?;
        Ok((route.waypoints, route.total_cost))
    }
}

/// Plays a scenario script against the in-process platform on the virtual
/// clock. Returns a dict with `passed`, `failure`, `transcript`, `end_ms`
/// and `timed_out`.
#[pyfunction]
#[pyo3(signature = (script, seed=0, mode="edge", data_profile=None, slowdown=10.0))]
fn run_scenario<'py>(
    py: Python<'py>,
    script: &str,
    seed: u64,
    mode: &str,
    data_profile: Option<NetProfile>,
    slowdown: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let script = parse_script(script).map_err(value_err)?;
    let mode = match mode {
        "edge" => ComputeMode::Edge,
        "local" => ComputeMode::Local,
        other => return Err(PyValueError::new_err(format!("mode must be edge or local, got {other}"))),
    };
    // zero server compute time keeps the transcript reproducible
    let platform = Platform::new(PlatformConfig {
        rules: RuleSet::defaults(),
        graph: Some(Arc::new(nav::demo_map())),
        model: Some(standard()),
        timing: ComputeTiming::Instant,
    })
    .map_err(runtime_err)?;
    let mut agent = AgentConfig::new("glass");
    agent.mode = mode;
    agent.slowdown = slowdown;
    agent.seed = seed;
    agent.model = Some(standard());
    let mut cfg = ScenarioConfig::new(agent);
    cfg.seed = seed;
    if let Some(p) = data_profile {
        cfg.data_profile = p.inner;
    }
    let run = py.detach(|| simulate(script, &platform, &cfg)).map_err(runtime_err)?;
    let failure = check_assertions(&run).err().map(|e| e.to_string());
    let out = PyDict::new(py);
    out.set_item("passed", failure.is_none())?;
    out.set_item("failure", failure)?;
    out.set_item("transcript", run.transcript.to_text())?;
    out.set_item("end_ms", run.end_ms)?;
    out.set_item("timed_out", run.timed_out)?;
    Ok(out)
}

fn exchange(profile: &NetProfile, seed: u64) -> PyResult<VirtualExchange> {
    let platform = bench::bench_platform(standard()).map_err(runtime_err)?;
    VirtualExchange::new(Arc::new(platform), netem::NetProfile::control(), profile.inner.clone(), seed).map_err(runtime_err)
}

/// Echo round-trip times in ms on the virtual clock.
#[pyfunction]
#[pyo3(signature = (profile, n=100, payload_bytes=64, seed=0))]
fn bench_latency(profile: &NetProfile, n: usize, payload_bytes: usize, seed: u64) -> PyResult<Vec<f64>> {
    let mut ex = exchange(profile, seed)?;
    let samples = bench::bench_latency(&mut ex, n, payload_bytes).map_err(runtime_err)?;
    Ok(samples.into_iter().map(|s| s.rtt_ms).collect())
}

/// Upload rate in bytes per second on the virtual clock.
#[pyfunction]
#[pyo3(signature = (profile, total_bytes=1 << 20, chunk_bytes=bench::DEFAULT_CHUNK_BYTES, seed=0))]
fn bench_throughput(profile: &NetProfile, total_bytes: usize, chunk_bytes: usize, seed: u64) -> PyResult<f64> {
    let mut ex = exchange(profile, seed)?;
    Ok(bench::bench_throughput(&mut ex, total_bytes, chunk_bytes).map_err(runtime_err)?.rate_bps)
}

#[pymodule]
fn edgeframe(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Envelope>()?;
    m.add_class::<NetProfile>()?;
    m.add_class::<FaceModel>()?;
    m.add_class::<NavGraph>()?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(generate_gallery, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(bench_latency, m)?)?;
    m.add_function(wrap_pyfunction!(bench_throughput, m)?)?;
    m.add("HEADER_LEN", wire::HEADER_LEN)?;
    m.add("TRAILER_LEN", wire::TRAILER_LEN)?;
    Ok(())
}
