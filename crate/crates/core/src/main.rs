use std::error::Error;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use edgeframe_core::bench::{
    self, bench_latency, bench_platform, bench_recognition, bench_throughput, summarize, write_csv, CsvRow, Exchange,
    RecognitionSetup, TcpExchange, VirtualExchange, BENCH_FRAME_HEIGHT, BENCH_FRAME_WIDTH, DEFAULT_CHUNK_BYTES,
};
use edgeframe_core::client::{
    check_assertions, run_live, simulate, AgentConfig, ClientError, ComputeMode, ScenarioConfig, ScenarioScript,
    TcpTransport,
};
use edgeframe_core::facerec::synth::{bench_frames, generate_gallery, standard_model, FaceGenSpec};
use edgeframe_core::facerec::{read_gallery, write_gallery, FaceModel, StorageReport};
use edgeframe_core::geom::Point3;
use edgeframe_core::navigation::{demo_map, generate_grid_map, read_map, write_map, GridSpec, NavGraph};
use edgeframe_core::netem::{NetProfile, ProfileSet};
use edgeframe_core::platform::{ComputeTiming, Platform, PlatformConfig, RuleSet};
use edgeframe_core::server::{serve, spawn_server, ServerConfig};

#[derive(Parser)]
#[command(name = "edgeframe", version, about = "Context-driven edge platform for AR glasses")]
struct Cli {
    /// Extra link profiles (`profile <name> delay_ms=.. jitter_ms=.. bw_Bps=..`).
    #[arg(long, global = true)]
    profiles: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the platform as a TCP server.
    Serve(ServeArgs),
    /// Play a scenario script as a simulated glass.
    Client(ClientArgs),
    /// Latency, throughput and recognition benchmarks.
    Bench(BenchArgs),
    /// Generate a grid map with random corridor deletions.
    Mapgen(MapgenArgs),
    /// Face database tools.
    Facedb {
        #[command(subcommand)]
        command: FacedbCommand,
    },
    /// Write a deterministic synthetic face gallery.
    Facegen(FacegenArgs),
}

#[derive(Args)]
struct PlatformArgs {
    /// Rules file; built-in defaults if omitted.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Map file; the demo map if omitted.
    #[arg(long)]
    map: Option<PathBuf>,
    /// Eigenface model; trained on the standard synthetic gallery if omitted.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    platform: PlatformArgs,
    /// Profile shaping traffic sent on data connections.
    #[arg(long, default_value = "edge")]
    net_profile: String,
    /// Profile shaping traffic sent on control connections.
    #[arg(long, default_value = "control")]
    control_profile: String,
    #[arg(long, default_value = "127.0.0.1:7878")]
    listen: String,
    #[arg(long, env = "EDGEFRAME_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ClientArgs {
    #[arg(long)]
    script: PathBuf,
    /// Server address; without it the scenario runs in-process on a virtual clock.
    #[arg(long)]
    connect: Option<String>,
    #[arg(long, default_value = "edge")]
    net_profile: String,
    #[arg(long, default_value = "control")]
    control_profile: String,
    #[arg(long, default_value = "edge")]
    mode: ComputeMode,
    #[arg(long, default_value_t = 10.0)]
    slowdown: f64,
    #[arg(long, default_value = "glass")]
    user: String,
    /// Starting position x,y[,z].
    #[arg(long, value_parser = parse_point, default_value = "0,0,0")]
    start: Point3,
    /// Gaussian noise on reported positions, metres.
    #[arg(long, default_value_t = 0.0)]
    position_noise: f64,
    #[arg(long, env = "EDGEFRAME_SEED", default_value_t = 0)]
    seed: u64,
    /// Write the transcript here instead of stdout.
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Virtual-clock cap, ms.
    #[arg(long, default_value_t = 600_000)]
    max_duration: u64,
    #[command(flatten)]
    platform: PlatformArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BenchKind {
    Latency,
    Throughput,
    Recognition,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Clock {
    Virtual,
    Real,
}

#[derive(Args)]
struct BenchArgs {
    kind: BenchKind,
    #[arg(long, default_value = "edge")]
    net_profile: String,
    /// Probes, uploads or frames (defaults 100, 1, 20).
    #[arg(long)]
    n: Option<usize>,
    /// Probe payload or upload size in bytes (defaults 64, 1000000).
    #[arg(long)]
    size: Option<usize>,
    #[arg(long, default_value = "edge")]
    mode: ComputeMode,
    #[arg(long, default_value_t = 10.0)]
    slowdown: f64,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, env = "EDGEFRAME_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "virtual")]
    clock: Clock,
    /// Real clock only: benchmark this server instead of an in-process one.
    #[arg(long)]
    connect: Option<String>,
    /// Also check the expected ordering and exit 2 if it fails: latency and
    /// throughput against `--against`, recognition edge against local.
    #[arg(long)]
    check: bool,
    #[arg(long, default_value = "cloud")]
    against: String,
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct MapgenArgs {
    #[arg(long, value_parser = parse_dims, default_value = "6x4")]
    grid: (usize, usize),
    #[arg(long, default_value_t = 5.0)]
    spacing: f64,
    #[arg(long, env = "EDGEFRAME_SEED", default_value_t = 0)]
    seed: u64,
    /// Map file to write; destination images go next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum FacedbCommand {
    /// Train an eigenface model from `<gallery>/<label>/*.pgm`.
    Train {
        #[arg(long)]
        gallery: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct FacegenArgs {
    #[arg(long, default_value_t = 10)]
    identities: usize,
    #[arg(long, default_value_t = 5)]
    per_id: usize,
    #[arg(long, value_parser = parse_dims, default_value = "32x32")]
    size: (usize, usize),
    #[arg(long, env = "EDGEFRAME_SEED", default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_dims(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once('x').ok_or_else(|| format!("expected WxH, got '{s}'"))?;
    let w: usize = w.parse().map_err(|_| format!("bad width '{w}'"))?;
    let h: usize = h.parse().map_err(|_| format!("bad height '{h}'"))?;
    if w == 0 || h == 0 {
        return Err("dimensions must be positive".into());
    }
    Ok((w, h))
}

fn parse_point(s: &str) -> Result<Point3, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|_| format!("bad point '{s}'"))?;
    match v[..] {
        [x, y] => Ok(Point3::new(x, y, 0.0)),
        [x, y, z] => Ok(Point3::new(x, y, z)),
        _ => Err(format!("point '{s}' needs 2 or 3 numbers")),
    }
}

type AnyResult<T> = Result<T, Box<dyn Error>>;

/// What a successful run reports back to the shell.
enum Outcome {
    Ok,
    /// An assertion or expected ordering did not hold.
    Violated(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Violated(msg)) => {
            eprintln!("FAILED: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> AnyResult<Outcome> {
    let profiles = match &cli.profiles {
        Some(p) => ProfileSet::load(p)?,
        None => ProfileSet::default(),
    };
    match cli.command {
        Command::Serve(a) => cmd_serve(a, &profiles),
        Command::Client(a) => cmd_client(a, &profiles),
        Command::Bench(a) => cmd_bench(a, &profiles),
        Command::Mapgen(a) => {
            let (w, h) = a.grid;
            let g = generate_grid_map(GridSpec::new(w as u32, h as u32, a.spacing, a.seed));
            write_map(&g, &a.out)?;
            eprintln!("wrote {} nodes, {} edges to {}", g.node_count(), g.edges().count(), a.out.display());
            Ok(Outcome::Ok)
        }
        Command::Facedb {
            command: FacedbCommand::Train { gallery, k, out },
        } => {
            let images = read_gallery(&gallery)?;
            let model = FaceModel::train(&images, k)?;
            model.save(&out)?;
            let report = StorageReport::measure(&gallery, &model)?;
            println!(
                "trained k={} on {} images of {} identities; gallery {} bytes, model {} bytes",
                model.k(),
                report.images,
                model.class_centers.len(),
                report.gallery_bytes,
                report.model_bytes
            );
            Ok(Outcome::Ok)
        }
        Command::Facegen(a) => {
            let spec = FaceGenSpec::new(a.identities, a.per_id, a.size.0, a.size.1, a.seed);
            let images = generate_gallery(&spec);
            write_gallery(&a.out, &images)?;
            eprintln!("wrote {} images to {}", images.len(), a.out.display());
            Ok(Outcome::Ok)
        }
    }
}

fn load_model(path: Option<&Path>) -> AnyResult<FaceModel> {
    Ok(match path {
        Some(p) => FaceModel::load(p)?,
        None => standard_model(),
    })
}

fn build_platform(a: &PlatformArgs, timing: ComputeTiming) -> AnyResult<Platform> {
    let rules = match &a.rules {
        Some(p) => RuleSet::load(p)?,
        None => RuleSet::defaults(),
    };
    let graph: NavGraph = match &a.map {
        Some(p) => read_map(p)?,
        None => demo_map(),
    };
    Ok(Platform::new(PlatformConfig {
        rules,
        graph: Some(Arc::new(graph)),
        model: Some(Arc::new(load_model(a.model.as_deref())?)),
        timing,
    })?)
}

fn cmd_serve(a: ServeArgs, profiles: &ProfileSet) -> AnyResult<Outcome> {
    let platform = Arc::new(build_platform(&a.platform, ComputeTiming::Measured)?);
    let config = ServerConfig {
        control_profile: profiles.get(&a.control_profile)?.clone(),
        data_profile: profiles.get(&a.net_profile)?.clone(),
        seed: a.seed,
    };
    serve(&a.listen, platform, config)?;
    Ok(Outcome::Ok)
}

fn cmd_client(a: ClientArgs, profiles: &ProfileSet) -> AnyResult<Outcome> {
    let script = ScenarioScript::load(&a.script).map_err(|e| format!("{}: {e}", a.script.display()))?;
    let mut agent = AgentConfig::new(&a.user);
    agent.start = a.start;
    agent.mode = a.mode;
    agent.slowdown = a.slowdown;
    agent.position_noise_m = a.position_noise;
    agent.seed = a.seed;
    agent.stream_base = a.script.parent().map(Path::to_path_buf).unwrap_or_default();
    if a.mode == ComputeMode::Local {
        agent.model = Some(Arc::new(load_model(a.platform.model.as_deref())?));
    }
    let control = profiles.get(&a.control_profile)?.clone();
    let data = profiles.get(&a.net_profile)?.clone();
    let run = match &a.connect {
        Some(addr) => {
            let transport = TcpTransport::connect(addr.as_str(), control, data, a.seed)?;
            run_live(script, &transport, agent, 1000, a.max_duration)?
        }
        None => {
            let platform = build_platform(&a.platform, ComputeTiming::Instant)?;
            let mut cfg = ScenarioConfig::new(agent);
            cfg.control_profile = control;
            cfg.data_profile = data;
            cfg.seed = a.seed;
            cfg.max_duration_ms = a.max_duration;
            simulate(script, &platform, &cfg)?
        }
    };
    let text = run.transcript.to_text();
    match &a.transcript {
        Some(p) => std::fs::write(p, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    eprintln!(
        "{} envelopes, ended at {:.1} ms, walked {:.2} m, {} results, activated [{}]",
        run.transcript.entries.len(),
        run.end_ms,
        run.agent.walked_m,
        run.agent.results.len(),
        run.agent.activated.join(", ")
    );
    match check_assertions(&run) {
        Ok(()) => Ok(Outcome::Ok),
        Err(ClientError::AssertionFailed(m)) => Ok(Outcome::Violated(m)),
        Err(e) => Err(e.into()),
    }
}

/// Owns whatever the benchmark talks to for the length of one run.
struct Harness {
    exchange: Box<dyn Exchange>,
    // keeps an in-process server alive
    _server: Option<edgeframe_core::server::ServerHandle>,
}

fn harness(a: &BenchArgs, profile: &NetProfile, model: &Arc<FaceModel>, seed: u64) -> AnyResult<Harness> {
    let control = NetProfile::control();
    match a.clock {
        Clock::Virtual => {
            if a.connect.is_some() {
                return Err("--connect needs --clock real".into());
            }
            let platform = Arc::new(bench_platform(model.clone())?);
            Ok(Harness {
                exchange: Box::new(VirtualExchange::new(platform, control, profile.clone(), seed)?),
                _server: None,
            })
        }
        Clock::Real => {
            let (addr, server) = match &a.connect {
                Some(addr) => (addr.clone(), None),
                None => {
                    let platform = Arc::new(bench_platform(model.clone())?);
                    let config = ServerConfig {
                        control_profile: control.clone(),
                        data_profile: profile.clone(),
                        seed: seed ^ 0x5eed,
                    };
                    let s = spawn_server("127.0.0.1:0", platform, config)?;
                    (s.local_addr().to_string(), Some(s))
                }
            };
            let transport = TcpTransport::connect(addr.as_str(), control, profile.clone(), seed)?;
            Ok(Harness {
                exchange: Box::new(TcpExchange::new(transport, Duration::from_secs(30))),
                _server: server,
            })
        }
    }
}

fn emit<T: CsvRow>(a: &BenchArgs, label: &str, rows: &[T]) -> AnyResult<f64> {
    if let Some(path) = &a.csv {
        write_csv(BufWriter::new(File::create(path)?), rows)?;
    }
    let values: Vec<f64> = rows.iter().map(CsvRow::value).collect();
    let s = summarize(&values)?;
    print_table(label, &s);
    Ok(s.mean)
}

const RULE: &str = "+------------------------+-------+----------------+----------------+----------------+----------------+----------------+";

fn print_table(label: &str, s: &bench::SummaryStats) {
    println!("{RULE}");
    println!("| run                    |     n |            min |           mean |            p50 |            p95 |            max |");
    println!("{RULE}");
    println!(
        "| {:<22} | {:>5} | {:>14.3} | {:>14.3} | {:>14.3} | {:>14.3} | {:>14.3} |",
        label, s.n, s.min, s.mean, s.p50, s.p95, s.max
    );
    println!("{RULE}");
}

fn cmd_bench(a: BenchArgs, profiles: &ProfileSet) -> AnyResult<Outcome> {
    let profile = profiles.get(&a.net_profile)?.clone();
    let model = Arc::new(load_model(a.model.as_deref())?);
    match a.kind {
        BenchKind::Latency => {
            let run = |p: &NetProfile, label: &str, csv: bool| -> AnyResult<f64> {
                let mut h = harness(&a, p, &model, a.seed)?;
                let rows = bench_latency(h.exchange.as_mut(), a.n.unwrap_or(100), a.size.unwrap_or(64))?;
                if csv {
                    emit(&a, label, &rows)
                } else {
                    let values: Vec<f64> = rows.iter().map(CsvRow::value).collect();
                    let s = summarize(&values)?;
                    print_table(label, &s);
                    Ok(s.mean)
                }
            };
            let mean = run(&profile, &format!("rtt_ms {}", profile.name), true)?;
            if a.check {
                let other = profiles.get(&a.against)?.clone();
                let other_mean = run(&other, &format!("rtt_ms {}", other.name), false)?;
                if !(mean < other_mean) {
                    return Ok(Outcome::Violated(format!(
                        "mean RTT {} ({mean:.3} ms) is not below {} ({other_mean:.3} ms)",
                        profile.name, other.name
                    )));
                }
            }
        }
        BenchKind::Throughput => {
            let total = a.size.unwrap_or(1_000_000);
            let chunk = DEFAULT_CHUNK_BYTES.min(total.max(1));
            let run = |p: &NetProfile| -> AnyResult<Vec<bench::ThroughputSample>> {
                (0..a.n.unwrap_or(1))
                    .map(|i| {
                        let mut h = harness(&a, p, &model, a.seed.wrapping_add(i as u64))?;
                        Ok(bench_throughput(h.exchange.as_mut(), total, chunk)?)
                    })
                    .collect()
            };
            let rows = run(&profile)?;
            let rate = emit(&a, &format!("rate_Bps {}", profile.name), &rows)?;
            if a.check {
                let other = profiles.get(&a.against)?.clone();
                let other_rows = run(&other)?;
                let values: Vec<f64> = other_rows.iter().map(CsvRow::value).collect();
                let s = summarize(&values)?;
                print_table(&format!("rate_Bps {}", other.name), &s);
                if !(rate > s.mean) {
                    return Ok(Outcome::Violated(format!(
                        "rate {} ({rate:.0} B/s) is not above {} ({:.0} B/s)",
                        profile.name, other.name, s.mean
                    )));
                }
            }
        }
        BenchKind::Recognition => {
            let gallery = generate_gallery(&FaceGenSpec::standard());
            let frames = bench_frames(&gallery, a.n.unwrap_or(20), BENCH_FRAME_WIDTH, BENCH_FRAME_HEIGHT, 8, 100);
            let run = |mode: ComputeMode| -> AnyResult<Vec<bench::RecogSample>> {
                match mode {
                    ComputeMode::Edge => {
                        let mut h = harness(&a, &profile, &model, a.seed)?;
                        Ok(bench_recognition(&frames, RecognitionSetup::Edge(h.exchange.as_mut()))?)
                    }
                    ComputeMode::Local => Ok(bench_recognition(
                        &frames,
                        RecognitionSetup::Local {
                            model: &model,
                            slowdown: a.slowdown,
                        },
                    )?),
                }
            };
            let rows = run(a.mode)?;
            let transport: Vec<f64> = rows.iter().map(|r| r.transport_ms).collect();
            let compute: Vec<f64> = rows.iter().map(|r| r.compute_ms).collect();
            print_table(&format!("transport_ms {}", a.mode), &summarize(&transport)?);
            print_table(&format!("compute_ms {}", a.mode), &summarize(&compute)?);
            let mean = emit(&a, &format!("total_ms {}", a.mode), &rows)?;
            if a.check {
                let other_mode = match a.mode {
                    ComputeMode::Edge => ComputeMode::Local,
                    ComputeMode::Local => ComputeMode::Edge,
                };
                let other: Vec<f64> = run(other_mode)?.iter().map(CsvRow::value).collect();
                let s = summarize(&other)?;
                print_table(&format!("total_ms {other_mode}"), &s);
                let (edge, local) = match a.mode {
                    ComputeMode::Edge => (mean, s.mean),
                    ComputeMode::Local => (s.mean, mean),
                };
                if !(edge < local) {
                    return Ok(Outcome::Violated(format!(
                        "mean total edge ({edge:.3} ms) is not below local ({local:.3} ms)"
                    )));
                }
            }
        }
    }
    Ok(Outcome::Ok)
}
