//! End-to-end acceptance suite. Runs every criterion, prints one line each,
//! and exits non-zero if any of them fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

use edgeframe_core::bench::{
    bench_latency, bench_platform, bench_recognition, bench_throughput, summarize, RecogSample, RecognitionSetup,
    VirtualExchange, BENCH_FRAME_HEIGHT, BENCH_FRAME_WIDTH, DEFAULT_CHUNK_BYTES,
};
use edgeframe_core::client::{
    check_assertions, parse_script, run_local_recognition, simulate, AgentConfig, ScenarioConfig, TranscriptDir,
};
use edgeframe_core::facerec::synth::{
    bench_frames, generate_gallery, noisy_probe, standard_model, two_face_fixture, FaceGenSpec,
};
use edgeframe_core::facerec::{recognize_frame, FaceModel, RecognitionResult};
use edgeframe_core::geom::Point3;
use edgeframe_core::navigation::{demo_map, NavGraph};
use edgeframe_core::netem::{Bandwidth, NetProfile};
use edgeframe_core::platform::{
    evaluate_rules, ComputeTiming, ContextRecord, Directive, Dispatcher, Platform, PlatformConfig, RuleSet, DEFAULT_DWELL_MS,
};
use edgeframe_core::wire::{decode_frame, encode_frame, Decoded, Envelope, FramePayload, MsgType, WirePayload};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// 1. shortest paths against exhaustive enumeration

fn random_connected_graph(rng: &mut Pcg64) -> NavGraph {
    let n = rng.random_range(2..=7u32);
    let mut g = NavGraph::new();
    for i in 0..n {
        g.add_node(i, Point3::new(i as f64, 0.0, 0.0)).unwrap();
    }
    // random spanning tree first, then extra edges
    for i in 1..n {
        let j = rng.random_range(0..i);
        g.add_edge(i, j, Some(rng.random_range(1..=9) as f64)).unwrap();
    }
    for a in 0..n {
        for b in a + 1..n {
            if g.edge_weight(a, b).is_none() && rng.random_bool(0.4) {
                g.add_edge(a, b, Some(rng.random_range(1..=9) as f64)).unwrap();
            }
        }
    }
    g
}

fn brute_force_cost(g: &NavGraph, src: u32, dst: u32) -> Option<f64> {
    fn walk(g: &NavGraph, at: u32, dst: u32, seen: &mut Vec<u32>, cost: f64, best: &mut Option<f64>) {
        if at == dst {
            *best = Some(best.map_or(cost, |b: f64| b.min(cost)));
            return;
        }
        for &(next, w) in g.neighbors(at) {
            if !seen.contains(&next) {
                seen.push(next);
                walk(g, next, dst, seen, cost + w, best);
                seen.pop();
            }
        }
    }
    let mut best = None;
    walk(g, src, dst, &mut vec![src], 0.0, &mut best);
    best
}

fn dijkstra_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = Pcg64::seed_from_u64(2024);
    let mut pairs = 0;
    for graph in 0..50 {
        let g = random_connected_graph(&mut rng);
        let n = g.node_count() as u32;
        for s in 0..n {
            for d in 0..n {
                let expected = brute_force_cost(&g, s, d).ok_or(format!("graph {graph}: {s}->{d} unreachable"))?;
                let route = g.shortest_path(s, d).map_err(|e| format!("graph {graph}: {e}"))?;
                ensure(route.total_cost == expected, || {
                    format!("graph {graph} {s}->{d}: dijkstra {} vs brute force {expected}", route.total_cost)
                })?;
                let walked: f64 = route.waypoints.windows(2).map(|w| g.edge_weight(w[0], w[1]).unwrap()).sum();
                ensure(walked == expected, || format!("graph {graph} {s}->{d}: waypoints cost {walked}"))?;
                pairs += 1;
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 5.0, || format!("took {secs:.2} s"))?;
    Ok(format!("{pairs} pairs on 50 graphs match, {secs:.3} s"))
}

// 2. covariance trick against the full image-space covariance

fn eigenface_oracle() -> Outcome {
    let sizes = [(16, 16), (20, 24), (24, 24), (32, 32), (28, 20)];
    let mut rng = Pcg64::seed_from_u64(77);
    let mut worst_value = 0.0f64;
    let mut worst_vector = 0.0f64;
    let mut worst_ortho = 0.0f64;
    let mut worst_residual = 0.0f64;
    for case in 0..20 {
        let (w, h) = sizes[case % sizes.len()];
        let ids = rng.random_range(2..=5);
        let per = rng.random_range(2..=4);
        let gallery = generate_gallery(&FaceGenSpec::new(ids, per, w, h, 1000 + case as u64));
        let n = gallery.len();
        let d = w * h;
        let model = FaceModel::train(&gallery, n - 1).map_err(|e| format!("case {case}: {e}"))?;
        ensure(model.k() == n - 1, || format!("case {case}: kept {} of {} components", model.k(), n - 1))?;

        let faces: Vec<Vec<f64>> = gallery.iter().map(|g| g.image.pixels.iter().map(|&p| p as f64 / 255.0).collect()).collect();
        let mean: Vec<f64> = (0..d).map(|i| faces.iter().map(|f| f[i]).sum::<f64>() / n as f64).collect();
        let a = DMatrix::from_fn(d, n, |i, j| faces[j][i] - mean[i]);
        let cov = &a * a.transpose();
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));

        for (i, &o) in order.iter().take(model.k()).enumerate() {
            let expected = eig.eigenvalues[o];
            let rel = (model.eigenvalues[i] - expected).abs() / expected.abs();
            worst_value = worst_value.max(rel);
            ensure(rel <= 1e-6, || format!("case {case}: eigenvalue {i} {} vs {expected}", model.eigenvalues[i]))?;
            let v = eig.eigenvectors.column(o);
            let u = &model.eigenfaces[i];
            let sign = if u.iter().zip(v.iter()).map(|(x, y)| x * y).sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
            let diff = u.iter().zip(v.iter()).map(|(x, y)| (x - sign * y).abs()).fold(0.0, f64::max);
            worst_vector = worst_vector.max(diff);
            ensure(diff <= 1e-6, || format!("case {case}: eigenface {i} differs by {diff:e}"))?;
        }

        for i in 0..model.k() {
            for j in 0..model.k() {
                let dot: f64 = model.eigenfaces[i].iter().zip(&model.eigenfaces[j]).map(|(x, y)| x * y).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst_ortho = worst_ortho.max((dot - target).abs());
            }
        }
        ensure(worst_ortho <= 1e-6, || format!("case {case}: orthonormality residual {worst_ortho:e}"))?;

        let mut previous = f64::INFINITY;
        for k in 1..n {
            let m = FaceModel::train(&gallery, k).map_err(|e| e.to_string())?;
            let mut total = 0.0;
            let mut largest = 0.0f64;
            for g in &gallery {
                let r = m.dffs(&g.image).map_err(|e| e.to_string())?;
                total += r * r;
                largest = largest.max(r);
            }
            ensure(total <= previous * (1.0 + 1e-12) + 1e-18, || {
                format!("case {case}: reconstruction error rose from {previous:e} to {total:e} at k={k}")
            })?;
            previous = total;
            if k == n - 1 {
                worst_residual = worst_residual.max(largest);
                ensure(largest <= 1e-6, || format!("case {case}: residual {largest:e} at k=N-1"))?;
            }
        }
    }
    Ok(format!(
        "20 galleries: eigenvalue rel err {worst_value:.1e}, eigenface err {worst_vector:.1e}, \
         orthonormality {worst_ortho:.1e}, residual at k=N-1 {worst_residual:.1e}"
    ))
}

// 3. recognition quality

fn recognition_quality(model: &FaceModel) -> Outcome {
    let gallery = generate_gallery(&FaceGenSpec::standard());
    let mut rng = Pcg64::seed_from_u64(8);
    let (mut hits, mut total) = (0, 0);
    for g in &gallery {
        for _ in 0..4 {
            let probe = noisy_probe(&g.image, 8.0, &mut rng);
            let c = model.classify(&model.project(&probe).map_err(|e| e.to_string())?);
            total += 1;
            if c.label.as_deref() == Some(g.label.as_str()) {
                hits += 1;
            }
        }
    }
    let accuracy = hits as f64 / total as f64;
    ensure(accuracy >= 0.9, || format!("rank-1 {hits}/{total}"))?;

    let second = gallery.iter().find(|g| g.label != gallery[0].label).unwrap();
    let fixture = two_face_fixture(&gallery[0], second, model.width / 4);
    let frame = FramePayload::new(
        1,
        0,
        fixture.frame.width as u16,
        fixture.frame.height as u16,
        fixture.frame.pixels.clone(),
    )
    .map_err(|e| e.to_string())?;
    let result = recognize_frame(&frame, model).map_err(|e| e.to_string())?;
    ensure(result.boxes.len() == 2, || format!("fixture gave {} boxes", result.boxes.len()))?;
    for (label, x, y) in &fixture.faces {
        let hit = result.boxes.iter().any(|b| {
            b.label.as_deref() == Some(label.as_str()) && (b.x as usize).abs_diff(*x) < model.width / 2 && (b.y as usize).abs_diff(*y) < model.height / 2
        });
        ensure(hit, || format!("no box labeled {label} near ({x}, {y}): {:?}", result.boxes))?;
    }
    Ok(format!("rank-1 {hits}/{total} ({:.1}%), fixture boxes {:?}", accuracy * 100.0, result.labels()))
}

// 4-6. offloaded recognition against on-glass recognition

struct RecognitionRuns {
    edge: Vec<Vec<RecogSample>>,
    local: Vec<Vec<RecogSample>>,
    edge_results: Vec<RecognitionResult>,
    local_results: Vec<RecognitionResult>,
}

const SLOWDOWN: f64 = 10.0;
const SEEDS: u64 = 10;

fn recognition_runs(model: &Arc<FaceModel>, frames: &[FramePayload]) -> Result<RecognitionRuns, String> {
    let mut edge = Vec::new();
    let mut local = Vec::new();
    let mut edge_results = Vec::new();
    for seed in 0..SEEDS {
        let mut ex = exchange(NetProfile::edge_stream(), seed, model)?;
        if seed == 0 {
            // keep the results of one run for the byte comparison
            let mut session = edgeframe_core::bench::open_facerec_session(&mut ex).map_err(|e| e.to_string())?;
            let mut samples = Vec::new();
            for f in frames {
                let (r, total) = session.recognize(&mut ex, f).map_err(|e| e.to_string())?;
                samples.push(RecogSample {
                    frame_seq: f.frame_seq,
                    mode: edgeframe_core::client::ComputeMode::Edge,
                    compute_ms: r.processing_time_ms,
                    transport_ms: (total - r.processing_time_ms).max(0.0),
                    total_ms: total,
                });
                edge_results.push(r);
            }
            edge.push(samples);
        } else {
            edge.push(bench_recognition(frames, RecognitionSetup::Edge(&mut ex)).map_err(|e| e.to_string())?);
        }
    }
    let mut local_results = Vec::new();
    for seed in 0..SEEDS {
        if seed == 0 {
            let mut samples = Vec::new();
            for f in frames {
                let (r, simulated) = run_local_recognition(f, model, SLOWDOWN).map_err(|e| e.to_string())?;
                samples.push(RecogSample {
                    frame_seq: f.frame_seq,
                    mode: edgeframe_core::client::ComputeMode::Local,
                    compute_ms: simulated,
                    transport_ms: 0.0,
                    total_ms: simulated,
                });
                local_results.push(r);
            }
            local.push(samples);
        } else {
            local.push(
                bench_recognition(frames, RecognitionSetup::Local { model, slowdown: SLOWDOWN }).map_err(|e| e.to_string())?,
            );
        }
    }
    Ok(RecognitionRuns {
        edge,
        local,
        edge_results,
        local_results,
    })
}

fn offload_equivalence(runs: &RecognitionRuns) -> Outcome {
    ensure(runs.edge_results.len() == 100 && runs.local_results.len() == 100, || "expected 100 results per mode".into())?;
    let mut faces = 0;
    for (i, (e, l)) in runs.edge_results.iter().zip(&runs.local_results).enumerate() {
        ensure(e.content_bytes() == l.content_bytes(), || format!("frame {i}: edge {:?} vs local {:?}", e.boxes, l.boxes))?;
        faces += e.boxes.len();
    }
    Ok(format!("100 frames identical, {faces} boxes in total"))
}

fn streaming_latency(runs: &RecognitionRuns) -> Outcome {
    let transport: Vec<f64> = runs.edge[0].iter().map(|s| s.transport_ms).collect();
    let inside = transport.iter().filter(|&&t| (300.0..=400.0).contains(&t)).count();
    let s = summarize(&transport).map_err(|e| e.to_string())?;
    ensure(inside * 100 >= 95 * transport.len(), || {
        format!("{inside}/{} in [300, 400] ms (min {:.1}, max {:.1})", transport.len(), s.min, s.max)
    })?;
    Ok(format!(
        "{inside}/{} frames in [300, 400] ms, mean {:.1} ms, range {:.1}-{:.1} ms",
        transport.len(),
        s.mean,
        s.min,
        s.max
    ))
}

fn edge_beats_local(runs: &RecognitionRuns) -> Outcome {
    let mean = |v: &[RecogSample]| v.iter().map(|s| s.total_ms).sum::<f64>() / v.len() as f64;
    let mut wins = 0;
    let mut detail = Vec::new();
    for (e, l) in runs.edge.iter().zip(&runs.local) {
        let (me, ml) = (mean(e), mean(l));
        if me < ml {
            wins += 1;
        }
        detail.push(format!("{me:.0}/{ml:.0}"));
    }
    ensure(wins == SEEDS, || format!("edge faster in {wins}/{SEEDS} runs (edge/local ms: {})", detail.join(" ")))?;
    Ok(format!("edge faster in {wins}/{SEEDS} runs, edge/local mean ms {}", detail.join(" ")))
}

// 7. edge against cloud, and the closed-form round trip

fn exchange(profile: NetProfile, seed: u64, model: &Arc<FaceModel>) -> Result<VirtualExchange, String> {
    let p = Arc::new(bench_platform(model.clone()).map_err(|e| e.to_string())?);
    VirtualExchange::new(p, NetProfile::control(), profile, seed).map_err(|e| e.to_string())
}

fn one_way_oracle(delay_ms: f64, rate_bps: f64, payload: usize) -> f64 {
    // 18 header bytes and a 4 byte checksum around every payload
    delay_ms + (payload + 22) as f64 / rate_bps * 1000.0
}

fn edge_vs_cloud(model: &Arc<FaceModel>) -> Outcome {
    let mut rtt_wins = 0;
    let mut rate_wins = 0;
    let mut last = (0.0, 0.0, 0.0, 0.0);
    for seed in 0..SEEDS {
        let mut rtt = Vec::new();
        let mut rate = Vec::new();
        for profile in [NetProfile::edge(), NetProfile::cloud()] {
            let mut ex = exchange(profile.clone(), seed, model)?;
            let samples = bench_latency(&mut ex, 50, 64).map_err(|e| e.to_string())?;
            let values: Vec<f64> = samples.iter().map(|s| s.rtt_ms).collect();
            rtt.push(summarize(&values).map_err(|e| e.to_string())?.mean);
            let mut ex = exchange(profile, seed, model)?;
            rate.push(bench_throughput(&mut ex, 2 << 20, DEFAULT_CHUNK_BYTES).map_err(|e| e.to_string())?.rate_bps);
        }
        rtt_wins += usize::from(rtt[0] < rtt[1]);
        rate_wins += usize::from(rate[0] > rate[1]);
        last = (rtt[0], rtt[1], rate[0], rate[1]);
    }
    ensure(rtt_wins == SEEDS as usize && rate_wins == SEEDS as usize, || {
        format!("rtt ordering held {rtt_wins}/{SEEDS}, rate ordering {rate_wins}/{SEEDS}")
    })?;

    let mut checked = 0;
    let mut worst = 0.0f64;
    for profile in [NetProfile::edge(), NetProfile::cloud()] {
        let still = NetProfile {
            jitter_ms: 0.0,
            ..profile
        };
        let Bandwidth::BytesPerSec(rate) = still.bandwidth else {
            return Err("expected a finite bandwidth".into());
        };
        for payload in [4, 64, 1500, 60_000] {
            let mut ex = exchange(still.clone(), 1, model)?;
            let expected = 2.0 * one_way_oracle(still.one_way_delay_ms, rate, payload);
            for s in bench_latency(&mut ex, 20, payload).map_err(|e| e.to_string())? {
                let err = (s.rtt_ms - expected).abs();
                worst = worst.max(err);
                ensure(err <= 1.0, || format!("{} payload {payload}: rtt {} vs {expected}", still.name, s.rtt_ms))?;
                checked += 1;
            }
        }
    }
    Ok(format!(
        "orderings held {SEEDS}/{SEEDS} (last seed rtt {:.1} vs {:.1} ms, rate {:.0} vs {:.0} B/s); \
         {checked} jitter-free rtts within {worst:.1e} ms of closed form",
        last.0, last.1, last.2, last.3
    ))
}

// 8. wire format

fn random_envelope(rng: &mut Pcg64) -> Envelope {
    const TYPES: [MsgType; 20] = [
        MsgType::Hello,
        MsgType::HelloAck,
        MsgType::ContextUpdate,
        MsgType::ServiceActivate,
        MsgType::ServiceDeactivate,
        MsgType::Heartbeat,
        MsgType::Error,
        MsgType::ActuatorCmd,
        MsgType::NavSelectDest,
        MsgType::NavInstruction,
        MsgType::NavArrived,
        MsgType::NavDestInfo,
        MsgType::Frame,
        MsgType::RecogResult,
        MsgType::EchoReq,
        MsgType::EchoResp,
        MsgType::UploadBegin,
        MsgType::UploadChunk,
        MsgType::UploadEnd,
        MsgType::UploadAck,
    ];
    let len = match rng.random_range(0..10) {
        0 => 0,
        1 => rng.random_range(4096..70_000),
        _ => rng.random_range(1..512),
    };
    let mut payload = vec![0u8; len];
    rng.fill(&mut payload[..]);
    Envelope::new(TYPES[rng.random_range(0..TYPES.len())], rng.random(), rng.random(), payload)
}

fn protocol_integrity() -> Outcome {
    let mut rng = Pcg64::seed_from_u64(0xF00D);
    for i in 0..10_000 {
        let env = random_envelope(&mut rng);
        let bytes = encode_frame(&env).map_err(|e| e.to_string())?;
        ensure(bytes.len() == env.wire_len(), || format!("envelope {i}: length {}", bytes.len()))?;
        match decode_frame(&bytes) {
            Ok(Decoded::Frame(back, rest)) => {
                ensure(back == env && rest.is_empty(), || format!("envelope {i} changed in transit"))?
            }
            other => return Err(format!("envelope {i}: {other:?}")),
        }
    }

    let frame = FramePayload::new(7, 1234, 12, 8, (0..96).map(|i| (i * 37 % 256) as u8).collect()).map_err(|e| e.to_string())?;
    let sample = encode_frame(&Envelope::new(MsgType::Frame, 3, 9, frame.to_bytes())).map_err(|e| e.to_string())?;
    let mut corruptions = 0;
    for pos in 0..sample.len() {
        for value in 0..=255u8 {
            if value == sample[pos] {
                continue;
            }
            let mut bad = sample.clone();
            bad[pos] = value;
            if let Ok(Decoded::Frame(env, _)) = decode_frame(&bad) {
                return Err(format!("byte {pos} set to {value:#04x} decoded as {} seq {}", env.msg_type, env.seq));
            }
            corruptions += 1;
        }
    }
    Ok(format!("10000 envelopes round-trip; {corruptions} single-byte corruptions of a {}-byte frame all rejected", sample.len()))
}

// 9. gate scenario

// scenario platforms report zero compute time so transcripts stay reproducible
fn demo_platform(model: &Arc<FaceModel>) -> Result<Platform, String> {
    Platform::new(PlatformConfig {
        rules: RuleSet::defaults(),
        graph: Some(Arc::new(demo_map())),
        model: Some(model.clone()),
        timing: ComputeTiming::Instant,
    })
    .map_err(|e| e.to_string())
}

fn gate_scenario(model: &Arc<FaceModel>) -> Outcome {
    let started = Instant::now();
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/gate_nav.txt")).map_err(|e| e.to_string())?;
    let mut transcripts = Vec::new();
    let mut walked = 0.0;
    for _ in 0..2 {
        let script = parse_script(&text).map_err(|e| e.to_string())?;
        let mut agent = AgentConfig::new("alice");
        agent.model = Some(model.clone());
        let run = simulate(script, &demo_platform(model)?, &ScenarioConfig::new(agent)).map_err(|e| e.to_string())?;
        check_assertions(&run).map_err(|e| e.to_string())?;
        ensure(run.agent.activated.iter().any(|s| s == "navigation"), || "navigation never activated".into())?;
        ensure(run.transcript.received(MsgType::NavDestInfo).count() == 1, || "no NAV_DEST_INFO".into())?;
        walked = run.agent.walked_m;
        transcripts.push(run.transcript.to_text());
    }
    ensure(transcripts[0] == transcripts[1], || "transcripts differ between runs".into())?;
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 10.0, || format!("took {secs:.2} s"))?;
    Ok(format!(
        "navigation activated, walked {walked:.1} m, NAV_DEST_INFO received, {} transcript lines identical, {secs:.2} s",
        transcripts[0].lines().count()
    ))
}

// 10. dispatch under flapping context

fn zone_ctx(zone: Option<&str>, t: u64) -> ContextRecord {
    let c = ContextRecord::new("u", t, Point3::default()).with_lux(20.0);
    match zone {
        Some(z) => c.with_zone(z),
        None => c,
    }
}

fn flapping_dispatch(model: &Arc<FaceModel>) -> Outcome {
    let rules = RuleSet::defaults();
    let zones = [None, Some("gate"), Some("reception"), Some("office")];
    let mut rng = Pcg64::seed_from_u64(10);
    let mut switches = 0;
    for run in 0..200 {
        let mut d = Dispatcher::default();
        let mut active: Option<String> = None;
        let mut t = 0;
        for _ in 0..100 {
            t += rng.random_range(1..1200);
            let ctx = zone_ctx(zones[rng.random_range(0..zones.len())], t);
            for dir in d.update(&evaluate_rules(&ctx, &rules), &rules, t) {
                switches += 1;
                match dir {
                    Directive::Activate(id) => {
                        ensure(active.is_none(), || format!("run {run}: {id} activated while {active:?} active"))?;
                        active = Some(id);
                    }
                    Directive::Deactivate(id) => {
                        ensure(active.as_deref() == Some(id.as_str()), || format!("run {run}: stray deactivate {id}"))?;
                        active = None;
                    }
                }
            }
        }
    }

    // the same property end to end, through scripted glasses
    for seed in 0..10u64 {
        let mut script = String::new();
        let mut t = 0;
        for _ in 0..30 {
            let z = ["gate", "reception", "office", "none"][rng.random_range(0..4)];
            script.push_str(&format!("t={t} zone={z} lux=20\n"));
            t += rng.random_range(100..1500);
        }
        let mut agent = AgentConfig::new("alice");
        agent.model = Some(model.clone());
        let mut cfg = ScenarioConfig::new(agent);
        cfg.seed = seed;
        let platform = demo_platform(model)?;
        let run = simulate(parse_script(&script).map_err(|e| e.to_string())?, &platform, &cfg).map_err(|e| e.to_string())?;
        let mut active: BTreeMap<u32, String> = BTreeMap::new();
        for e in run.transcript.entries.iter().filter(|e| e.dir == TranscriptDir::Received) {
            match e.msg_type {
                MsgType::ServiceActivate => {
                    ensure(!active.contains_key(&e.session_id), || format!("seed {seed}: second activation at {} ms", e.time_ms))?;
                    active.insert(e.session_id, String::new());
                }
                MsgType::ServiceDeactivate => {
                    ensure(active.remove(&e.session_id).is_some(), || format!("seed {seed}: stray deactivation"))?;
                }
                _ => {}
            }
        }
    }

    // flaps shorter than the dwell: no switch at all
    for seed in 0..10u64 {
        let mut script = String::new();
        let mut t = 0;
        let cycle = ["gate", "reception", "office", "none"];
        for i in 0..40 {
            script.push_str(&format!("t={t} zone={} lux=20\n", cycle[(i + seed as usize) % cycle.len()]));
            t += rng.random_range(100..DEFAULT_DWELL_MS - 100);
        }
        script.push_str(&format!("t={t} zone=none\n"));
        let mut agent = AgentConfig::new("alice");
        agent.model = Some(model.clone());
        let mut cfg = ScenarioConfig::new(agent);
        cfg.seed = seed;
        let platform = demo_platform(model)?;
        let run = simulate(parse_script(&script).map_err(|e| e.to_string())?, &platform, &cfg).map_err(|e| e.to_string())?;
        let notices = run
            .transcript
            .entries
            .iter()
            .filter(|e| matches!(e.msg_type, MsgType::ServiceActivate | MsgType::ServiceDeactivate))
            .count();
        let session_switches: u64 = platform
            .session_ids()
            .into_iter()
            .map(|id| platform.session(id).unwrap().lock().unwrap().switches)
            .sum();
        ensure(notices == 0 && session_switches == 0, || {
            format!("seed {seed}: {notices} service notices, {session_switches} switches")
        })?;
    }
    Ok(format!(
        "200 random dispatch runs ({switches} switches) and 10 scripted runs never hold two services; \
         10 sub-dwell flap scripts switch 0 times"
    ))
}

fn main() -> ExitCode {
    let started = Instant::now();
    let model = Arc::new(standard_model());
    let gallery = generate_gallery(&FaceGenSpec::standard());
    let frames = bench_frames(&gallery, 100, BENCH_FRAME_WIDTH, BENCH_FRAME_HEIGHT, model.width / 4, 100);

    let mut failed = 0;
    let mut report = |n: u32, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {detail} [{secs:.1} s]");
            }
        }
    };

    report(1, "dijkstra oracle", &mut dijkstra_oracle);
    report(2, "eigenface oracle", &mut eigenface_oracle);
    report(3, "recognition quality", &mut || recognition_quality(&model));
    // criteria 4 to 6 share one set of runs; the first of them pays for it
    let runs: OnceLock<Result<RecognitionRuns, String>> = OnceLock::new();
    let with_runs = |f: fn(&RecognitionRuns) -> Outcome| {
        let (runs, model, frames) = (&runs, &model, &frames);
        move || match runs.get_or_init(|| recognition_runs(model, frames)) {
            Ok(r) => f(r),
            Err(e) => Err(format!("recognition runs failed: {e}")),
        }
    };
    report(4, "offload equivalence", &mut with_runs(offload_equivalence));
    report(5, "streaming latency", &mut with_runs(streaming_latency));
    report(6, "edge beats local", &mut with_runs(edge_beats_local));
    report(7, "edge vs cloud", &mut || edge_vs_cloud(&model));
    report(8, "protocol integrity", &mut protocol_integrity);
    report(9, "gate scenario", &mut || gate_scenario(&model));
    report(10, "flapping dispatch", &mut || flapping_dispatch(&model));

    println!("{} criteria failed, {:.1} s total", failed, started.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
