//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any fail.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use info_engine::bench::{run_bench, BenchConfig, Scenario};
use info_engine::buffer::Buffer;
use info_engine::egress::{rebuild_node, subscribe, PublishedNode, SubscribeMode};
use info_engine::ingress::{
    decode_envelope, encode_envelope, run_scheduler, CodecId, Envelope, IngestConfig, InlineMeta, Meta,
    MetadataMode, SCHEMA_VERSION,
};
use info_engine::query_model::{
    estimate_state_space, estimate_volume, volume_summary, ConnectionType, DeviceDescriptor, DeviceQuery, Horizon,
    NodeRef, QueryModelDoc, QuerySpec,
};
use info_engine::registry::Registry;
use info_engine::serving::{assemble_trajectory, TrajectoryQuery};
use info_engine::source::{
    Adapters, AddressSpaceNode, DeviceFile, Generator, SignalConfig, SimDevice, SimDeviceConfig, SourceAdapter,
};
use info_engine::transform::{apply_operators, resample_series, AggFn, Method, OperatorSpec};
use info_engine::{DataType, Value};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn descriptor(name: &str) -> DeviceDescriptor {
    DeviceDescriptor {
        name: name.into(),
        location: "lab".into(),
        connection_uri: format!("sim://{name}"),
        address_space_ref: format!("{name}.json"),
    }
}

struct Device {
    name: String,
    tree: AddressSpaceNode,
    sim: Arc<SimDevice>,
}

/// A device whose object `name` holds one float64 variable per generator.
fn device(name: &str, seed: u64, generators: &[Generator]) -> Device {
    let mut tree = AddressSpaceNode::object(NodeRef::node_id(2, name), name);
    let mut signals = Vec::new();
    for (i, g) in generators.iter().enumerate() {
        let r = NodeRef::node_id(2, format!("{name}.v{i}"));
        tree = tree.with_child(AddressSpaceNode::variable(r.clone(), format!("v{i}"), DataType::Float64).with_unit("u"));
        signals.push(SignalConfig {
            node_ref: r,
            generator: g.clone(),
        });
    }
    let sim = SimDevice::new(
        SimDeviceConfig {
            name: name.into(),
            seed,
            signals,
        },
        tree.clone(),
    )
    .expect("valid device");
    Device {
        name: name.into(),
        tree,
        sim: Arc::new(sim),
    }
}

fn register(reg: &Registry, d: &Device, queries: Vec<QuerySpec>) -> DeviceQuery {
    let dq = DeviceQuery {
        device: descriptor(&d.name),
        connection_type: ConnectionType::ClientServer,
        queries,
    };
    reg.register_device(&dq, &d.tree, 0).expect("registers");
    dq
}

fn adapters(devices: &[&Device]) -> Adapters {
    devices
        .iter()
        .map(|d| d.sim.clone() as Arc<dyn SourceAdapter>)
        .collect()
}

fn press() -> (AddressSpaceNode, Arc<SimDevice>) {
    let file = DeviceFile::load(&fixture("press.json")).expect("fixture loads");
    let tree = file.address_space.clone();
    (tree, Arc::new(SimDevice::from_file(file, "press-1").expect("fixture is valid")))
}

fn press_query() -> DeviceQuery {
    DeviceQuery {
        device: descriptor("press-1"),
        connection_type: ConnectionType::ClientServer,
        queries: vec![QuerySpec::new(NodeRef::node_id(2, "Press"), 100, 3_600_000).with_depth(1)],
    }
}

fn read_all(buffer: &Buffer, topic: &str) -> Vec<Envelope> {
    let mut sub = subscribe(buffer, topic, SubscribeMode::FromOffset(0)).expect("topic exists");
    let mut out = Vec::new();
    loop {
        let batch = sub.next(buffer, 256).expect("decodes");
        if batch.envelopes.is_empty() {
            return out;
        }
        out.extend(batch.envelopes);
    }
}

fn c1_volume() -> Check {
    let start = Instant::now();
    let expected = [
        (Horizon::Day, "84.38 MB"),
        (Horizon::Month, "2.47 GB"),
        (Horizon::Year, "30.08 GB"),
    ];
    for (h, want) in expected {
        let got = estimate_volume(1024, 1.0, h).human;
        ensure!(got == want, "{}: got {got}, want {want}", h.label());
    }
    let summary = volume_summary(1024, 1.0);
    ensure!(
        summary == "84.38 MB/day, 2.47 GB/month, 30.08 GB/year",
        "summary {summary}"
    );
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!("{summary} in {elapsed:?}"))
}

fn c2_decoupling() -> Check {
    let start = Instant::now();
    let k = 100;
    for n in [1, 2, 4] {
        let mut b_reads = Vec::new();
        for m in [1, 4, 8] {
            let run = |scenario| {
                run_bench(&BenchConfig {
                    n_sources: n,
                    m_sinks: m,
                    ticks: k,
                    scenario,
                })
                .map_err(|e| e.to_string())
            };
            let a = run(Scenario::A)?;
            ensure!(
                a.per_source_reads == u64::from(m * k),
                "A n={n} m={m}: {} reads",
                a.per_source_reads
            );
            let b = run(Scenario::B)?;
            ensure!(b.per_source_reads == u64::from(k), "B n={n} m={m}: {} reads", b.per_source_reads);
            b_reads.push(b.per_source_reads);
        }
        ensure!(b_reads.windows(2).all(|w| w[0] == w[1]), "B varies with m: {b_reads:?}");
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!("A = m*k, B = k over 9 grid points in {elapsed:?}"))
}

fn c3_historic_offload() -> Check {
    let (tree, sim) = press();
    let reg = Registry::in_memory();
    reg.register_device(&press_query(), &tree, 0).map_err(|e| e.to_string())?;
    let buffer = Buffer::in_memory();
    let ads: Adapters = [sim.clone() as Arc<dyn SourceAdapter>].into_iter().collect();
    let report = run_scheduler(&reg, &buffer, &ads, IngestConfig::default(), 0, 10_000);
    ensure!(report.errors.is_empty(), "ingest errors: {:?}", report.errors);
    let before = sim.read_count();
    let topics = buffer.topic_names();
    let mut delivered = 0;
    for _sink in 0..8 {
        for t in &topics {
            let got = read_all(&buffer, t);
            ensure!(got.len() as u64 == report.appended[t], "sink saw {} of {t}", got.len());
            delivered += got.len();
        }
    }
    let after = sim.read_count();
    ensure!(after == before, "read_count moved from {before} to {after}");
    Ok(format!("{delivered} records replayed, read_count stays {before}"))
}

fn files_under(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).expect("readable dir") {
            let p = entry.expect("dir entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).expect("under dir").to_path_buf();
                out.insert(rel, std::fs::read(&p).expect("readable file"));
            }
        }
    }
    out
}

fn c4_replay_determinism() -> Check {
    let run = |dir: &Path| -> Result<Buffer, String> {
        let (tree, sim) = press();
        let walk = device("walk", 42, &[Generator::RandomWalk { step_std_dev: 0.5 }]);
        let reg = Registry::in_memory();
        reg.register_device(&press_query(), &tree, 0).map_err(|e| e.to_string())?;
        register(&reg, &walk, vec![QuerySpec::new(NodeRef::node_id(2, "walk.v0"), 250, 3_600_000)]);
        let buffer = Buffer::open_with_segment_bytes(dir, 8 * 1024).map_err(|e| e.to_string())?;
        let ads: Adapters = [sim as Arc<dyn SourceAdapter>, walk.sim.clone()].into_iter().collect();
        let r = run_scheduler(&reg, &buffer, &ads, IngestConfig::default(), 0, 20_000);
        ensure!(r.errors.is_empty(), "ingest errors: {:?}", r.errors);
        Ok(buffer)
    };
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (b1, b2) = (run(d1.path())?, run(d2.path())?);
    let (f1, f2) = (files_under(d1.path()), files_under(d2.path()));
    ensure!(f1.keys().eq(f2.keys()), "file sets differ");
    let segments = f1.keys().filter(|p| p.extension().is_some_and(|e| e == "log")).count();
    ensure!(segments > 3, "only {segments} segments written");
    for (p, bytes) in &f1 {
        ensure!(&f2[p] == bytes, "{} differs", p.display());
    }
    let mut records = 0;
    for t in b1.topic_names() {
        let (s1, s2) = (read_all(&b1, &t), read_all(&b2, &t));
        let again = read_all(&b1, &t);
        ensure!(s1 == s2 && s1 == again, "envelope sequences of {t} differ");
        records += s1.len();
    }
    Ok(format!("{} files over {segments} segments identical, {records} envelopes", f1.len()))
}

fn c5_retention() -> Check {
    let check = |buffer: Buffer| -> Result<usize, String> {
        buffer.ensure_topic("r", 10_000).map_err(|e| e.to_string())?;
        let mut all = Vec::new();
        for i in 0..=20 {
            let ts = i * 1000;
            let payload = format!("record {i}").into_bytes();
            let off = buffer.append("r", &payload, ts).map_err(|e| e.to_string())?;
            all.push((off, ts, payload));
        }
        buffer.evict("r", 20_000).map_err(|e| e.to_string())?;
        let oracle: Vec<_> = all.into_iter().filter(|(_, ts, _)| *ts >= 10_000).collect();
        let got = buffer.read("r", 0, usize::MAX).map_err(|e| e.to_string())?;
        ensure!(got.truncated, "reading offset 0 was not flagged as evicted");
        let got: Vec<_> = got
            .records
            .into_iter()
            .map(|r| (r.offset, r.ingest_ts, r.payload.to_vec()))
            .collect();
        ensure!(got == oracle, "survivors {:?}", got.iter().map(|r| r.0).collect::<Vec<_>>());
        Ok(got.len())
    };
    let mem = check(Buffer::in_memory())?;
    let dir = tempfile::tempdir().unwrap();
    let disk = check(Buffer::open_with_segment_bytes(dir.path(), 64).map_err(|e| e.to_string())?)?;
    let reopened = Buffer::open(dir.path()).map_err(|e| e.to_string())?;
    let info = reopened.topic_info("r").map_err(|e| e.to_string())?;
    ensure!(info.earliest_offset == 10, "reopened earliest offset {}", info.earliest_offset);
    Ok(format!("{mem} in memory and {disk} on disk survive, offsets 10..=20"))
}

fn c6_harmonization() -> Check {
    let start = Instant::now();
    let sine = device(
        "osc",
        1,
        &[Generator::Sine {
            amplitude: 1.0,
            freq_hz: 0.5,
            offset: 0.0,
        }],
    );
    let ramp = device("lin", 2, &[Generator::Ramp { slope_per_sec: 0.1 }]);
    let reg = Registry::in_memory();
    register(&reg, &sine, vec![QuerySpec::new(NodeRef::node_id(2, "osc.v0"), 50, 60_000).with_destination("sine")]);
    register(&reg, &ramp, vec![QuerySpec::new(NodeRef::node_id(2, "lin.v0"), 70, 60_000).with_destination("ramp")]);
    let buffer = Buffer::in_memory();
    let r = run_scheduler(&reg, &buffer, &adapters(&[&sine, &ramp]), IngestConfig::default(), 0, 10_000);
    ensure!(r.errors.is_empty(), "ingest errors: {:?}", r.errors);
    let q = TrajectoryQuery {
        topics: vec!["sine".into(), "ramp".into()],
        t0: 0,
        t1: 10_000,
        grid_millis: 100,
        method: Method::Linear,
    };
    let traj = assemble_trajectory(&q, &buffer).map_err(|e| e.to_string())?;
    ensure!(traj.len() >= 99, "only {} grid points", traj.len());
    let mut worst = 0.0f64;
    for v in &traj {
        ensure!(v.dimension() == 2, "dimension {} at {}", v.dimension(), v.timestamp);
        let t = v.timestamp as f64 / 1000.0;
        for (topic, got) in &v.components {
            let want = match topic.as_str() {
                "sine" => (2.0 * PI * 0.5 * t).sin(),
                "ramp" => 0.1 * t,
                other => return Err(format!("unexpected component {other}")),
            };
            worst = worst.max((got - want).abs());
        }
    }
    ensure!(worst <= 1e-6, "max abs error {worst:e}");
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!("{} vectors, max abs error {worst:.1e}, {elapsed:?}", traj.len()))
}

fn c7_state_space() -> Check {
    let sine = |f: f64| Generator::Sine {
        amplitude: 1.0,
        freq_hz: f,
        offset: 0.0,
    };
    let d1 = device("one", 1, &[sine(0.1)]);
    let d2 = device("two", 2, &[sine(0.2), sine(0.3)]);
    let d3 = device("three", 3, &[sine(0.4), sine(0.5), sine(0.6)]);
    let reg = Registry::in_memory();
    let mut doc = QueryModelDoc {
        version: 1,
        device_queries: Vec::new(),
    };
    doc.device_queries.push(register(&reg, &d1, vec![QuerySpec::new(NodeRef::node_id(2, "one.v0"), 100, 60_000)]));
    for d in [&d2, &d3] {
        let q = QuerySpec::new(NodeRef::node_id(2, d.name.clone()), 100, 60_000).with_depth(1);
        doc.device_queries.push(register(&reg, d, vec![q]));
    }
    let trees: BTreeMap<_, _> = [&d1, &d2, &d3].iter().map(|d| (d.name.clone(), d.tree.clone())).collect();
    let est = estimate_state_space(&doc, &trees).map_err(|e| e.to_string())?;
    let per: Vec<_> = est.per_device.iter().map(|(_, n)| *n).collect();
    ensure!(per == [1, 2, 3], "per-device dimensions {per:?}");
    ensure!(est.total == 6, "total {}", est.total);
    let buffer = Buffer::in_memory();
    let r = run_scheduler(&reg, &buffer, &adapters(&[&d1, &d2, &d3]), IngestConfig::default(), 0, 2_000);
    ensure!(r.errors.is_empty(), "ingest errors: {:?}", r.errors);
    let topics: Vec<String> = reg.active_schedule().into_iter().map(|e| e.topic).collect();
    let q = TrajectoryQuery {
        topics,
        t0: 0,
        t1: 2_000,
        grid_millis: 100,
        method: Method::Linear,
    };
    let traj = assemble_trajectory(&q, &buffer).map_err(|e| e.to_string())?;
    ensure!(!traj.is_empty(), "empty trajectory");
    ensure!(traj.iter().all(|v| v.dimension() == 6), "a vector is not 6-dimensional");
    Ok(format!("estimate 1+2+3 = 6, {} vectors of dimension 6", traj.len()))
}

fn rebuild_all(buffer: &Buffer, reg: &Registry) -> Result<Vec<PublishedNode>, String> {
    let mut out = Vec::new();
    for t in buffer.topic_names() {
        for e in read_all(buffer, &t) {
            out.push(rebuild_node(&e, reg).map_err(|e| e.to_string())?);
        }
    }
    Ok(out)
}

fn raw_bytes(buffer: &Buffer) -> Vec<Vec<u8>> {
    buffer
        .topic_names()
        .iter()
        .flat_map(|t| buffer.read(t, 0, usize::MAX).unwrap().records)
        .map(|r| r.payload.to_vec())
        .collect()
}

fn c8_metadata_modes() -> Check {
    let (tree, sim) = press();
    let reg = Registry::in_memory();
    let rec = reg.register_device(&press_query(), &tree, 0).map_err(|e| e.to_string())?;
    let ads: Adapters = [sim as Arc<dyn SourceAdapter>].into_iter().collect();
    let (inline, reference) = (Buffer::in_memory(), Buffer::in_memory());
    for (buffer, mode) in [(&inline, MetadataMode::Inline), (&reference, MetadataMode::Reference)] {
        let r = run_scheduler(&reg, buffer, &ads, IngestConfig::default().with_mode(mode), 0, 2_000);
        ensure!(r.errors.is_empty(), "ingest errors: {:?}", r.errors);
    }
    let a = rebuild_all(&inline, &reg)?;
    let b = rebuild_all(&reference, &reg)?;
    ensure!(a.len() == b.len() && !a.is_empty(), "{} vs {} nodes", a.len(), b.len());
    ensure!(a == b, "inline and reference rebuilds differ");
    let bytes_before = (raw_bytes(&inline), raw_bytes(&reference));
    let key = rec.schedule[0].metadata_key();
    let mut entry = reg.get_metadata(&key).map_err(|e| e.to_string())?;
    entry.display_name = "Renamed".into();
    entry.engineering_unit = "K".into();
    reg.update_metadata(&key, entry).map_err(|e| e.to_string())?;
    ensure!(rebuild_all(&inline, &reg)? == a, "inline rebuilds changed");
    let b2 = rebuild_all(&reference, &reg)?;
    let node = rec.schedule[0].node_ref.canonical();
    let mut changed = 0;
    for (old, new) in b.iter().zip(&b2) {
        if old.node_ref == node {
            ensure!(new.display_name == "Renamed" && new.engineering_unit == "K", "update not visible");
            changed += 1;
        } else {
            ensure!(old == new, "untouched node {} changed", old.node_ref);
        }
    }
    ensure!(bytes_before == (raw_bytes(&inline), raw_bytes(&reference)), "buffered bytes changed");
    Ok(format!("{} nodes equal, {changed} reference rebuilds follow the update", a.len()))
}

fn random_string(rng: &mut ChaCha8Rng) -> String {
    const ALPHABET: &[char] = &['a', 'Z', '0', ' ', '"', '\\', '/', '\n', '\t', 'é', '°', '温', '🙂', '\u{1}'];
    let n = rng.gen_range(0..12);
    (0..n).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())]).collect()
}

fn random_value(rng: &mut ChaCha8Rng, dt: DataType) -> Value {
    match dt {
        DataType::Float64 => Value::Float64(match rng.gen_range(0..8) {
            0 => f64::INFINITY,
            1 => f64::NEG_INFINITY,
            2 => 0.0,
            3 => f64::MIN_POSITIVE,
            4 => f64::MAX,
            5 => f64::from_bits(rng.gen::<u64>() & !(0x7ff << 52)),
            _ => rng.gen_range(-1e9..1e9),
        }),
        DataType::Int64 => Value::Int64(match rng.gen_range(0..4) {
            0 => i64::MIN,
            1 => i64::MAX,
            _ => rng.gen(),
        }),
        DataType::Boolean => Value::Boolean(rng.gen()),
        DataType::String => Value::String(random_string(rng)),
        DataType::Bytes => {
            let n = rng.gen_range(0..40);
            Value::Bytes((0..n).map(|_| rng.gen()).collect())
        }
    }
}

fn random_envelope(rng: &mut ChaCha8Rng, dt: DataType) -> Envelope {
    let meta = if rng.gen() {
        Meta::Inline(InlineMeta {
            display_name: random_string(rng),
            engineering_unit: random_string(rng),
            data_type: dt,
            address_space_path: random_string(rng),
            tags: (0..rng.gen_range(0..3)).map(|_| random_string(rng)).collect(),
        })
    } else {
        Meta::Reference(format!("dev-{}:ns=2;s={}", rng.gen::<u16>(), random_string(rng)))
    };
    Envelope {
        schema_version: SCHEMA_VERSION,
        topic: random_string(rng),
        device_id: format!("dev-{}", rng.gen::<u32>()),
        node_ref: format!("ns={};s={}", rng.gen::<u16>(), random_string(rng)),
        seq: rng.gen(),
        data_type: dt,
        value: random_value(rng, dt),
        source_ts: rng.gen(),
        ingest_ts: rng.gen(),
        meta,
        pipeline: rng.gen::<bool>().then(|| random_string(rng)),
    }
}

fn c9_codec() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 2000;
    for i in 0..n {
        let dt = DataType::ALL[i % DataType::ALL.len()];
        let e = random_envelope(&mut rng, dt);
        let bytes = encode_envelope(&e, CodecId::Json);
        let back = decode_envelope(&bytes).map_err(|err| format!("#{i} {err}: {e:?}"))?;
        ensure!(back == e, "#{i} round trip: {e:?} became {back:?}");
        ensure!(encode_envelope(&back, CodecId::Json) == bytes, "#{i} re-encoding differs");
        ensure!(encode_envelope(&e, CodecId::Json) == bytes, "#{i} encoding is not stable");
    }
    Ok(format!("{n} envelopes over {} data types", DataType::ALL.len()))
}

fn series_envelope(ts: i64, v: Value) -> Envelope {
    Envelope {
        schema_version: SCHEMA_VERSION,
        topic: "t".into(),
        device_id: "dev-0".into(),
        node_ref: "ns=2;s=x".into(),
        seq: 0,
        data_type: v.data_type(),
        value: v,
        source_ts: ts,
        ingest_ts: ts,
        meta: Meta::Reference("dev-0:ns=2;s=x".into()),
        pipeline: None,
    }
}

fn rel_close(got: f64, want: f64, tol: f64) -> bool {
    got == want || (got - want).abs() <= tol * want.abs()
}

fn c10_transform_oracles() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut windows = 0;
    for trial in 0..200 {
        let ints = trial % 2 == 0;
        let n = rng.gen_range(1..200);
        let w: i64 = rng.gen_range(1..5_000);
        let mut ts: i64 = rng.gen_range(-10_000..10_000);
        let mut pts = Vec::new();
        for _ in 0..n {
            ts += rng.gen_range(1..700);
            let v = if ints {
                Value::Int64(rng.gen_range(-1_000_000_000..1_000_000_000))
            } else {
                Value::Float64(rng.gen_range(-1e6..1e6))
            };
            pts.push((ts, v));
        }
        let mut oracle: BTreeMap<i64, Vec<&Value>> = BTreeMap::new();
        for (t, v) in &pts {
            oracle.entry(t.div_euclid(w) * w).or_default().push(v);
        }
        windows += oracle.len();
        for func in [AggFn::Mean, AggFn::Min, AggFn::Max, AggFn::Sum, AggFn::Count] {
            let series: Vec<_> = pts.iter().map(|(t, v)| series_envelope(*t, v.clone())).collect();
            let state = BTreeMap::from([(("t".to_string(), "ns=2;s=x".to_string()), series)]);
            let op = OperatorSpec::Aggregate {
                func,
                window_millis: w as u64,
            };
            let out = apply_operators(state, &[op]).map_err(|e| e.to_string())?;
            let got: Vec<_> = out.into_values().flatten().map(|e| (e.source_ts, e.value)).collect();
            ensure!(got.len() == oracle.len(), "{func:?}: {} windows, want {}", got.len(), oracle.len());
            for ((t, g), (wt, vals)) in got.iter().zip(&oracle) {
                ensure!(t == wt, "{func:?}: window stamp {t}, want {wt}");
                let fs: Vec<f64> = vals.iter().map(|v| v.as_f64().unwrap()).collect();
                let is: Vec<i64> = vals
                    .iter()
                    .filter_map(|v| if let Value::Int64(i) = v { Some(*i) } else { None })
                    .collect();
                let ok = match (func, ints) {
                    (AggFn::Count, _) => *g == Value::Int64(vals.len() as i64),
                    (AggFn::Mean, _) => {
                        let want = if ints {
                            is.iter().map(|&i| i as i128).sum::<i128>() as f64 / is.len() as f64
                        } else {
                            fs.iter().sum::<f64>() / fs.len() as f64
                        };
                        matches!(g, Value::Float64(x) if rel_close(*x, want, 1e-12))
                    }
                    (AggFn::Min, true) => *g == Value::Int64(*is.iter().min().unwrap()),
                    (AggFn::Max, true) => *g == Value::Int64(*is.iter().max().unwrap()),
                    (AggFn::Sum, true) => *g == Value::Int64(is.iter().sum()),
                    (AggFn::Min, false) => {
                        matches!(g, Value::Float64(x) if *x == fs.iter().copied().fold(f64::INFINITY, f64::min))
                    }
                    (AggFn::Max, false) => {
                        matches!(g, Value::Float64(x) if *x == fs.iter().copied().fold(f64::NEG_INFINITY, f64::max))
                    }
                    (AggFn::Sum, false) => {
                        matches!(g, Value::Float64(x) if rel_close(*x, fs.iter().sum(), 1e-12))
                    }
                };
                ensure!(ok, "{func:?} over window {wt}: got {g:?} for {vals:?}");
            }
        }
    }
    let mut grid_points = 0;
    for _ in 0..200 {
        let a: f64 = rng.gen_range(1.0..100.0);
        let b: f64 = rng.gen_range(1e-3..1.0);
        let mut t: i64 = rng.gen_range(0..1_000);
        let mut series = Vec::new();
        for _ in 0..rng.gen_range(2..100) {
            series.push((t, a + b * t as f64));
            t += rng.gen_range(1..500);
        }
        let grid = rng.gen_range(1..300);
        let out = resample_series(&series, grid, Method::Linear).map_err(|e| e.to_string())?;
        for (g, v) in out {
            let want = a + b * g as f64;
            ensure!(rel_close(v, want, 1e-9), "resample at {g}: {v} vs {want}");
            grid_points += 1;
        }
    }
    Ok(format!("{windows} windows x 5 functions, {grid_points} affine grid points"))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("volume arithmetic", c1_volume),
        ("decoupling counts", c2_decoupling),
        ("historic offload", c3_historic_offload),
        ("replay determinism", c4_replay_determinism),
        ("retention", c5_retention),
        ("harmonization correctness", c6_harmonization),
        ("state-space dimension", c7_state_space),
        ("metadata option equivalence", c8_metadata_modes),
        ("codec round trip", c9_codec),
        ("transform oracles", c10_transform_oracles),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
