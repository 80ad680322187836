use std::collections::BTreeMap;
use std::io::{self, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use info_engine::bench::{run_bench, BenchConfig, Scenario};
use info_engine::clock::{Clock, SystemClock};
use info_engine::egress::{rebuild_node, subscribe, SubscribeMode};
use info_engine::error::{Error, Result};
use info_engine::ingress::{decode_envelope, IngestConfig, MetadataMode};
use info_engine::query_model::{parse_query_model, sampling_rate_hz, volume_summary, QueryModelDoc};
use info_engine::serving::{assemble_trajectory, export_trajectory, ExportFormat, TrajectoryQuery};
use info_engine::source::{serve, DeviceFile, SimDevice};
use info_engine::transform::{load_pipeline, run_pipeline, Method};
use info_engine::{Engine, EpochMillis};

#[derive(Parser)]
#[command(name = "ie", version, about = "Poll devices into replayable topic logs and serve what was collected")]
struct Cli {
    /// Data directory. Defaults to $IE_DATA_DIR, then ./ie-data.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetaArg {
    Inline,
    Reference,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    #[value(name = "A", alias = "a")]
    A,
    #[value(name = "B", alias = "b")]
    B,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Linear,
    Hold,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Register the devices of a query-model document.
    Register { file: PathBuf },
    /// Poll the active schedule on virtual time from --from to --until.
    Run {
        #[arg(long)]
        until: EpochMillis,
        #[arg(long, default_value_t = 0)]
        from: EpochMillis,
        #[arg(long, value_enum, default_value = "inline")]
        metadata: MetaArg,
        /// Poll on the wall clock for --until milliseconds instead.
        #[arg(long)]
        realtime: bool,
    },
    /// List buffer topics.
    Topics,
    /// Print stored envelopes of a topic, one JSON object per line.
    Tail {
        topic: String,
        #[arg(long, default_value_t = 0)]
        from_offset: u64,
        #[arg(long, default_value_t = 100)]
        max: usize,
    },
    /// Print rebuilt nodes of a topic ingested in [--from, --to).
    Query {
        topic: String,
        #[arg(long)]
        from: EpochMillis,
        #[arg(long)]
        to: EpochMillis,
    },
    /// Align topics on a shared grid and export the trajectory.
    Trajectory {
        #[arg(long, value_delimiter = ',', required = true)]
        topics: Vec<String>,
        #[arg(long)]
        from: EpochMillis,
        #[arg(long)]
        to: EpochMillis,
        #[arg(long)]
        grid: u64,
        #[arg(long, value_enum, default_value = "linear")]
        method: MethodArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
    },
    /// Storage needed per day, month and year for a query-model document.
    Estimate {
        file: PathBuf,
        #[arg(long, default_value_t = 1024)]
        sample_bytes: u64,
    },
    /// Transformation pipelines.
    Pipeline {
        #[command(subcommand)]
        command: PipelineCommand,
    },
    /// Count source and buffer messages for direct or buffered access.
    Bench {
        #[arg(long, value_enum)]
        scenario: ScenarioArg,
        #[arg(short = 'n', default_value_t = 1)]
        n: u32,
        #[arg(short = 'm', default_value_t = 1)]
        m: u32,
        #[arg(short = 'k', default_value_t = 100)]
        k: u32,
    },
    /// Serve a simulated device over TCP.
    ServeSim {
        file: PathBuf,
        #[arg(long, default_value = "127.0.0.1:4840")]
        listen: String,
        #[arg(long)]
        name: Option<String>,
    },
    /// List registered devices.
    Devices,
    /// Stop polling a device.
    Suspend { device_id: String },
    /// Resume polling a suspended device.
    Resume { device_id: String },
}

#[derive(Subcommand)]
enum PipelineCommand {
    /// Run a pipeline over records ingested in [--from, --to).
    Run {
        file: PathBuf,
        #[arg(long)]
        from: Option<EpochMillis>,
        #[arg(long)]
        to: Option<EpochMillis>,
    },
}

fn data_dir(cli: &Cli) -> PathBuf {
    cli.data_dir
        .clone()
        .or_else(|| std::env::var_os("IE_DATA_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("ie-data"))
}

fn print_json<T: serde::Serialize>(out: &mut impl Write, v: &T) -> Result<()> {
    serde_json::to_writer(&mut *out, v).expect("output serializes");
    writeln!(out)?;
    Ok(())
}

fn load_doc(path: &Path) -> Result<QueryModelDoc> {
    parse_query_model(&std::fs::read_to_string(path)?)
}

fn estimate(path: &Path, sample_bytes: u64) -> Result<String> {
    if sample_bytes == 0 {
        return Err(Error::InvalidValue {
            path: "sample-bytes".into(),
            reason: "must be ≥ 1".into(),
        });
    }
    let doc = load_doc(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut trees = BTreeMap::new();
    for dq in &doc.device_queries {
        let file = base.join(&dq.device.address_space_ref);
        if file.is_file() {
            trees.insert(dq.device.name.clone(), DeviceFile::load(&file)?.address_space);
        }
    }
    let rate = sampling_rate_hz(&doc, &trees)?;
    Ok(volume_summary(sample_bytes, rate))
}

fn execute(cli: Cli) -> Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let dir = data_dir(&cli);
    match cli.command {
        Command::Estimate { file, sample_bytes } => {
            writeln!(out, "{}", estimate(&file, sample_bytes)?)?;
        }
        Command::Bench { scenario, n, m, k } => {
            let cfg = BenchConfig {
                n_sources: n,
                m_sinks: m,
                ticks: k,
                scenario: match scenario {
                    ScenarioArg::A => Scenario::A,
                    ScenarioArg::B => Scenario::B,
                },
            };
            print_json(&mut out, &run_bench(&cfg)?)?;
        }
        Command::ServeSim { file, listen, name } => {
            let name = name.unwrap_or_else(|| {
                file.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "sim".into())
            });
            let device = SimDevice::from_file(DeviceFile::load(&file)?, &name)?;
            let listener = TcpListener::bind(&listen)?;
            eprintln!("serving {name} on {}", listener.local_addr()?);
            serve(listener, Arc::new(device))?;
        }
        Command::Register { file } => {
            let doc = load_doc(&file)?;
            let mut engine = Engine::open(dir)?;
            let base = file.parent().unwrap_or(Path::new("."));
            for d in engine.register(&doc, Some(base), SystemClock.now())? {
                writeln!(out, "{}\t{}\t{} nodes", d.device_id, d.descriptor.name, d.schedule.len())?;
            }
        }
        Command::Run {
            until,
            from,
            metadata,
            realtime,
        } => {
            let mut engine = Engine::open(dir)?;
            let cfg = IngestConfig::default().with_mode(match metadata {
                MetaArg::Inline => MetadataMode::Inline,
                MetaArg::Reference => MetadataMode::Reference,
            });
            let report = if realtime {
                engine.run_realtime(cfg, SystemClock.now() + until)
            } else {
                engine.run(cfg, from, until)
            };
            print_json(&mut out, &report)?;
        }
        Command::Topics => {
            let engine = Engine::open(dir)?;
            for t in engine.buffer().topics() {
                print_json(&mut out, &t)?;
            }
        }
        Command::Tail {
            topic,
            from_offset,
            max,
        } => {
            let engine = Engine::open(dir)?;
            let r = engine.buffer().read(&topic, from_offset, max)?;
            if r.truncated {
                eprintln!("offset {from_offset} was evicted; starting at the earliest record");
            }
            for rec in r.records {
                decode_envelope(&rec.payload)?;
                out.write_all(&rec.payload[1..])?;
                writeln!(out)?;
            }
        }
        Command::Query { topic, from, to } => {
            let engine = Engine::open(dir)?;
            let mut sub = subscribe(engine.buffer(), &topic, SubscribeMode::FromTime(from))?;
            'outer: loop {
                let batch = sub.next(engine.buffer(), 1024)?;
                if batch.envelopes.is_empty() {
                    break;
                }
                for e in batch.envelopes {
                    if e.ingest_ts >= to {
                        break 'outer;
                    }
                    print_json(&mut out, &rebuild_node(&e, engine.registry())?)?;
                }
            }
        }
        Command::Trajectory {
            topics,
            from,
            to,
            grid,
            method,
            out: path,
            format,
        } => {
            let engine = Engine::open(dir)?;
            let q = TrajectoryQuery {
                topics,
                t0: from,
                t1: to,
                grid_millis: grid,
                method: match method {
                    MethodArg::Linear => Method::Linear,
                    MethodArg::Hold => Method::Hold,
                },
            };
            let traj = assemble_trajectory(&q, engine.buffer())?;
            let mut sorted = q.topics.clone();
            sorted.sort();
            let format = match format {
                FormatArg::Csv => ExportFormat::Csv,
                FormatArg::Json => ExportFormat::Json,
            };
            let bytes = export_trajectory(&sorted, &traj, format, &path)?;
            writeln!(out, "{} vectors of dimension {}, {bytes} bytes", traj.len(), sorted.len())?;
        }
        Command::Pipeline {
            command: PipelineCommand::Run { file, from, to },
        } => {
            let spec = load_pipeline(&file)?;
            let engine = Engine::open(dir)?;
            let (mut lo, mut hi) = (BTreeMap::new(), BTreeMap::new());
            for t in &spec.input_topics {
                if let Some(ts) = from {
                    lo.insert(t.clone(), engine.buffer().read_time(t, ts)?);
                }
                if let Some(ts) = to {
                    hi.insert(t.clone(), engine.buffer().read_time(t, ts)?);
                }
            }
            let report = run_pipeline(&spec, engine.buffer(), engine.serving(), &lo, &hi)?;
            engine.save()?;
            print_json(&mut out, &report)?;
        }
        Command::Devices => {
            let engine = Engine::open(dir)?;
            for d in engine.registry().list_devices() {
                print_json(&mut out, &d)?;
            }
        }
        Command::Suspend { device_id } => {
            Engine::open(dir)?.registry().suspend_device(&device_id)?;
        }
        Command::Resume { device_id } => {
            Engine::open(dir)?.registry().resume_device(&device_id)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
