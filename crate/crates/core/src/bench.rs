//! Message counting for direct (A) versus buffered (B) source access.
//!
//! Every count in a [`BenchReport`] comes from instrumentation: adapter read
//! counters on the source side and delivered records on the buffer side.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::buffer::Buffer;
use crate::clock::EpochMillis;
use crate::egress::{subscribe, SubscribeMode, Subscription};
use crate::error::{Error, Result};
use crate::ingress::{IngestConfig, MetadataMode, Scheduler};
use crate::query_model::{ConnectionType, DeviceDescriptor, DeviceQuery, NodeRef, QuerySpec};
use crate::registry::Registry;
use crate::source::{Adapters, AddressSpaceNode, Generator, SignalConfig, SimDevice, SimDeviceConfig, SourceAdapter};
use crate::value::DataType;

const TICK_MILLIS: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// Every sink reads every source directly.
    A,
    /// Sources are read once per tick into the buffer; sinks read the buffer.
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BenchConfig {
    pub n_sources: u32,
    pub m_sinks: u32,
    pub ticks: u32,
    pub scenario: Scenario,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BenchReport {
    /// Reads served by the first source. All sources see the same load.
    pub per_source_reads: u64,
    /// Reads served by all sources together.
    pub source_side_messages: u64,
    /// Records delivered from the buffer to sinks.
    pub buffer_side_messages: u64,
    /// `source_side_messages + buffer_side_messages`.
    pub total_network_messages: u64,
    /// Reads the sources served while every sink replayed the full history.
    pub historic_source_reads: u64,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("n", self.n_sources), ("m", self.m_sinks), ("k", self.ticks)] {
            if v == 0 {
                return Err(Error::invalid(name, "must be ≥ 1"));
            }
        }
        Ok(())
    }
}

fn value_ref(i: u32) -> NodeRef {
    NodeRef::node_id(1, format!("src{i}.value"))
}

fn source(i: u32) -> (SimDevice, AddressSpaceNode) {
    let tree = AddressSpaceNode::object(NodeRef::node_id(1, format!("src{i}")), format!("src{i}"))
        .with_child(AddressSpaceNode::variable(value_ref(i), "value", DataType::Float64));
    let cfg = SimDeviceConfig {
        name: format!("src-{i}"),
        seed: u64::from(i),
        signals: vec![SignalConfig {
            node_ref: value_ref(i),
            generator: Generator::Sine {
                amplitude: 1.0,
                freq_hz: 0.1,
                offset: f64::from(i),
            },
        }],
    };
    (SimDevice::new(cfg, tree.clone()).expect("bench device is valid"), tree)
}

fn tick_time(k: u32) -> EpochMillis {
    EpochMillis::from(k) * TICK_MILLIS as EpochMillis
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let mut sources = Vec::new();
    let mut trees = Vec::new();
    for i in 0..cfg.n_sources {
        let (dev, tree) = source(i);
        sources.push(Arc::new(dev));
        trees.push(tree);
    }
    let source_reads = |s: &[Arc<SimDevice>]| s.iter().map(|d| d.read_count()).sum::<u64>();
    let mut report = BenchReport::default();
    match cfg.scenario {
        Scenario::A => {
            for k in 0..cfg.ticks {
                for _sink in 0..cfg.m_sinks {
                    for (i, dev) in sources.iter().enumerate() {
                        dev.read(&[value_ref(i as u32)], tick_time(k))?;
                    }
                }
            }
            report.source_side_messages = source_reads(&sources);
        }
        Scenario::B => {
            let registry = Registry::in_memory();
            let buffer = Buffer::in_memory();
            let mut adapters = Adapters::new();
            let mut topics = Vec::new();
            for (i, (dev, tree)) in sources.iter().zip(&trees).enumerate() {
                let q = QuerySpec::new(value_ref(i as u32), TICK_MILLIS, TICK_MILLIS * u64::from(cfg.ticks) * 2);
                topics.push(q.effective_destination());
                let dq = DeviceQuery {
                    device: DeviceDescriptor {
                        name: dev.device_name().to_string(),
                        location: "bench".into(),
                        connection_uri: format!("sim://src-{i}"),
                        address_space_ref: format!("src-{i}"),
                    },
                    connection_type: ConnectionType::ClientServer,
                    queries: vec![q],
                };
                registry.register_device(&dq, tree, 0)?;
                adapters.insert(dev.clone() as Arc<dyn SourceAdapter>);
            }
            let ingest = IngestConfig::default().with_mode(MetadataMode::Reference);
            let mut scheduler = Scheduler::new(&registry, &buffer, &adapters, ingest, 0);
            let mut sinks: Vec<Vec<Subscription>> = Vec::new();
            for k in 0..cfg.ticks {
                let r = scheduler.run_until(tick_time(k));
                if let Some(e) = r.errors.first() {
                    return Err(Error::SourceUnavailable {
                        device: e.device_id.clone(),
                        reason: e.message.clone(),
                    });
                }
                if sinks.is_empty() {
                    for _ in 0..cfg.m_sinks {
                        let subs = topics
                            .iter()
                            .map(|t| subscribe(&buffer, t, SubscribeMode::FromOffset(0)))
                            .collect::<Result<_>>()?;
                        sinks.push(subs);
                    }
                }
                for sink in &mut sinks {
                    for sub in sink.iter_mut() {
                        report.buffer_side_messages += sub.next(&buffer, usize::MAX)?.envelopes.len() as u64;
                    }
                }
            }
            report.source_side_messages = source_reads(&sources);
            for _ in 0..cfg.m_sinks {
                for t in &topics {
                    let mut sub = subscribe(&buffer, t, SubscribeMode::FromOffset(0))?;
                    while !sub.next(&buffer, 4096)?.envelopes.is_empty() {}
                }
            }
            report.historic_source_reads = source_reads(&sources) - report.source_side_messages;
        }
    }
    report.per_source_reads = sources[0].read_count();
    report.total_network_messages = report.source_side_messages + report.buffer_side_messages;
    Ok(report)
}
