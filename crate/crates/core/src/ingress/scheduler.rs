use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde::Serialize;

use super::{append_envelope, fetch_batch, IngestConfig};
use crate::buffer::Buffer;
use crate::clock::{Clock, EpochMillis, VirtualClock};
use crate::error::Error;
use crate::registry::{Registry, ScheduleEntry};
use crate::source::Adapters;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct IngestError {
    pub at: EpochMillis,
    pub device_id: String,
    pub node_ref: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct IngestReport {
    /// Records appended per topic.
    pub appended: BTreeMap<String, u64>,
    /// Adapter read calls issued.
    pub reads: u64,
    pub errors: Vec<IngestError>,
}

impl IngestReport {
    pub fn total_appended(&self) -> u64 {
        self.appended.values().sum()
    }

    fn error(&mut self, at: EpochMillis, device_id: &str, node: Option<String>, e: &Error) {
        self.errors.push(IngestError {
            at,
            device_id: device_id.to_string(),
            node_ref: node,
            message: e.to_string(),
        });
    }

    fn merge(&mut self, other: IngestReport) {
        for (t, n) in other.appended {
            *self.appended.entry(t).or_default() += n;
        }
        self.reads += other.reads;
        self.errors.extend(other.errors);
    }
}

struct Slot {
    entry: ScheduleEntry,
    device_name: Option<String>,
    next: EpochMillis,
}

/// Deterministic scheduler driven by virtual time.
///
/// Each schedule entry is read at `t0 + k * interval`, where `t0` is the
/// scheduler start for entries present at the first run and the resume point
/// for entries that appear later. All entries of one device that are due at
/// the same tick share a single adapter read. Ingest timestamps are the tick
/// times, so identical inputs produce identical buffers.
pub struct Scheduler<'a> {
    registry: &'a Registry,
    buffer: &'a Buffer,
    adapters: &'a Adapters,
    cfg: IngestConfig,
    clock: Arc<VirtualClock>,
    slots: Vec<Slot>,
    resume_at: EpochMillis,
}

impl<'a> Scheduler<'a> {
    pub fn new(
        registry: &'a Registry,
        buffer: &'a Buffer,
        adapters: &'a Adapters,
        cfg: IngestConfig,
        start: EpochMillis,
    ) -> Self {
        let clock = Arc::new(VirtualClock::new(start));
        let cfg = cfg.with_clock(clock.clone());
        Self {
            registry,
            buffer,
            adapters,
            cfg,
            clock,
            slots: Vec::new(),
            resume_at: start,
        }
    }

    pub fn now(&self) -> EpochMillis {
        self.clock.now()
    }

    fn refresh(&mut self, report: &mut IngestReport) {
        let mut old: BTreeMap<_, _> = self
            .slots
            .drain(..)
            .map(|s| ((s.entry.device_id.clone(), s.entry.node_ref.canonical(), s.entry.topic.clone()), s))
            .collect();
        for entry in self.registry.active_schedule() {
            let key = (entry.device_id.clone(), entry.node_ref.canonical(), entry.topic.clone());
            if let Some(slot) = old.remove(&key) {
                self.slots.push(slot);
                continue;
            }
            if let Err(e) = self.buffer.ensure_topic(&entry.topic, entry.retention_millis) {
                report.error(self.resume_at, &entry.device_id, Some(key.1.clone()), &e);
            }
            let device_name = self.registry.device(&entry.device_id).ok().map(|d| d.descriptor.name);
            self.slots.push(Slot {
                entry,
                device_name,
                next: self.resume_at,
            });
        }
    }

    /// Run every tick up to and including `until`.
    pub fn run_until(&mut self, until: EpochMillis) -> IngestReport {
        let mut report = IngestReport::default();
        self.refresh(&mut report);
        while let Some(t) = self.slots.iter().map(|s| s.next).filter(|&n| n <= until).min() {
            self.clock.set(t);
            self.tick(t, &mut report);
        }
        self.resume_at = self.resume_at.max(until.saturating_add(1));
        self.clock.set(self.clock.now().max(until));
        report
    }

    fn tick(&mut self, t: EpochMillis, report: &mut IngestReport) {
        // Due slots grouped by device, keeping schedule order.
        let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
        for (i, slot) in self.slots.iter_mut().enumerate() {
            if slot.next != t {
                continue;
            }
            slot.next = t + slot.entry.interval_millis as EpochMillis;
            match groups.iter_mut().find(|(d, _)| *d == slot.entry.device_id) {
                Some((_, idx)) => idx.push(i),
                None => groups.push((slot.entry.device_id.clone(), vec![i])),
            }
        }
        for (device_id, idx) in groups {
            if !self.registry.is_active(&device_id) {
                continue;
            }
            let name = self.slots[idx[0]].device_name.clone().unwrap_or_default();
            let adapter = match self.adapters.get(&name) {
                Ok(a) => a,
                Err(e) => {
                    report.error(t, &device_id, None, &e);
                    continue;
                }
            };
            let entries: Vec<ScheduleEntry> = idx.iter().map(|&i| self.slots[i].entry.clone()).collect();
            report.reads += 1;
            let outcome = match fetch_batch(adapter.as_ref(), &entries, t, &self.cfg, self.registry) {
                Ok(o) => o,
                Err(e) => {
                    report.error(t, &device_id, None, &e);
                    continue;
                }
            };
            for (entry, e) in &outcome.errors {
                report.error(t, &device_id, Some(entry.node_ref.canonical()), e);
            }
            for env in outcome.envelopes {
                let topic = env.topic.clone();
                let node = env.node_ref.clone();
                match append_envelope(self.buffer, env, self.cfg.codec) {
                    Ok(_) => *report.appended.entry(topic).or_default() += 1,
                    Err(e) => report.error(t, &device_id, Some(node), &e),
                }
            }
        }
    }
}

/// Run the active schedule on virtual time from `start` to `until` inclusive.
pub fn run_scheduler(
    registry: &Registry,
    buffer: &Buffer,
    adapters: &Adapters,
    cfg: IngestConfig,
    start: EpochMillis,
    until: EpochMillis,
) -> IngestReport {
    Scheduler::new(registry, buffer, adapters, cfg, start).run_until(until)
}

/// Run the active schedule against `cfg.clock` with one thread per entry,
/// sleeping between ticks, until the clock passes `until`.
pub fn run_realtime(
    registry: &Registry,
    buffer: &Buffer,
    adapters: &Adapters,
    cfg: IngestConfig,
    until: EpochMillis,
) -> IngestReport {
    let report = Mutex::new(IngestReport::default());
    let schedule = registry.active_schedule();
    thread::scope(|s| {
        for entry in &schedule {
            let (cfg, report) = (&cfg, &report);
            s.spawn(move || {
                let mut local = IngestReport::default();
                if let Err(e) = buffer.ensure_topic(&entry.topic, entry.retention_millis) {
                    local.error(cfg.clock.now(), &entry.device_id, None, &e);
                }
                let adapter = registry
                    .device(&entry.device_id)
                    .and_then(|d| adapters.get(&d.descriptor.name).cloned());
                let adapter = match adapter {
                    Ok(a) => a,
                    Err(e) => {
                        local.error(cfg.clock.now(), &entry.device_id, None, &e);
                        report.lock().expect("report lock").merge(local);
                        return;
                    }
                };
                let mut next = cfg.clock.now();
                while next <= until {
                    let wait = next - cfg.clock.now();
                    if wait > 0 {
                        thread::sleep(Duration::from_millis(wait as u64));
                    }
                    next += entry.interval_millis as EpochMillis;
                    if !registry.is_active(&entry.device_id) {
                        continue;
                    }
                    let at = cfg.clock.now();
                    local.reads += 1;
                    let outcome = match fetch_batch(adapter.as_ref(), std::slice::from_ref(entry), at, cfg, registry) {
                        Ok(o) => o,
                        Err(e) => {
                            local.error(at, &entry.device_id, None, &e);
                            continue;
                        }
                    };
                    for (_, e) in &outcome.errors {
                        local.error(at, &entry.device_id, Some(entry.node_ref.canonical()), e);
                    }
                    for env in outcome.envelopes {
                        match append_envelope(buffer, env, cfg.codec) {
                            Ok(_) => *local.appended.entry(entry.topic.clone()).or_default() += 1,
                            Err(e) => local.error(at, &entry.device_id, Some(entry.node_ref.canonical()), &e),
                        }
                    }
                }
                report.lock().expect("report lock").merge(local);
            });
        }
    });
    report.into_inner().expect("report lock")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingress::{decode_envelope, MetadataMode};
    use crate::query_model::{ConnectionType, DeviceDescriptor, DeviceQuery, NodeRef, QuerySpec};
    use crate::source::{AddressSpaceNode, Generator, SignalConfig, SimDevice, SimDeviceConfig};
    use crate::value::DataType;

    fn setup(intervals: &[u64]) -> (Registry, Adapters) {
        let mut root = AddressSpaceNode::object(NodeRef::node_id(2, "M"), "M");
        let mut signals = Vec::new();
        for (i, _) in intervals.iter().enumerate() {
            let r = NodeRef::node_id(2, format!("M.v{i}"));
            root = root.with_child(AddressSpaceNode::variable(r.clone(), format!("v{i}"), DataType::Float64));
            signals.push(SignalConfig {
                node_ref: r,
                generator: Generator::Ramp { slope_per_sec: 1.0 },
            });
        }
        let dev = SimDevice::new(
            SimDeviceConfig {
                name: "m".into(),
                seed: 1,
                signals,
            },
            root.clone(),
        )
        .unwrap();
        let queries = intervals
            .iter()
            .enumerate()
            .map(|(i, &iv)| QuerySpec::new(NodeRef::node_id(2, format!("M.v{i}")), iv, 60_000))
            .collect();
        let dq = DeviceQuery {
            device: DeviceDescriptor {
                name: "m".into(),
                location: String::new(),
                connection_uri: "sim://m".into(),
                address_space_ref: "m.json".into(),
            },
            connection_type: ConnectionType::ClientServer,
            queries,
        };
        let reg = Registry::in_memory();
        reg.register_device(&dq, &root, 0).unwrap();
        let adapters: Adapters = [Arc::new(dev) as Arc<dyn crate::source::SourceAdapter>].into_iter().collect();
        (reg, adapters)
    }

    #[test]
    fn boundary_inclusive_tick_counts() {
        let (reg, adapters) = setup(&[100]);
        let buf = Buffer::in_memory();
        let r = run_scheduler(&reg, &buf, &adapters, IngestConfig::default(), 0, 1000);
        assert_eq!(r.total_appended(), 11);
        assert!(r.errors.is_empty());

        let (reg, adapters) = setup(&[100, 200]);
        let buf = Buffer::in_memory();
        let r = run_scheduler(&reg, &buf, &adapters, IngestConfig::default(), 0, 400);
        assert_eq!(r.appended["ns=2;s=M.v0"], 5);
        assert_eq!(r.appended["ns=2;s=M.v1"], 3);
        // Ticks at 0, 200 and 400 share one read.
        assert_eq!(r.reads, 5);
        assert_eq!(adapters.read_count("m").unwrap(), 5);
    }

    #[test]
    fn suspension_stops_appends() {
        let (reg, adapters) = setup(&[100]);
        let buf = Buffer::in_memory();
        let mut s = Scheduler::new(&reg, &buf, &adapters, IngestConfig::default(), 0);
        assert_eq!(s.run_until(500).total_appended(), 6);
        reg.suspend_device("dev-1").unwrap();
        assert_eq!(s.run_until(1000).total_appended(), 0);
        assert_eq!(buf.topic_info("ns=2;s=M.v0").unwrap().next_offset, 6);
    }

    #[test]
    fn envelopes_carry_tick_times_and_offsets() {
        let (reg, adapters) = setup(&[250]);
        let buf = Buffer::in_memory();
        let cfg = IngestConfig::default().with_mode(MetadataMode::Reference);
        run_scheduler(&reg, &buf, &adapters, cfg, 1000, 2000);
        let recs = buf.read("ns=2;s=M.v0", 0, 100).unwrap().records;
        assert_eq!(recs.len(), 5);
        for (i, r) in recs.iter().enumerate() {
            let e = decode_envelope(&r.payload).unwrap();
            assert_eq!(e.seq, i as u64);
            assert_eq!(e.source_ts, 1000 + 250 * i as i64);
            assert_eq!(e.ingest_ts, e.source_ts);
            assert_eq!(e.metadata_key(), Some("dev-1:ns=2;s=M.v0"));
        }
    }
}
