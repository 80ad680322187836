//! Connection engine: reads scheduled nodes from their sources, wraps the
//! samples into envelopes and appends them to the buffer.

mod envelope;
mod scheduler;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use envelope::{
    decode_envelope, encode_envelope, peek_metadata_key, CodecId, Envelope, InlineMeta, Meta,
    SCHEMA_VERSION,
};
pub use scheduler::{run_realtime, run_scheduler, IngestError, IngestReport, Scheduler};

use crate::buffer::Buffer;
use crate::clock::{Clock, EpochMillis, SystemClock};
use crate::error::{Error, Result};
use crate::registry::{Registry, ScheduleEntry};
use crate::source::{Quality, SourceAdapter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetadataMode {
    #[default]
    Inline,
    Reference,
}

#[derive(Clone)]
pub struct IngestConfig {
    pub metadata_mode: MetadataMode,
    pub codec: CodecId,
    /// Supplies ingest timestamps.
    pub clock: Arc<dyn Clock>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            metadata_mode: MetadataMode::Inline,
            codec: CodecId::Json,
            clock: Arc::new(SystemClock),
        }
    }
}

impl IngestConfig {
    pub fn with_mode(mut self, mode: MetadataMode) -> Self {
        self.metadata_mode = mode;
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }
}

/// Envelopes from one read plus per-node failures that did not abort it.
#[derive(Debug, Default)]
pub struct FetchOutcome {
    pub envelopes: Vec<Envelope>,
    pub errors: Vec<(ScheduleEntry, Error)>,
}

/// Read one scheduled node and wrap the sample.
pub fn fetch_once(
    adapter: &dyn SourceAdapter,
    entry: &ScheduleEntry,
    at: EpochMillis,
    cfg: &IngestConfig,
    registry: &Registry,
) -> Result<Vec<Envelope>> {
    let mut out = fetch_batch(adapter, std::slice::from_ref(entry), at, cfg, registry)?;
    match out.errors.pop() {
        Some((_, e)) => Err(e),
        None => Ok(out.envelopes),
    }
}

/// Read several nodes of one device with a single adapter call. Envelopes
/// come back in the order of `entries`.
pub fn fetch_batch(
    adapter: &dyn SourceAdapter,
    entries: &[ScheduleEntry],
    at: EpochMillis,
    cfg: &IngestConfig,
    registry: &Registry,
) -> Result<FetchOutcome> {
    let refs: Vec<_> = entries.iter().map(|e| e.node_ref.clone()).collect();
    let samples = adapter.read(&refs, at).map_err(|e| match e {
        Error::UnresolvableNode { .. } | Error::NotAVariable(_) | Error::SourceUnavailable { .. } => e,
        other => Error::SourceUnavailable {
            device: adapter.device_name().to_string(),
            reason: other.to_string(),
        },
    })?;
    if samples.len() != entries.len() {
        return Err(Error::SourceUnavailable {
            device: adapter.device_name().to_string(),
            reason: format!("asked for {} nodes, got {} samples", entries.len(), samples.len()),
        });
    }
    let ingest_ts = cfg.clock.now();
    let mut out = FetchOutcome::default();
    for (entry, sample) in entries.iter().zip(samples) {
        let value = match (sample.status, sample.value) {
            (Quality::Good, Some(v)) => v,
            _ => {
                out.errors
                    .push((entry.clone(), Error::BadSample(entry.node_ref.canonical())));
                continue;
            }
        };
        let key = entry.metadata_key();
        let meta = match cfg.metadata_mode {
            MetadataMode::Reference => Meta::Reference(key),
            MetadataMode::Inline => match registry.get_metadata(&key) {
                Ok(m) => Meta::Inline(InlineMeta::from(&m)),
                Err(e) => {
                    out.errors.push((entry.clone(), e));
                    continue;
                }
            },
        };
        out.envelopes.push(Envelope {
            schema_version: SCHEMA_VERSION,
            topic: entry.topic.clone(),
            device_id: entry.device_id.clone(),
            node_ref: entry.node_ref.canonical(),
            seq: 0,
            data_type: value.data_type(),
            value,
            source_ts: sample.source_timestamp,
            ingest_ts,
            meta,
            pipeline: None,
        });
    }
    Ok(out)
}

/// Append an envelope, stamping it with the offset it lands at.
pub fn append_envelope(buffer: &Buffer, mut envelope: Envelope, codec: CodecId) -> Result<u64> {
    let topic = envelope.topic.clone();
    buffer.append_with(&topic, envelope.ingest_ts, |offset| {
        envelope.seq = offset;
        encode_envelope(&envelope, codec)
    })
}
