//! Egress: replayable subscriptions, node rebuilding and raw pass-through.

use std::io::{Read, Write};

use bytes::Bytes;
use serde::Serialize;

use crate::buffer::Buffer;
use crate::clock::EpochMillis;
use crate::error::Result;
use crate::framing::{read_frame, write_frame};
use crate::ingress::{decode_envelope, peek_metadata_key, Envelope, Meta};
use crate::registry::Registry;
use crate::value::{value_to_json, DataType, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubscribeMode {
    FromOffset(u64),
    FromTime(EpochMillis),
    /// Only records appended after subscribing.
    Live,
}

/// A cursor over one topic. Cursors only move forward.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subscription {
    topic: String,
    cursor: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Batch {
    pub envelopes: Vec<Envelope>,
    /// The cursor had fallen behind retention and was moved to the earliest
    /// surviving offset.
    pub cursor_evicted: bool,
}

pub fn subscribe(buffer: &Buffer, topic: &str, mode: SubscribeMode) -> Result<Subscription> {
    let info = buffer.topic_info(topic)?;
    let cursor = match mode {
        SubscribeMode::FromOffset(o) => o,
        SubscribeMode::FromTime(ts) => buffer.read_time(topic, ts)?,
        SubscribeMode::Live => info.next_offset,
    };
    Ok(Subscription {
        topic: topic.to_string(),
        cursor,
    })
}

impl Subscription {
    pub fn topic(&self) -> &str {
        &self.topic
    }

    pub fn cursor(&self) -> u64 {
        self.cursor
    }

    /// Up to `max_count` raw records from the cursor, advancing it.
    pub fn next_raw(&mut self, buffer: &Buffer, max_count: usize) -> Result<(Vec<crate::buffer::Record>, bool)> {
        let r = buffer.read(&self.topic, self.cursor, max_count)?;
        if let Some(last) = r.records.last() {
            self.cursor = self.cursor.max(last.offset + 1);
        }
        Ok((r.records, r.truncated))
    }

    /// Up to `max_count` decoded envelopes from the cursor, advancing it.
    pub fn next(&mut self, buffer: &Buffer, max_count: usize) -> Result<Batch> {
        let (records, truncated) = self.next_raw(buffer, max_count)?;
        let envelopes = records
            .iter()
            .map(|r| decode_envelope(&r.payload))
            .collect::<Result<_>>()?;
        Ok(Batch {
            envelopes,
            cursor_evicted: truncated,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Provenance {
    pub topic: String,
    pub offset: u64,
}

/// A node as published to consumers, with resolved metadata.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PublishedNode {
    pub node_ref: String,
    #[serde(serialize_with = "value_json")]
    pub value: Value,
    pub data_type: DataType,
    pub source_timestamp: EpochMillis,
    pub display_name: String,
    pub engineering_unit: String,
    pub address_space_path: String,
    pub provenance: Provenance,
}

fn value_json<S: serde::Serializer>(v: &Value, s: S) -> std::result::Result<S::Ok, S::Error> {
    value_to_json(v).serialize(s)
}

/// Merge an envelope with its metadata, looked up in `registry` for
/// reference-mode envelopes.
pub fn rebuild_node(e: &Envelope, registry: &Registry) -> Result<PublishedNode> {
    let (display_name, engineering_unit, address_space_path) = match &e.meta {
        Meta::Inline(m) => (
            m.display_name.clone(),
            m.engineering_unit.clone(),
            m.address_space_path.clone(),
        ),
        Meta::Reference(key) => {
            let m = registry.get_metadata(key)?;
            (m.display_name, m.engineering_unit, m.address_space_path)
        }
    };
    Ok(PublishedNode {
        node_ref: e.node_ref.clone(),
        value: e.value.clone(),
        data_type: e.data_type,
        source_timestamp: e.source_ts,
        display_name,
        engineering_unit,
        address_space_path,
        provenance: Provenance {
            topic: e.topic.clone(),
            offset: e.seq,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub offset: u64,
    pub payload: Bytes,
    /// Present for reference-mode payloads.
    pub metadata_key: Option<String>,
}

/// Stored payloads without decoding; callers resolve metadata keys through
/// the registry themselves.
pub fn passthrough_read(buffer: &Buffer, topic: &str, from_offset: u64, max_count: usize) -> Result<Vec<RawRecord>> {
    buffer
        .read(topic, from_offset, max_count)?
        .records
        .into_iter()
        .map(|r| {
            Ok(RawRecord {
                offset: r.offset,
                metadata_key: peek_metadata_key(&r.payload)?,
                payload: r.payload,
            })
        })
        .collect()
}

/// Write every record of `topic` from `from_offset` as one length-prefixed
/// frame each, returning the number of frames.
pub fn stream_topic<W: Write>(buffer: &Buffer, topic: &str, from_offset: u64, out: &mut W) -> Result<u64> {
    let mut sub = subscribe(buffer, topic, SubscribeMode::FromOffset(from_offset))?;
    let mut n = 0;
    loop {
        let (records, _) = sub.next_raw(buffer, 1024)?;
        if records.is_empty() {
            break;
        }
        for r in records {
            write_frame(out, &r.payload)?;
            n += 1;
        }
    }
    out.flush()?;
    Ok(n)
}

/// Read framed envelopes until end of stream.
pub fn read_stream<R: Read>(input: &mut R) -> Result<Vec<Envelope>> {
    let mut out = Vec::new();
    while let Some(frame) = read_frame(input)? {
        out.push(decode_envelope(&frame)?);
    }
    Ok(out)
}
