//! Envelopes and their wire encoding.
//!
//! An encoded envelope is one codec-id byte followed by the codec body. The
//! JSON codec (id `0x01`) writes its fields in a fixed order:
//!
//! ```text
//! {"v","topic","deviceId","nodeRef","seq","dataType","value","sourceTs","ingestTs","meta"|"metaKey"[,"pipeline"]}
//! ```

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::clock::EpochMillis;
use crate::error::{Error, Result};
use crate::registry::MetadataEntry;
use crate::value::{value_from_json, value_to_json, DataType, Value};

pub const SCHEMA_VERSION: u32 = 1;

/// Metadata carried inside the message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct InlineMeta {
    pub display_name: String,
    pub engineering_unit: String,
    pub data_type: DataType,
    pub address_space_path: String,
    #[serde(default)]
    pub tags: Vec<String>,
}

impl From<&MetadataEntry> for InlineMeta {
    fn from(m: &MetadataEntry) -> Self {
        InlineMeta {
            display_name: m.display_name.clone(),
            engineering_unit: m.engineering_unit.clone(),
            data_type: m.data_type,
            address_space_path: m.address_space_path.clone(),
            tags: m.tags.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Meta {
    /// Metadata copied into every message.
    Inline(InlineMeta),
    /// Key into the registry metadata store.
    Reference(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub schema_version: u32,
    pub topic: String,
    pub device_id: String,
    pub node_ref: String,
    /// Offset within `topic`, assigned when the envelope is appended.
    pub seq: u64,
    pub data_type: DataType,
    pub value: Value,
    pub source_ts: EpochMillis,
    pub ingest_ts: EpochMillis,
    pub meta: Meta,
    /// Name of the pipeline that produced this envelope, if any.
    pub pipeline: Option<String>,
}

impl Envelope {
    pub fn metadata_key(&self) -> Option<&str> {
        match &self.meta {
            Meta::Reference(k) => Some(k),
            Meta::Inline(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodecId {
    #[default]
    Json,
}

impl CodecId {
    pub fn byte(self) -> u8 {
        match self {
            CodecId::Json => 0x01,
        }
    }

    pub fn from_byte(b: u8) -> Result<Self> {
        match b {
            0x01 => Ok(CodecId::Json),
            other => Err(Error::UnknownCodec(other)),
        }
    }
}

#[derive(Serialize)]
struct WireOut<'a> {
    v: u32,
    topic: &'a str,
    #[serde(rename = "deviceId")]
    device_id: &'a str,
    #[serde(rename = "nodeRef")]
    node_ref: &'a str,
    seq: u64,
    #[serde(rename = "dataType")]
    data_type: DataType,
    value: Json,
    #[serde(rename = "sourceTs")]
    source_ts: EpochMillis,
    #[serde(rename = "ingestTs")]
    ingest_ts: EpochMillis,
    #[serde(skip_serializing_if = "Option::is_none")]
    meta: Option<&'a InlineMeta>,
    #[serde(rename = "metaKey", skip_serializing_if = "Option::is_none")]
    meta_key: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pipeline: Option<&'a str>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WireIn {
    v: u32,
    topic: String,
    #[serde(rename = "deviceId")]
    device_id: String,
    #[serde(rename = "nodeRef")]
    node_ref: String,
    seq: u64,
    #[serde(rename = "dataType")]
    data_type: DataType,
    value: Json,
    #[serde(rename = "sourceTs")]
    source_ts: EpochMillis,
    #[serde(rename = "ingestTs")]
    ingest_ts: EpochMillis,
    #[serde(default)]
    meta: Option<InlineMeta>,
    #[serde(rename = "metaKey", default)]
    meta_key: Option<String>,
    #[serde(default)]
    pipeline: Option<String>,
}

pub fn encode_envelope(e: &Envelope, codec: CodecId) -> Vec<u8> {
    match codec {
        CodecId::Json => {
            let (meta, meta_key) = match &e.meta {
                Meta::Inline(m) => (Some(m), None),
                Meta::Reference(k) => (None, Some(k.as_str())),
            };
            let wire = WireOut {
                v: e.schema_version,
                topic: &e.topic,
                device_id: &e.device_id,
                node_ref: &e.node_ref,
                seq: e.seq,
                data_type: e.data_type,
                value: value_to_json(&e.value),
                source_ts: e.source_ts,
                ingest_ts: e.ingest_ts,
                meta,
                meta_key,
                pipeline: e.pipeline.as_deref(),
            };
            let mut out = vec![codec.byte()];
            serde_json::to_writer(&mut out, &wire).expect("envelope serializes");
            out
        }
    }
}

pub fn decode_envelope(bytes: &[u8]) -> Result<Envelope> {
    let (&head, body) = bytes
        .split_first()
        .ok_or_else(|| Error::CorruptPayload("empty payload".into()))?;
    match CodecId::from_byte(head)? {
        CodecId::Json => {
            let w: WireIn =
                serde_json::from_slice(body).map_err(|e| Error::CorruptPayload(e.to_string()))?;
            let meta = match (w.meta, w.meta_key) {
                (Some(m), None) => Meta::Inline(m),
                (None, Some(k)) => Meta::Reference(k),
                _ => {
                    return Err(Error::CorruptPayload(
                        "exactly one of meta and metaKey must be present".into(),
                    ))
                }
            };
            Ok(Envelope {
                schema_version: w.v,
                topic: w.topic,
                device_id: w.device_id,
                node_ref: w.node_ref,
                seq: w.seq,
                value: value_from_json(w.data_type, &w.value)?,
                data_type: w.data_type,
                source_ts: w.source_ts,
                ingest_ts: w.ingest_ts,
                meta,
                pipeline: w.pipeline,
            })
        }
    }
}

/// Extract the metadata key of an encoded envelope without materializing the
/// value or the inline metadata.
pub fn peek_metadata_key(bytes: &[u8]) -> Result<Option<String>> {
    #[derive(Deserialize)]
    struct Peek {
        #[serde(rename = "metaKey", default)]
        meta_key: Option<String>,
    }
    let (&head, body) = bytes
        .split_first()
        .ok_or_else(|| Error::CorruptPayload("empty payload".into()))?;
    match CodecId::from_byte(head)? {
        CodecId::Json => {
            let p: Peek =
                serde_json::from_slice(body).map_err(|e| Error::CorruptPayload(e.to_string()))?;
            Ok(p.meta_key)
        }
    }
}
