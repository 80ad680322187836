//! Query-model driven ingestion of device telemetry.
//!
//! Devices and the nodes to poll are described by a [`QueryModelDoc`] and
//! registered with the [`Registry`]. The [`ingress`] scheduler reads each
//! node from its [`SourceAdapter`] and appends encoded envelopes to the
//! [`Buffer`], a set of replayable topic logs. Consumers read the buffer
//! through [`egress`] subscriptions, [`transform`] pipelines or the
//! [`serving`] stage, never touching the sources themselves.

pub mod bench;
pub mod buffer;
pub mod clock;
pub mod egress;
pub mod engine;
pub mod error;
pub mod framing;
pub mod ingress;
pub mod query_model;
pub mod registry;
pub mod serving;
pub mod source;
pub mod transform;
pub mod value;

pub use buffer::Buffer;
pub use clock::{Clock, EpochMillis, SystemClock, VirtualClock};
pub use engine::Engine;
pub use error::{Error, Result};
pub use ingress::{Envelope, IngestConfig, MetadataMode};
pub use query_model::{NodeRef, QueryModelDoc, QuerySpec};
pub use registry::Registry;
pub use source::{SimDevice, SourceAdapter};
pub use value::{DataType, Value};
