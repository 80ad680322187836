//! Source adapters: the read/browse surface the engine needs from a device.
//!
//! [`SimDevice`] is a deterministic in-process device; [`TcpSourceAdapter`]
//! talks to a device hosted behind [`serve`]. A real OPC UA client would plug
//! in as another [`SourceAdapter`] implementation.

mod address_space;
mod sim;
mod transport;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use address_space::{AddressSpaceNode, NodeClass};
pub use sim::{random_walk_value, DeviceFile, Generator, SignalConfig, SimDevice, SimDeviceConfig};
pub use transport::{serve, serve_connection, Request, Response, TcpSourceAdapter};

use crate::clock::EpochMillis;
use crate::error::{Error, Result};
use crate::query_model::NodeRef;
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quality {
    Good,
    Bad,
}

/// One value read from one node.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub node_ref: NodeRef,
    /// Present for good samples.
    pub value: Option<Value>,
    pub source_timestamp: EpochMillis,
    pub status: Quality,
}

pub trait SourceAdapter: Send + Sync {
    fn device_name(&self) -> &str;

    fn address_space(&self) -> Result<AddressSpaceNode>;

    fn browse(&self, root: &NodeRef, depth: u32) -> Result<AddressSpaceNode> {
        self.address_space()?.browse(root, depth)
    }

    fn read(&self, refs: &[NodeRef], at: EpochMillis) -> Result<Vec<Sample>>;

    /// Number of `read` calls served so far.
    fn read_count(&self) -> u64;
}

/// Adapters keyed by device name.
#[derive(Clone, Default)]
pub struct Adapters {
    by_name: BTreeMap<String, Arc<dyn SourceAdapter>>,
}

impl Adapters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, adapter: Arc<dyn SourceAdapter>) {
        self.by_name.insert(adapter.device_name().to_string(), adapter);
    }

    pub fn get(&self, name: &str) -> Result<&Arc<dyn SourceAdapter>> {
        self.by_name
            .get(name)
            .ok_or_else(|| Error::UnknownDevice(name.to_string()))
    }

    pub fn read_count(&self, name: &str) -> Result<u64> {
        Ok(self.get(name)?.read_count())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.by_name.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.by_name.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_name.is_empty()
    }
}

impl FromIterator<Arc<dyn SourceAdapter>> for Adapters {
    fn from_iter<I: IntoIterator<Item = Arc<dyn SourceAdapter>>>(iter: I) -> Self {
        let mut a = Adapters::new();
        for x in iter {
            a.insert(x);
        }
        a
    }
}
