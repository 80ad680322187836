//! Device registration authority and metadata store.
//!
//! Holds registered devices with their query models, one metadata entry per
//! traced node, and the fetch schedule derived from both. With a snapshot path
//! every mutation rewrites the whole snapshot file atomically.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::buffer::write_atomic;
use crate::clock::EpochMillis;
use crate::error::{Error, Result};
use crate::query_model::{expand_depth, ConnectionType, DeviceDescriptor, DeviceQuery, NodeRef, QuerySpec};
use crate::source::AddressSpaceNode;
use crate::value::DataType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum DeviceStatus {
    Active,
    Suspended,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScheduleEntry {
    pub device_id: String,
    #[serde(rename = "connectionURI")]
    pub connection_uri: String,
    pub node_ref: NodeRef,
    pub interval_millis: u64,
    pub retention_millis: u64,
    pub topic: String,
}

impl ScheduleEntry {
    pub fn metadata_key(&self) -> String {
        metadata_key(&self.device_id, &self.node_ref)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DeviceRecord {
    pub device_id: String,
    pub descriptor: DeviceDescriptor,
    pub connection_type: ConnectionType,
    pub query_model: Vec<QuerySpec>,
    pub registered_at: EpochMillis,
    pub status: DeviceStatus,
    /// Expanded schedule, fixed at registration.
    pub schedule: Vec<ScheduleEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MetadataEntry {
    pub metadata_key: String,
    pub display_name: String,
    pub engineering_unit: String,
    pub data_type: DataType,
    pub address_space_path: String,
    #[serde(default)]
    pub tags: Vec<String>,
}

/// `<deviceId>:<canonical nodeRef>`.
pub fn metadata_key(device_id: &str, node: &NodeRef) -> String {
    format!("{device_id}:{node}")
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Snapshot {
    next_id: u64,
    devices: BTreeMap<u64, DeviceRecord>,
    metadata: BTreeMap<String, MetadataEntry>,
}

pub struct Registry {
    state: RwLock<Snapshot>,
    path: Option<PathBuf>,
}

impl Default for Registry {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl Registry {
    pub fn in_memory() -> Self {
        Self {
            state: RwLock::new(Snapshot {
                next_id: 1,
                ..Default::default()
            }),
            path: None,
        }
    }

    /// Load the snapshot at `path`, or start empty if it does not exist yet.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let state = if path.exists() {
            let text = fs::read_to_string(&path)?;
            serde_json::from_str(&text).map_err(|e| {
                Error::MalformedDocument(format!("registry snapshot {}: {e}", path.display()))
            })?
        } else {
            Snapshot {
                next_id: 1,
                ..Default::default()
            }
        };
        Ok(Self {
            state: RwLock::new(state),
            path: Some(path),
        })
    }

    pub fn snapshot_path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    fn persist(&self, state: &Snapshot) -> Result<()> {
        if let Some(p) = &self.path {
            if let Some(parent) = p.parent() {
                fs::create_dir_all(parent)?;
            }
            let bytes = serde_json::to_vec_pretty(state).expect("snapshot serializes");
            write_atomic(p, &bytes)?;
        }
        Ok(())
    }

    fn mutate<T>(&self, f: impl FnOnce(&mut Snapshot) -> Result<T>) -> Result<T> {
        let mut guard = self.state.write().expect("registry lock");
        let mut next = guard.clone();
        let out = f(&mut next)?;
        self.persist(&next)?;
        *guard = next;
        Ok(out)
    }

    pub fn register_device(
        &self,
        dq: &DeviceQuery,
        address_space: &AddressSpaceNode,
        now: EpochMillis,
    ) -> Result<DeviceRecord> {
        dq.validate("device")?;
        let name = &dq.device.name;
        self.mutate(|s| {
            if s.devices.values().any(|d| &d.descriptor.name == name) {
                return Err(Error::DuplicateDevice(name.clone()));
            }
            let device_id = format!("dev-{}", s.next_id);
            let mut schedule = Vec::new();
            let mut metadata = Vec::new();
            for q in &dq.queries {
                for node in expand_depth(q, address_space).map_err(|e| e.with_device(name))? {
                    let attrs = address_space
                        .find(&node)
                        .ok_or_else(|| Error::unresolvable(&node).with_device(name))?;
                    metadata.push(MetadataEntry {
                        metadata_key: metadata_key(&device_id, &node),
                        display_name: attrs
                            .display_name
                            .clone()
                            .unwrap_or_else(|| attrs.browse_name.clone()),
                        engineering_unit: attrs.engineering_unit.clone().unwrap_or_default(),
                        data_type: attrs.data_type.unwrap_or(DataType::Float64),
                        address_space_path: address_space
                            .path_to(&node)
                            .unwrap_or_else(|| node.canonical()),
                        tags: Vec::new(),
                    });
                    schedule.push(ScheduleEntry {
                        device_id: device_id.clone(),
                        connection_uri: dq.device.connection_uri.clone(),
                        topic: q.topic_for(&node),
                        node_ref: node,
                        interval_millis: q.interval_millis,
                        retention_millis: q.retention_millis,
                    });
                }
            }
            schedule.sort_by(|a, b| {
                (a.node_ref.canonical(), &a.topic).cmp(&(b.node_ref.canonical(), &b.topic))
            });
            let record = DeviceRecord {
                device_id,
                descriptor: dq.device.clone(),
                connection_type: dq.connection_type,
                query_model: dq.queries.clone(),
                registered_at: now,
                status: DeviceStatus::Active,
                schedule,
            };
            for m in metadata {
                s.metadata.entry(m.metadata_key.clone()).or_insert(m);
            }
            s.devices.insert(s.next_id, record.clone());
            s.next_id += 1;
            Ok(record)
        })
    }

    /// One entry per (active device, expanded node), ordered by device then node.
    pub fn active_schedule(&self) -> Vec<ScheduleEntry> {
        let s = self.state.read().expect("registry lock");
        s.devices
            .values()
            .filter(|d| d.status == DeviceStatus::Active)
            .flat_map(|d| d.schedule.iter().cloned())
            .collect()
    }

    pub fn list_devices(&self) -> Vec<DeviceRecord> {
        let s = self.state.read().expect("registry lock");
        s.devices.values().cloned().collect()
    }

    pub fn device(&self, device_id: &str) -> Result<DeviceRecord> {
        let s = self.state.read().expect("registry lock");
        s.devices
            .values()
            .find(|d| d.device_id == device_id)
            .cloned()
            .ok_or_else(|| Error::UnknownDevice(device_id.to_string()))
    }

    pub fn device_by_name(&self, name: &str) -> Option<DeviceRecord> {
        let s = self.state.read().expect("registry lock");
        s.devices.values().find(|d| d.descriptor.name == name).cloned()
    }

    pub fn is_active(&self, device_id: &str) -> bool {
        self.device(device_id)
            .map(|d| d.status == DeviceStatus::Active)
            .unwrap_or(false)
    }

    fn set_status(&self, device_id: &str, status: DeviceStatus) -> Result<()> {
        self.mutate(|s| {
            let d = s
                .devices
                .values_mut()
                .find(|d| d.device_id == device_id)
                .ok_or_else(|| Error::UnknownDevice(device_id.to_string()))?;
            d.status = status;
            Ok(())
        })
    }

    /// Stop scheduling a device. Its buffered data is left alone.
    pub fn suspend_device(&self, device_id: &str) -> Result<()> {
        self.set_status(device_id, DeviceStatus::Suspended)
    }

    pub fn resume_device(&self, device_id: &str) -> Result<()> {
        self.set_status(device_id, DeviceStatus::Active)
    }

    pub fn get_metadata(&self, key: &str) -> Result<MetadataEntry> {
        let s = self.state.read().expect("registry lock");
        s.metadata
            .get(key)
            .cloned()
            .ok_or_else(|| Error::UnknownMetadataKey(key.to_string()))
    }

    pub fn update_metadata(&self, key: &str, entry: MetadataEntry) -> Result<()> {
        self.mutate(|s| {
            let slot = s
                .metadata
                .get_mut(key)
                .ok_or_else(|| Error::UnknownMetadataKey(key.to_string()))?;
            *slot = MetadataEntry {
                metadata_key: key.to_string(),
                ..entry
            };
            Ok(())
        })
    }

    pub fn remove_metadata(&self, key: &str) -> Result<MetadataEntry> {
        self.mutate(|s| {
            s.metadata
                .remove(key)
                .ok_or_else(|| Error::UnknownMetadataKey(key.to_string()))
        })
    }

    pub fn metadata_entries(&self) -> Vec<MetadataEntry> {
        let s = self.state.read().expect("registry lock");
        s.metadata.values().cloned().collect()
    }
}
