//! One registry, buffer, serving store and adapter set, optionally rooted in
//! a data directory:
//!
//! ```text
//! <dir>/registry.json
//! <dir>/buffer/
//! <dir>/serving.json
//! <dir>/devices/<device>.json     simulated devices registered from files
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::buffer::{escape_topic, write_atomic, Buffer};
use crate::clock::EpochMillis;
use crate::error::{Error, Result};
use crate::ingress::{run_realtime, IngestConfig, IngestReport, Scheduler};
use crate::query_model::{expand_depth, DeviceDescriptor, QueryModelDoc};
use crate::registry::{DeviceRecord, Registry};
use crate::serving::ServingStore;
use crate::source::{Adapters, AddressSpaceNode, DeviceFile, SimDevice, SourceAdapter, TcpSourceAdapter};

pub struct Engine {
    dir: Option<PathBuf>,
    registry: Registry,
    buffer: Buffer,
    serving: ServingStore,
    adapters: Adapters,
}

/// `host:port` of a `tcp://` connection URI.
pub fn tcp_address(uri: &str) -> Option<String> {
    let url = url::Url::parse(uri).ok()?;
    if url.scheme() != "tcp" {
        return None;
    }
    Some(format!("{}:{}", url.host_str()?, url.port()?))
}

fn resolve_ref(base: &Path, reference: &str) -> PathBuf {
    let p = Path::new(reference.strip_prefix("file://").unwrap_or(reference));
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl Engine {
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            registry: Registry::in_memory(),
            buffer: Buffer::in_memory(),
            serving: ServingStore::in_memory(),
            adapters: Adapters::new(),
        }
    }

    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            registry: Registry::open(dir.join("registry.json"))?,
            buffer: Buffer::open(dir.join("buffer"))?,
            serving: ServingStore::open(dir.join("serving.json"))?,
            adapters: Adapters::new(),
            dir: Some(dir),
        })
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn buffer(&self) -> &Buffer {
        &self.buffer
    }

    pub fn serving(&self) -> &ServingStore {
        &self.serving
    }

    pub fn adapters(&self) -> &Adapters {
        &self.adapters
    }

    pub fn add_adapter(&mut self, adapter: Arc<dyn SourceAdapter>) {
        self.adapters.insert(adapter);
    }

    fn device_file_path(&self, name: &str) -> Option<PathBuf> {
        self.dir
            .as_ref()
            .map(|d| d.join("devices").join(format!("{}.json", escape_topic(name))))
    }

    /// Find or create the adapter for `device`, returning its address space.
    fn attach(&mut self, device: &DeviceDescriptor, base: Option<&Path>) -> Result<AddressSpaceNode> {
        if let Ok(a) = self.adapters.get(&device.name) {
            return a.address_space();
        }
        if let Some(addr) = tcp_address(&device.connection_uri) {
            let a = TcpSourceAdapter::connect(addr.as_str(), device.name.clone()).map_err(|e| {
                Error::SourceUnavailable {
                    device: device.name.clone(),
                    reason: e.to_string(),
                }
            })?;
            let tree = a.address_space()?;
            self.add_adapter(Arc::new(a));
            return Ok(tree);
        }
        let stored = self.device_file_path(&device.name).filter(|p| p.exists());
        let (path, copy) = match (base, stored) {
            (Some(b), _) => (resolve_ref(b, &device.address_space_ref), true),
            (None, Some(p)) => (p, false),
            (None, None) => {
                return Err(Error::SourceUnavailable {
                    device: device.name.clone(),
                    reason: "no adapter and no device file".into(),
                })
            }
        };
        let file = DeviceFile::load(&path)?;
        let tree = file.address_space.clone();
        if copy {
            if let Some(dest) = self.device_file_path(&device.name) {
                fs::create_dir_all(dest.parent().expect("devices dir"))?;
                let bytes = serde_json::to_vec_pretty(&file).expect("device file serializes");
                write_atomic(&dest, &bytes)?;
            }
        }
        self.add_adapter(Arc::new(SimDevice::from_file(file, &device.name)?));
        Ok(tree)
    }

    /// Register every device of `doc`. Address spaces come from attached
    /// adapters, `tcp://` devices, or device files resolved against `base`.
    /// Nothing is registered unless every device resolves.
    pub fn register(&mut self, doc: &QueryModelDoc, base: Option<&Path>, now: EpochMillis) -> Result<Vec<DeviceRecord>> {
        doc.validate()?;
        let mut trees = Vec::with_capacity(doc.device_queries.len());
        for dq in &doc.device_queries {
            if self.registry.device_by_name(&dq.device.name).is_some() {
                return Err(Error::DuplicateDevice(dq.device.name.clone()));
            }
            let tree = self.attach(&dq.device, base)?;
            for q in &dq.queries {
                expand_depth(q, &tree).map_err(|e| e.with_device(&dq.device.name))?;
            }
            trees.push(tree);
        }
        doc.device_queries
            .iter()
            .zip(&trees)
            .map(|(dq, tree)| self.registry.register_device(dq, tree, now))
            .collect()
    }

    /// Attach adapters for registered devices that have none yet. Devices
    /// that cannot be reached are logged and left for the scheduler to report.
    pub fn connect_registered(&mut self) {
        for d in self.registry.list_devices() {
            if self.adapters.get(&d.descriptor.name).is_ok() {
                continue;
            }
            if let Err(e) = self.attach(&d.descriptor, None) {
                log::warn!("device {}: {e}", d.descriptor.name);
            }
        }
    }

    /// Run the active schedule on virtual time over `[from, until]`.
    pub fn run(&mut self, cfg: IngestConfig, from: EpochMillis, until: EpochMillis) -> IngestReport {
        self.connect_registered();
        Scheduler::new(&self.registry, &self.buffer, &self.adapters, cfg, from).run_until(until)
    }

    /// Run the active schedule on `cfg.clock` until it reaches `until`.
    pub fn run_realtime(&mut self, cfg: IngestConfig, until: EpochMillis) -> IngestReport {
        self.connect_registered();
        run_realtime(&self.registry, &self.buffer, &self.adapters, cfg, until)
    }

    pub fn save(&self) -> Result<()> {
        self.serving.save()
    }
}
