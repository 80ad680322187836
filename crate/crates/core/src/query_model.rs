//! Query-model documents: which nodes of which devices are polled, how often,
//! how deep, and for how long the readings stay in the buffer.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::source::AddressSpaceNode;

/// Upper bound on browse expansion levels.
pub const MAX_DEPTH: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RefKind {
    NodeId,
    BrowsePath,
}

/// Namespace-qualified reference to an address-space node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRef {
    #[serde(rename = "ns")]
    pub namespace_index: u32,
    #[serde(rename = "id")]
    pub identifier: String,
    pub kind: RefKind,
}

impl NodeRef {
    pub fn node_id(ns: u32, id: impl Into<String>) -> Self {
        Self {
            namespace_index: ns,
            identifier: id.into(),
            kind: RefKind::NodeId,
        }
    }

    pub fn browse_path(ns: u32, path: impl Into<String>) -> Self {
        Self {
            namespace_index: ns,
            identifier: path.into(),
            kind: RefKind::BrowsePath,
        }
    }

    /// `ns=<n>;s=<id>` or `ns=<n>;bp=<path>`.
    pub fn canonical(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.kind {
            RefKind::NodeId => "s",
            RefKind::BrowsePath => "bp",
        };
        write!(f, "ns={};{}={}", self.namespace_index, tag, self.identifier)
    }
}

impl FromStr for NodeRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid("nodeRef", format!("`{s}` is not a canonical node reference"));
        let rest = s.strip_prefix("ns=").ok_or_else(bad)?;
        let (ns, rest) = rest.split_once(';').ok_or_else(bad)?;
        let ns: u32 = ns.parse().map_err(|_| bad())?;
        let (kind, id) = if let Some(id) = rest.strip_prefix("s=") {
            (RefKind::NodeId, id)
        } else if let Some(id) = rest.strip_prefix("bp=") {
            (RefKind::BrowsePath, id)
        } else {
            return Err(bad());
        };
        if id.is_empty() {
            return Err(bad());
        }
        Ok(NodeRef {
            namespace_index: ns,
            identifier: id.to_string(),
            kind,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceDescriptor {
    pub name: String,
    pub location: String,
    #[serde(rename = "connectionURI")]
    pub connection_uri: String,
    #[serde(rename = "addressSpaceRef")]
    pub address_space_ref: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ConnectionType {
    ClientServer,
    PubSub,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct QuerySpec {
    pub node_ref: NodeRef,
    pub interval_millis: u64,
    pub depth: u32,
    pub retention_millis: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub destination: Option<String>,
}

impl QuerySpec {
    pub fn new(node_ref: NodeRef, interval_millis: u64, retention_millis: u64) -> Self {
        Self {
            node_ref,
            interval_millis,
            depth: 0,
            retention_millis,
            destination: None,
        }
    }

    pub fn with_depth(mut self, depth: u32) -> Self {
        self.depth = depth;
        self
    }

    pub fn with_destination(mut self, d: impl Into<String>) -> Self {
        self.destination = Some(d.into());
        self
    }

    /// The configured destination, or the canonical node reference when unset.
    pub fn effective_destination(&self) -> String {
        match &self.destination {
            Some(d) => d.clone(),
            None => self.node_ref.canonical(),
        }
    }

    /// Topic an expanded node is written to. Depth-0 queries write straight
    /// to the effective destination; deeper queries suffix the node.
    pub fn topic_for(&self, node: &NodeRef) -> String {
        if self.depth == 0 {
            self.effective_destination()
        } else {
            format!("{}/{}", self.effective_destination(), node.canonical())
        }
    }

    fn validate(&self, path: &str) -> Result<()> {
        if self.node_ref.identifier.is_empty() {
            return Err(Error::invalid(format!("{path}.nodeRef.id"), "must be non-empty"));
        }
        if self.interval_millis < 1 {
            return Err(Error::invalid(format!("{path}.intervalMillis"), "must be ≥ 1"));
        }
        if self.retention_millis < self.interval_millis {
            return Err(Error::invalid(
                format!("{path}.retentionMillis"),
                "must be ≥ intervalMillis",
            ));
        }
        if self.depth > MAX_DEPTH {
            return Err(Error::invalid(
                format!("{path}.depth"),
                format!("must be ≤ {MAX_DEPTH}"),
            ));
        }
        if matches!(&self.destination, Some(d) if d.is_empty()) {
            return Err(Error::invalid(format!("{path}.destination"), "must be non-empty"));
        }
        Ok(())
    }
}

/// Free function form of [`QuerySpec::effective_destination`].
pub fn effective_destination(q: &QuerySpec) -> String {
    q.effective_destination()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DeviceQuery {
    pub device: DeviceDescriptor,
    pub connection_type: ConnectionType,
    pub queries: Vec<QuerySpec>,
}

impl DeviceQuery {
    pub fn validate(&self, path: &str) -> Result<()> {
        let d = &self.device;
        if d.name.is_empty() {
            return Err(Error::invalid(format!("{path}.device.name"), "must be non-empty"));
        }
        if let Err(e) = url::Url::parse(&d.connection_uri) {
            return Err(Error::invalid(
                format!("{path}.device.connectionURI"),
                format!("not a URI: {e}"),
            ));
        }
        if self.queries.is_empty() {
            return Err(Error::invalid(format!("{path}.queries"), "must be non-empty"));
        }
        let mut seen = BTreeSet::new();
        for (i, q) in self.queries.iter().enumerate() {
            let qpath = format!("{path}.queries[{i}]");
            q.validate(&qpath)?;
            if !seen.insert((q.node_ref.canonical(), q.effective_destination())) {
                return Err(Error::invalid(
                    qpath,
                    "duplicate (nodeRef, destination) pair within device",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct QueryModelDoc {
    pub version: u32,
    pub device_queries: Vec<DeviceQuery>,
}

impl QueryModelDoc {
    pub fn validate(&self) -> Result<()> {
        if self.version < 1 {
            return Err(Error::invalid("version", "must be ≥ 1"));
        }
        let mut names = BTreeSet::new();
        for (i, dq) in self.device_queries.iter().enumerate() {
            dq.validate(&format!("deviceQueries[{i}]"))?;
            if !names.insert(dq.device.name.as_str()) {
                return Err(Error::invalid("deviceQueries", "duplicate device name"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("query model serializes")
    }
}

/// Parse and validate a query-model document.
pub fn parse_query_model(text: &str) -> Result<QueryModelDoc> {
    let doc: QueryModelDoc = from_json_with_paths(text)?;
    doc.validate()?;
    Ok(doc)
}

/// Deserialize JSON, translating serde failures into path-qualified errors.
pub(crate) fn from_json_with_paths<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    match serde_path_to_error::deserialize::<_, T>(de) {
        Ok(v) => Ok(v),
        Err(err) => {
            let path = err.path().to_string();
            let inner = err.into_inner();
            if !inner.is_data() {
                return Err(Error::MalformedDocument(inner.to_string()));
            }
            let msg = inner.to_string();
            let msg = msg.split(" at line ").next().unwrap_or(&msg).to_string();
            if let Some(field) = backticked(&msg, "missing field `") {
                let full = if path == "." || path.is_empty() {
                    field.to_string()
                } else {
                    format!("{path}.{field}")
                };
                return Err(Error::MissingField(full));
            }
            Err(Error::invalid(path, msg))
        }
    }
}

fn backticked<'a>(msg: &'a str, prefix: &str) -> Option<&'a str> {
    let rest = msg.strip_prefix(prefix)?;
    rest.split('`').next()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    Day,
    Month,
    Year,
}

impl Horizon {
    pub fn seconds(self) -> u64 {
        const DAY: u64 = 86_400;
        match self {
            Horizon::Day => DAY,
            Horizon::Month => 30 * DAY,
            Horizon::Year => 365 * DAY,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Horizon::Day => "day",
            Horizon::Month => "month",
            Horizon::Year => "year",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VolumeEstimate {
    pub bytes: u64,
    pub human: String,
}

/// Storage needed to keep a sampled signal for `horizon`.
///
/// The sample count is `rate_hz * seconds` rounded to the nearest integer, so
/// the result is exactly linear in `sample_bytes`.
pub fn estimate_volume(sample_bytes: u64, rate_hz: f64, horizon: Horizon) -> VolumeEstimate {
    let samples = (rate_hz * horizon.seconds() as f64).round().max(0.0) as u64;
    let bytes = sample_bytes.saturating_mul(samples);
    VolumeEstimate {
        bytes,
        human: human_bytes(bytes),
    }
}

/// `"<day>/day, <month>/month, <year>/year"` for one sampling rate.
pub fn volume_summary(sample_bytes: u64, rate_hz: f64) -> String {
    [Horizon::Day, Horizon::Month, Horizon::Year]
        .iter()
        .map(|&h| format!("{}/{}", estimate_volume(sample_bytes, rate_hz, h).human, h.label()))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Binary units with decimal-looking labels, two decimals, ties rounded up.
pub fn human_bytes(bytes: u64) -> String {
    const UNITS: [&str; 5] = ["B", "KB", "MB", "GB", "TB"];
    let mut unit = 0;
    let mut scale = 1u64;
    while unit + 1 < UNITS.len() && bytes >= scale * 1024 {
        scale *= 1024;
        unit += 1;
    }
    if unit == 0 {
        return format!("{bytes} B");
    }
    let v = ((bytes as f64 / scale as f64) * 100.0).round() / 100.0;
    format!("{v:.2} {}", UNITS[unit])
}

/// Variable nodes covered by a query, in browse order.
pub fn expand_depth(q: &QuerySpec, address_space: &AddressSpaceNode) -> Result<Vec<NodeRef>> {
    fn walk(n: &AddressSpaceNode, remaining: u32, out: &mut Vec<NodeRef>, seen: &mut BTreeSet<NodeRef>) {
        if n.is_variable() && seen.insert(n.node_ref.clone()) {
            out.push(n.node_ref.clone());
        }
        if remaining == 0 {
            return;
        }
        for c in n.sorted_children() {
            walk(c, remaining - 1, out, seen);
        }
    }
    let root = address_space
        .find(&q.node_ref)
        .ok_or_else(|| Error::unresolvable(&q.node_ref))?;
    if q.depth == 0 {
        // Depth 0 keeps the reference exactly as the query wrote it.
        return Ok(if root.is_variable() {
            vec![q.node_ref.clone()]
        } else {
            Vec::new()
        });
    }
    let mut out = Vec::new();
    walk(root, q.depth, &mut out, &mut BTreeSet::new());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpaceEstimate {
    /// Traced dimension per device, in document order.
    pub per_device: Vec<(String, usize)>,
    pub total: usize,
}

/// Dimension of the traced state space of every device and of their product.
pub fn estimate_state_space(
    doc: &QueryModelDoc,
    address_spaces: &BTreeMap<String, AddressSpaceNode>,
) -> Result<StateSpaceEstimate> {
    let mut per_device = Vec::with_capacity(doc.device_queries.len());
    for dq in &doc.device_queries {
        let name = &dq.device.name;
        let tree = address_spaces
            .get(name)
            .ok_or_else(|| Error::UnknownDevice(name.clone()))?;
        let mut nodes = BTreeSet::new();
        for q in &dq.queries {
            for n in expand_depth(q, tree).map_err(|e| e.with_device(name))? {
                // Canonicalize browse paths so a node named two ways counts once.
                let node = tree.find(&n).map(|x| x.node_ref.clone()).unwrap_or(n);
                nodes.insert(node);
            }
        }
        per_device.push((name.clone(), nodes.len()));
    }
    let total = per_device.iter().map(|(_, n)| n).sum();
    Ok(StateSpaceEstimate { per_device, total })
}

/// Total sampling rate of a document in samples per second. Devices without
/// an address space count one node per depth-0 query.
pub fn sampling_rate_hz(
    doc: &QueryModelDoc,
    address_spaces: &BTreeMap<String, AddressSpaceNode>,
) -> Result<f64> {
    let mut rate = 0.0;
    for dq in &doc.device_queries {
        let name = &dq.device.name;
        for q in &dq.queries {
            let nodes = match address_spaces.get(name) {
                Some(tree) => expand_depth(q, tree).map_err(|e| e.with_device(name))?.len(),
                None if q.depth == 0 => 1,
                None => return Err(Error::UnknownDevice(name.clone())),
            };
            rate += nodes as f64 * 1000.0 / q.interval_millis as f64;
        }
    }
    Ok(rate)
}
