//! Embedded append-only topic logs.
//!
//! Each topic is an offset-addressed sequence of records with non-decreasing
//! ingest timestamps. Records older than the topic retention are dropped from
//! the head; surviving offsets never change and are never reused.
//!
//! Disk layout, one directory per topic (`/` in names escaped as `%2F`):
//!
//! ```text
//! <dir>/<topic>/topic.json                 name, retentionMillis, earliestOffset
//! <dir>/<topic>/<base offset, 20 digits>.log   [u32 BE length][payload]...
//! <dir>/<topic>/<base offset, 20 digits>.idx   [u64 offset][u64 position][i64 ingestTs]...
//! ```
//!
//! All integers are big-endian. Segments are fsynced when they roll.

use std::collections::{BTreeMap, VecDeque};
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use bytes::Bytes;
use serde::{Deserialize, Serialize};

use crate::clock::EpochMillis;
use crate::error::{Error, Result};

pub const DEFAULT_RETENTION_MILLIS: u64 = 24 * 60 * 60 * 1000;
pub const DEFAULT_SEGMENT_BYTES: u64 = 1024 * 1024;

const INDEX_ENTRY_LEN: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub offset: u64,
    pub ingest_ts: EpochMillis,
    pub payload: Bytes,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadResult {
    pub records: Vec<Record>,
    /// The requested offset had already been evicted; reading started at the
    /// earliest surviving record instead.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TopicInfo {
    pub name: String,
    pub retention_millis: u64,
    pub earliest_offset: u64,
    pub next_offset: u64,
}

#[derive(Debug, Clone)]
pub enum Persistence {
    Memory,
    Disk { dir: PathBuf, segment_bytes: u64 },
}

pub struct Buffer {
    persistence: Persistence,
    default_retention: u64,
    topics: RwLock<BTreeMap<String, Arc<RwLock<TopicLog>>>>,
}

impl Buffer {
    pub fn in_memory() -> Self {
        Self {
            persistence: Persistence::Memory,
            default_retention: DEFAULT_RETENTION_MILLIS,
            topics: RwLock::default(),
        }
    }

    /// Open (or create) a disk-backed buffer, loading every topic found.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        Self::open_with_segment_bytes(dir, DEFAULT_SEGMENT_BYTES)
    }

    pub fn open_with_segment_bytes(dir: impl Into<PathBuf>, segment_bytes: u64) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let mut topics = BTreeMap::new();
        let mut entries: Vec<_> = fs::read_dir(&dir)?.collect::<std::io::Result<_>>()?;
        entries.sort_by_key(|e| e.file_name());
        for entry in entries {
            if entry.file_type()?.is_dir() && entry.path().join(TOPIC_META).exists() {
                let log = TopicLog::load(&entry.path(), segment_bytes)?;
                topics.insert(log.name.clone(), Arc::new(RwLock::new(log)));
            }
        }
        Ok(Self {
            persistence: Persistence::Disk { dir, segment_bytes },
            default_retention: DEFAULT_RETENTION_MILLIS,
            topics: RwLock::new(topics),
        })
    }

    pub fn with_default_retention(mut self, millis: u64) -> Self {
        self.default_retention = millis.max(1);
        self
    }

    pub fn persistence(&self) -> &Persistence {
        &self.persistence
    }

    /// Create `topic` if needed; an existing topic keeps the larger retention.
    pub fn ensure_topic(&self, topic: &str, retention_millis: u64) -> Result<()> {
        let retention_millis = retention_millis.max(1);
        let t = match self.get(topic) {
            Some(t) => t,
            None => {
                let mut topics = self.topics.write().expect("topic map lock");
                match topics.get(topic) {
                    Some(t) => Arc::clone(t),
                    None => {
                        let log = TopicLog::create(topic, retention_millis, &self.persistence)?;
                        let t = Arc::new(RwLock::new(log));
                        topics.insert(topic.to_string(), Arc::clone(&t));
                        t
                    }
                }
            }
        };
        let mut log = t.write().expect("topic lock");
        if retention_millis > log.retention {
            log.retention = retention_millis;
            log.persist_meta()?;
        }
        Ok(())
    }

    fn get(&self, topic: &str) -> Option<Arc<RwLock<TopicLog>>> {
        self.topics.read().expect("topic map lock").get(topic).cloned()
    }

    fn get_or_unknown(&self, topic: &str) -> Result<Arc<RwLock<TopicLog>>> {
        self.get(topic).ok_or_else(|| Error::UnknownTopic(topic.to_string()))
    }

    pub fn has_topic(&self, topic: &str) -> bool {
        self.get(topic).is_some()
    }

    /// Append a payload; ad-hoc topics are created with the default retention.
    pub fn append(&self, topic: &str, payload: &[u8], ingest_ts: EpochMillis) -> Result<u64> {
        let payload = Bytes::copy_from_slice(payload);
        self.append_with(topic, ingest_ts, |_| payload)
    }

    /// Append a payload built from the offset it will be stored at.
    pub fn append_with<F, P>(&self, topic: &str, ingest_ts: EpochMillis, build: F) -> Result<u64>
    where
        F: FnOnce(u64) -> P,
        P: Into<Bytes>,
    {
        if !self.has_topic(topic) {
            self.ensure_topic(topic, self.default_retention)?;
        }
        let t = self.get_or_unknown(topic)?;
        let mut log = t.write().expect("topic lock");
        log.append(ingest_ts, build)
    }

    pub fn read(&self, topic: &str, from_offset: u64, max_count: usize) -> Result<ReadResult> {
        let t = self.get_or_unknown(topic)?;
        let log = t.read().expect("topic lock");
        Ok(log.read(from_offset, max_count))
    }

    /// First offset whose ingest timestamp is at least `from_ts`.
    pub fn read_time(&self, topic: &str, from_ts: EpochMillis) -> Result<u64> {
        let t = self.get_or_unknown(topic)?;
        let log = t.read().expect("topic lock");
        let idx = log.records.partition_point(|r| r.ingest_ts < from_ts);
        Ok(log.earliest + idx as u64)
    }

    /// Drop head records with `ingest_ts < now - retention`.
    pub fn evict(&self, topic: &str, now: EpochMillis) -> Result<usize> {
        let t = self.get_or_unknown(topic)?;
        let mut log = t.write().expect("topic lock");
        log.evict(now)
    }

    pub fn evict_all(&self, now: EpochMillis) -> Result<usize> {
        let mut total = 0;
        for name in self.topic_names() {
            total += self.evict(&name, now)?;
        }
        Ok(total)
    }

    pub fn topic_names(&self) -> Vec<String> {
        self.topics.read().expect("topic map lock").keys().cloned().collect()
    }

    pub fn topic_info(&self, topic: &str) -> Result<TopicInfo> {
        let t = self.get_or_unknown(topic)?;
        let log = t.read().expect("topic lock");
        Ok(log.info())
    }

    pub fn topics(&self) -> Vec<TopicInfo> {
        let topics: Vec<_> = self.topics.read().expect("topic map lock").values().cloned().collect();
        topics.iter().map(|t| t.read().expect("topic lock").info()).collect()
    }
}

const TOPIC_META: &str = "topic.json";

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct TopicMeta {
    name: String,
    retention_millis: u64,
    earliest_offset: u64,
}

struct TopicLog {
    name: String,
    retention: u64,
    earliest: u64,
    next: u64,
    records: VecDeque<Record>,
    files: Option<TopicFiles>,
}

impl TopicLog {
    fn create(name: &str, retention: u64, persistence: &Persistence) -> Result<Self> {
        let files = match persistence {
            Persistence::Memory => None,
            Persistence::Disk { dir, segment_bytes } => {
                let tdir = dir.join(escape_topic(name));
                fs::create_dir_all(&tdir)?;
                Some(TopicFiles::new(tdir, *segment_bytes))
            }
        };
        let log = Self {
            name: name.to_string(),
            retention,
            earliest: 0,
            next: 0,
            records: VecDeque::new(),
            files,
        };
        log.persist_meta()?;
        Ok(log)
    }

    fn load(tdir: &Path, segment_bytes: u64) -> Result<Self> {
        let meta: TopicMeta = serde_json::from_slice(&fs::read(tdir.join(TOPIC_META))?)
            .map_err(|e| Error::CorruptPayload(format!("{}: {e}", tdir.display())))?;
        let mut files = TopicFiles::new(tdir.to_path_buf(), segment_bytes);
        let mut records = VecDeque::new();
        let mut next = meta.earliest_offset;
        for (base, seg) in files.scan()? {
            next = next.max(base);
            for r in seg {
                next = next.max(r.offset + 1);
                if r.offset >= meta.earliest_offset {
                    records.push_back(r);
                }
            }
        }
        files.reopen_active()?;
        Ok(Self {
            name: meta.name,
            retention: meta.retention_millis,
            earliest: meta.earliest_offset,
            next,
            records,
            files: Some(files),
        })
    }

    fn persist_meta(&self) -> Result<()> {
        if let Some(f) = &self.files {
            let meta = TopicMeta {
                name: self.name.clone(),
                retention_millis: self.retention,
                earliest_offset: self.earliest,
            };
            write_atomic(&f.dir.join(TOPIC_META), &serde_json::to_vec_pretty(&meta).expect("meta serializes"))?;
        }
        Ok(())
    }

    fn info(&self) -> TopicInfo {
        TopicInfo {
            name: self.name.clone(),
            retention_millis: self.retention,
            earliest_offset: self.earliest,
            next_offset: self.next,
        }
    }

    fn append<F, P>(&mut self, ingest_ts: EpochMillis, build: F) -> Result<u64>
    where
        F: FnOnce(u64) -> P,
        P: Into<Bytes>,
    {
        if let Some(last) = self.records.back() {
            if ingest_ts < last.ingest_ts {
                return Err(Error::RetentionViolation {
                    topic: self.name.clone(),
                    reason: format!(
                        "ingest timestamp {ingest_ts} precedes the log head at {}",
                        last.ingest_ts
                    ),
                });
            }
        }
        let offset = self.next;
        let payload: Bytes = build(offset).into();
        if payload.is_empty() {
            return Err(Error::invalid("payload", "must be non-empty"));
        }
        if let Some(files) = &mut self.files {
            files.append(offset, ingest_ts, &payload)?;
        }
        self.records.push_back(Record {
            offset,
            ingest_ts,
            payload,
        });
        self.next += 1;
        self.evict(ingest_ts)?;
        Ok(offset)
    }

    fn read(&self, from_offset: u64, max_count: usize) -> ReadResult {
        let truncated = from_offset < self.earliest;
        let start = ((from_offset.max(self.earliest) - self.earliest) as usize).min(self.records.len());
        let records = self
            .records
            .range(start..)
            .take(max_count)
            .cloned()
            .collect();
        ReadResult { records, truncated }
    }

    fn evict(&mut self, now: EpochMillis) -> Result<usize> {
        let cutoff = now.saturating_sub(self.retention.min(i64::MAX as u64) as i64);
        let n = self.records.partition_point(|r| r.ingest_ts < cutoff);
        if n == 0 {
            return Ok(0);
        }
        self.records.drain(..n);
        self.earliest += n as u64;
        self.persist_meta()?;
        if let Some(files) = &mut self.files {
            files.drop_segments_before(self.earliest)?;
        }
        Ok(n)
    }
}

struct Segment {
    base: u64,
    /// One past the last offset written to this segment.
    end: u64,
}

struct ActiveSegment {
    base: u64,
    log: File,
    idx: File,
    bytes: u64,
}

struct TopicFiles {
    dir: PathBuf,
    segment_bytes: u64,
    sealed: Vec<Segment>,
    active: Option<ActiveSegment>,
}

impl TopicFiles {
    fn new(dir: PathBuf, segment_bytes: u64) -> Self {
        Self {
            dir,
            segment_bytes: segment_bytes.max(1),
            sealed: Vec::new(),
            active: None,
        }
    }

    fn log_path(&self, base: u64) -> PathBuf {
        self.dir.join(format!("{base:020}.log"))
    }

    fn idx_path(&self, base: u64) -> PathBuf {
        self.dir.join(format!("{base:020}.idx"))
    }

    /// Read every segment in base order. Stops a segment at the first index
    /// entry pointing past the end of its log.
    fn scan(&mut self) -> Result<Vec<(u64, Vec<Record>)>> {
        let mut bases: Vec<u64> = fs::read_dir(&self.dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                name.strip_suffix(".log")?.parse().ok()
            })
            .collect();
        bases.sort_unstable();
        let mut out = Vec::with_capacity(bases.len());
        for base in bases {
            let mut log = Vec::new();
            File::open(self.log_path(base))?.read_to_end(&mut log)?;
            let idx = fs::read(self.idx_path(base)).unwrap_or_default();
            let mut records = Vec::new();
            for entry in idx.chunks_exact(INDEX_ENTRY_LEN) {
                let offset = u64::from_be_bytes(entry[0..8].try_into().unwrap());
                let pos = u64::from_be_bytes(entry[8..16].try_into().unwrap()) as usize;
                let ts = i64::from_be_bytes(entry[16..24].try_into().unwrap());
                let Some(len_bytes) = log.get(pos..pos + 4) else { break };
                let len = u32::from_be_bytes(len_bytes.try_into().unwrap()) as usize;
                let Some(payload) = log.get(pos + 4..pos + 4 + len) else { break };
                records.push(Record {
                    offset,
                    ingest_ts: ts,
                    payload: Bytes::copy_from_slice(payload),
                });
            }
            let end = records.last().map_or(base, |r| r.offset + 1);
            self.sealed.push(Segment { base, end });
            out.push((base, records));
        }
        Ok(out)
    }

    /// Continue appending to the newest segment found by `scan`.
    fn reopen_active(&mut self) -> Result<()> {
        if let Some(last) = self.sealed.pop() {
            let log = OpenOptions::new().append(true).open(self.log_path(last.base))?;
            let idx = OpenOptions::new().append(true).create(true).open(self.idx_path(last.base))?;
            let bytes = log.metadata()?.len();
            self.active = Some(ActiveSegment {
                base: last.base,
                log,
                idx,
                bytes,
            });
        }
        Ok(())
    }

    fn open_segment(&self, base: u64) -> Result<ActiveSegment> {
        let open = |p: PathBuf| OpenOptions::new().create(true).append(true).open(p);
        Ok(ActiveSegment {
            base,
            log: open(self.log_path(base))?,
            idx: open(self.idx_path(base))?,
            bytes: 0,
        })
    }

    fn append(&mut self, offset: u64, ts: EpochMillis, payload: &[u8]) -> Result<()> {
        let roll = matches!(&self.active, Some(a) if a.bytes >= self.segment_bytes);
        if roll {
            let a = self.active.take().expect("active segment");
            a.log.sync_all()?;
            a.idx.sync_all()?;
            self.sealed.push(Segment { base: a.base, end: offset });
        }
        if self.active.is_none() {
            self.active = Some(self.open_segment(offset)?);
        }
        let a = self.active.as_mut().expect("active segment");
        let mut frame = Vec::with_capacity(4 + payload.len());
        frame.extend_from_slice(&(payload.len() as u32).to_be_bytes());
        frame.extend_from_slice(payload);
        a.log.write_all(&frame)?;
        let mut entry = [0u8; INDEX_ENTRY_LEN];
        entry[0..8].copy_from_slice(&offset.to_be_bytes());
        entry[8..16].copy_from_slice(&a.bytes.to_be_bytes());
        entry[16..24].copy_from_slice(&ts.to_be_bytes());
        a.idx.write_all(&entry)?;
        a.bytes += frame.len() as u64;
        Ok(())
    }

    /// Delete sealed segments holding only evicted offsets.
    fn drop_segments_before(&mut self, earliest: u64) -> Result<()> {
        let mut keep = Vec::with_capacity(self.sealed.len());
        for seg in self.sealed.drain(..) {
            if seg.end <= earliest {
                fs::remove_file(self.dir.join(format!("{:020}.log", seg.base)))?;
                let _ = fs::remove_file(self.dir.join(format!("{:020}.idx", seg.base)));
            } else {
                keep.push(seg);
            }
        }
        self.sealed = keep;
        Ok(())
    }
}

/// `%` → `%25`, `/` → `%2F`.
pub fn escape_topic(name: &str) -> String {
    name.replace('%', "%25").replace('/', "%2F")
}

pub fn unescape_topic(name: &str) -> String {
    name.replace("%2F", "/").replace("%25", "%")
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
