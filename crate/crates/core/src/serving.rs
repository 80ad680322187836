//! Serving stage: sorted time-series tables, state trajectories assembled
//! from buffered topics, and CSV/JSON export.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value as Json};

use crate::buffer::{write_atomic, Buffer};
use crate::clock::EpochMillis;
use crate::error::{Error, Result};
use crate::ingress::decode_envelope;
use crate::transform::{align_series, Method};
use crate::value::{value_to_json, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SeriesRow {
    pub ts: EpochMillis,
    pub value: f64,
    pub source_topic: String,
}

/// Rows keyed by `(timestamp, source topic)`; a repeated key replaces the value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeriesTable {
    rows: BTreeMap<(EpochMillis, String), f64>,
}

impl SeriesTable {
    pub fn upsert(&mut self, ts: EpochMillis, value: f64, source_topic: &str) {
        self.rows.insert((ts, source_topic.to_string()), value);
    }

    /// Rows with `t0 <= ts < t1`, ordered by timestamp then topic.
    pub fn range(&self, t0: EpochMillis, t1: EpochMillis) -> Vec<SeriesRow> {
        if t0 >= t1 {
            return Vec::new();
        }
        self.rows
            .range((t0, String::new())..(t1, String::new()))
            .map(|((ts, topic), v)| SeriesRow {
                ts: *ts,
                value: *v,
                source_topic: topic.clone(),
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn rows(&self) -> Vec<SeriesRow> {
        self.range(EpochMillis::MIN, EpochMillis::MAX)
    }
}

#[derive(Serialize, Deserialize)]
struct StoreFile {
    tables: BTreeMap<String, Vec<SeriesRow>>,
}

/// Named series tables, held in memory and optionally saved to one JSON file.
#[derive(Default)]
pub struct ServingStore {
    tables: RwLock<BTreeMap<String, SeriesTable>>,
    path: Option<PathBuf>,
}

impl ServingStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Load the store file at `path`, or start empty. Call [`save`](Self::save)
    /// to write changes back.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut tables = BTreeMap::new();
        if path.exists() {
            let file: StoreFile = serde_json::from_slice(&fs::read(&path)?).map_err(|e| {
                Error::MalformedDocument(format!("serving store {}: {e}", path.display()))
            })?;
            for (name, rows) in file.tables {
                let mut t = SeriesTable::default();
                for r in rows {
                    t.upsert(r.ts, r.value, &r.source_topic);
                }
                tables.insert(name, t);
            }
        }
        Ok(Self {
            tables: RwLock::new(tables),
            path: Some(path),
        })
    }

    pub fn save(&self) -> Result<()> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let tables = self.tables.read().expect("serving lock");
        let file = StoreFile {
            tables: tables.iter().map(|(n, t)| (n.clone(), t.rows())).collect(),
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        write_atomic(path, &serde_json::to_vec(&file).expect("store serializes"))
    }

    /// Insert or replace one row, creating the table on first use.
    pub fn upsert(&self, table: &str, ts: EpochMillis, value: f64, source_topic: &str) {
        let mut tables = self.tables.write().expect("serving lock");
        tables.entry(table.to_string()).or_default().upsert(ts, value, source_topic);
    }

    /// Rows of `table` with `t0 <= ts < t1`; empty for unknown tables.
    pub fn range_query(&self, table: &str, t0: EpochMillis, t1: EpochMillis) -> Vec<SeriesRow> {
        let tables = self.tables.read().expect("serving lock");
        tables.get(table).map(|t| t.range(t0, t1)).unwrap_or_default()
    }

    pub fn table_names(&self) -> Vec<String> {
        self.tables.read().expect("serving lock").keys().cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrajectoryQuery {
    pub topics: Vec<String>,
    pub t0: EpochMillis,
    pub t1: EpochMillis,
    pub grid_millis: u64,
    pub method: Method,
}

impl TrajectoryQuery {
    pub fn validate(&self) -> Result<()> {
        if self.topics.is_empty() {
            return Err(Error::invalid("topics", "must not be empty"));
        }
        let distinct: BTreeSet<_> = self.topics.iter().collect();
        if distinct.len() != self.topics.len() {
            return Err(Error::invalid("topics", "duplicate topic"));
        }
        if self.t0 >= self.t1 {
            return Err(Error::invalid("t1", "must be greater than t0"));
        }
        if self.grid_millis == 0 {
            return Err(Error::invalid("gridMillis", "must be ≥ 1"));
        }
        Ok(())
    }

    fn sorted_topics(&self) -> Vec<String> {
        let mut t = self.topics.clone();
        t.sort();
        t
    }
}

/// One sample of the joint state: a value per topic at a shared timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub timestamp: EpochMillis,
    /// Ordered by topic name.
    pub components: Vec<(String, f64)>,
}

impl StateVector {
    pub fn dimension(&self) -> usize {
        self.components.len()
    }
}

fn rows_to_vectors(topics: &[String], rows: Vec<(EpochMillis, Vec<f64>)>) -> Vec<StateVector> {
    rows.into_iter()
        .map(|(ts, values)| StateVector {
            timestamp: ts,
            components: topics.iter().cloned().zip(values).collect(),
        })
        .collect()
}

/// Decode the numeric series of `topic` with source timestamps in `[t0, t1]`.
pub fn topic_series(
    buffer: &Buffer,
    topic: &str,
    t0: EpochMillis,
    t1: EpochMillis,
) -> Result<Vec<(EpochMillis, f64)>> {
    let info = buffer.topic_info(topic)?;
    let mut out = Vec::new();
    let mut offset = info.earliest_offset;
    loop {
        let batch = buffer.read(topic, offset, 4096)?.records;
        let Some(last) = batch.last() else { break };
        offset = last.offset + 1;
        for r in &batch {
            let e = decode_envelope(&r.payload)?;
            if e.source_ts < t0 || e.source_ts > t1 {
                continue;
            }
            let v = e.value.as_f64().ok_or_else(|| {
                Error::IncompatibleDataType(format!("topic `{topic}` carries {} values", e.data_type))
            })?;
            out.push((e.source_ts, v));
        }
    }
    Ok(out)
}

/// Align the requested topics from the buffer onto the query grid.
pub fn assemble_trajectory(q: &TrajectoryQuery, buffer: &Buffer) -> Result<Vec<StateVector>> {
    q.validate()?;
    let topics = q.sorted_topics();
    let mut series = BTreeMap::new();
    for t in &topics {
        series.insert(t.clone(), topic_series(buffer, t, q.t0, q.t1)?);
    }
    Ok(rows_to_vectors(&topics, align_series(&series, q.grid_millis, q.method)?))
}

/// Like [`assemble_trajectory`], but reads rows of one serving table, using
/// each row's source topic as the component name.
pub fn assemble_trajectory_from_table(
    q: &TrajectoryQuery,
    store: &ServingStore,
    table: &str,
) -> Result<Vec<StateVector>> {
    q.validate()?;
    let topics = q.sorted_topics();
    let mut series: BTreeMap<String, Vec<(EpochMillis, f64)>> =
        topics.iter().map(|t| (t.clone(), Vec::new())).collect();
    for row in store.range_query(table, q.t0, q.t1.saturating_add(1)) {
        if let Some(s) = series.get_mut(&row.source_topic) {
            s.push((row.ts, row.value));
        }
    }
    if let Some((t, _)) = series.iter().find(|(_, s)| s.is_empty()) {
        return Err(Error::UnknownTopic(format!("{t} (table `{table}`)")));
    }
    Ok(rows_to_vectors(&topics, align_series(&series, q.grid_millis, q.method)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Json,
}

fn json_number(v: f64) -> Json {
    value_to_json(&Value::Float64(v))
}

/// CSV: `timestamp,<topics...>` then one line per vector.
pub fn trajectory_csv(topics: &[String], trajectory: &[StateVector]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["timestamp".to_string()];
    header.extend(topics.iter().cloned());
    w.write_record(&header).expect("csv to memory");
    for sv in trajectory {
        let mut rec = vec![sv.timestamp.to_string()];
        rec.extend(sv.components.iter().map(|(_, v)| v.to_string()));
        w.write_record(&rec).expect("csv to memory");
    }
    w.into_inner().expect("csv to memory")
}

/// JSON: `[{"ts": .., "values": {topic: value}}]`.
pub fn trajectory_json(trajectory: &[StateVector]) -> Vec<u8> {
    let arr: Vec<Json> = trajectory
        .iter()
        .map(|sv| {
            let values: Map<String, Json> =
                sv.components.iter().map(|(t, v)| (t.clone(), json_number(*v))).collect();
            serde_json::json!({ "ts": sv.timestamp, "values": values })
        })
        .collect();
    serde_json::to_vec(&arr).expect("json to memory")
}

/// Write a trajectory to `path`, returning the byte count.
pub fn export_trajectory(
    topics: &[String],
    trajectory: &[StateVector],
    format: ExportFormat,
    path: &Path,
) -> Result<u64> {
    let bytes = match format {
        ExportFormat::Csv => trajectory_csv(topics, trajectory),
        ExportFormat::Json => trajectory_json(trajectory),
    };
    write_file(path, &bytes)
}

/// Write table rows to `path` as CSV (`timestamp,topic,value`) or JSON
/// (`[{"ts","topic","value"}]`), returning the byte count.
pub fn export_rows(rows: &[SeriesRow], format: ExportFormat, path: &Path) -> Result<u64> {
    let bytes = match format {
        ExportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["timestamp", "topic", "value"]).expect("csv to memory");
            for r in rows {
                w.write_record([r.ts.to_string(), r.source_topic.clone(), r.value.to_string()])
                    .expect("csv to memory");
            }
            w.into_inner().expect("csv to memory")
        }
        ExportFormat::Json => {
            let arr: Vec<Json> = rows
                .iter()
                .map(|r| serde_json::json!({ "ts": r.ts, "topic": r.source_topic, "value": json_number(r.value) }))
                .collect();
            serde_json::to_vec(&arr).expect("json to memory")
        }
    };
    write_file(path, &bytes)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<u64> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    f.flush()?;
    Ok(bytes.len() as u64)
}

/// Parse CSV produced by [`trajectory_csv`].
pub fn parse_trajectory_csv(bytes: &[u8]) -> Result<(Vec<String>, Vec<StateVector>)> {
    let bad = |e: csv::Error| Error::MalformedDocument(e.to_string());
    let mut r = csv::Reader::from_reader(bytes);
    let header = r.headers().map_err(bad)?.clone();
    if header.get(0) != Some("timestamp") {
        return Err(Error::MalformedDocument("first column must be `timestamp`".into()));
    }
    let topics: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(bad)?;
        let num = |s: &str| Error::MalformedDocument(format!("not a number: {s}"));
        let ts = rec[0].parse().map_err(|_| num(&rec[0]))?;
        let mut components = Vec::with_capacity(topics.len());
        for (t, field) in topics.iter().zip(rec.iter().skip(1)) {
            components.push((t.clone(), field.parse::<f64>().map_err(|_| num(field))?));
        }
        out.push(StateVector {
            timestamp: ts,
            components,
        });
    }
    Ok((topics, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upsert_and_range() {
        let s = ServingStore::in_memory();
        s.upsert("t", 10, 1.0, "a");
        assert_eq!(s.range_query("t", 0, 11).len(), 1);
        assert!(s.range_query("t", 11, 20).is_empty());
        assert!(s.range_query("t", 0, 10).is_empty());
        s.upsert("t", 10, 2.0, "a");
        let rows = s.range_query("t", 0, 100);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].value, 2.0);
        assert!(s.range_query("missing", 0, 100).is_empty());
    }

    #[test]
    fn csv_shapes() {
        let topics = vec!["a".to_string(), "b,c".to_string()];
        assert_eq!(trajectory_csv(&topics, &[]), b"timestamp,a,\"b,c\"\n");
        let traj = vec![
            StateVector {
                timestamp: 0,
                components: vec![("a".into(), 1.5), ("b,c".into(), -2.0)],
            },
            StateVector {
                timestamp: 100,
                components: vec![("a".into(), 0.1), ("b,c".into(), 1e-300)],
            },
        ];
        let csv = trajectory_csv(&topics, &traj);
        assert_eq!(String::from_utf8_lossy(&csv).lines().count(), 3);
        assert_eq!(parse_trajectory_csv(&csv).unwrap(), (topics, traj));
    }

    #[test]
    fn json_shape() {
        let traj = vec![StateVector {
            timestamp: 5,
            components: vec![("a".into(), 1.0), ("b".into(), 2.5)],
        }];
        assert_eq!(
            String::from_utf8(trajectory_json(&traj)).unwrap(),
            r#"[{"ts":5,"values":{"a":1.0,"b":2.5}}]"#
        );
    }

    #[test]
    fn store_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("serving.json");
        let s = ServingStore::open(&path).unwrap();
        s.upsert("t", 1, 1.0, "a");
        s.upsert("t", 2, 2.0, "b");
        s.save().unwrap();
        let again = ServingStore::open(&path).unwrap();
        assert_eq!(again.range_query("t", 0, 10), s.range_query("t", 0, 10));
    }
}
