//! Deterministic operator pipelines over buffered envelopes.
//!
//! A pipeline reads offset ranges of its input topics, splits the envelopes
//! into series keyed by `(topic, nodeRef)`, applies its operators in order and
//! writes the result to a sink topic or a serving table.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::buffer::Buffer;
use crate::clock::EpochMillis;
use crate::error::{Error, Result};
use crate::ingress::{append_envelope, decode_envelope, CodecId, Envelope, Meta};
use crate::query_model::from_json_with_paths;
use crate::serving::ServingStore;
use crate::value::{DataType, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Linear,
    Hold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggFn {
    Mean,
    Min,
    Max,
    Sum,
    Count,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cmp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl Cmp {
    fn holds(self, a: f64, b: f64) -> bool {
        match self {
            Cmp::Lt => a < b,
            Cmp::Le => a <= b,
            Cmp::Gt => a > b,
            Cmp::Ge => a >= b,
            Cmp::Eq => a == b,
            Cmp::Ne => a != b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum MetaField {
    DisplayName,
    EngineeringUnit,
    AddressSpacePath,
    MetaKey,
    DeviceId,
    NodeRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "on", rename_all = "camelCase", deny_unknown_fields)]
pub enum Predicate {
    /// Numeric comparison `value <cmp> operand`. Non-numeric values pass.
    Value { cmp: Cmp, value: f64 },
    /// String equality on an envelope or metadata field. Inline fields never
    /// match reference-mode envelopes.
    Meta { field: MetaField, equals: String },
}

impl Predicate {
    fn matches(&self, e: &Envelope) -> bool {
        match self {
            Predicate::Value { cmp, value } => match e.value.as_f64() {
                Some(v) => cmp.holds(v, *value),
                None => true,
            },
            Predicate::Meta { field, equals } => {
                let inline = match &e.meta {
                    Meta::Inline(m) => Some(m),
                    Meta::Reference(_) => None,
                };
                let actual = match field {
                    MetaField::DisplayName => inline.map(|m| m.display_name.as_str()),
                    MetaField::EngineeringUnit => inline.map(|m| m.engineering_unit.as_str()),
                    MetaField::AddressSpacePath => inline.map(|m| m.address_space_path.as_str()),
                    MetaField::MetaKey => e.metadata_key(),
                    MetaField::DeviceId => Some(e.device_id.as_str()),
                    MetaField::NodeRef => Some(e.node_ref.as_str()),
                };
                actual == Some(equals.as_str())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", deny_unknown_fields)]
pub enum OperatorSpec {
    Filter {
        predicate: Predicate,
    },
    #[serde(rename_all = "camelCase")]
    MapScale {
        factor: f64,
        offset: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        new_unit: Option<String>,
    },
    #[serde(rename_all = "camelCase")]
    Aggregate {
        #[serde(rename = "fn")]
        func: AggFn,
        window_millis: u64,
    },
    #[serde(rename_all = "camelCase")]
    Resample {
        grid_millis: u64,
        method: Method,
    },
    #[serde(rename_all = "camelCase")]
    Align {
        grid_millis: u64,
        method: Method,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub enum Sink {
    Topic(String),
    Table(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PipelineSpec {
    pub name: String,
    pub input_topics: Vec<String>,
    #[serde(default)]
    pub operators: Vec<OperatorSpec>,
    pub sink: Sink,
}

impl PipelineSpec {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::invalid("name", "must not be empty"));
        }
        if self.input_topics.is_empty() {
            return Err(Error::invalid("inputTopics", "must not be empty"));
        }
        let distinct: BTreeSet<_> = self.input_topics.iter().collect();
        if distinct.len() != self.input_topics.len() {
            return Err(Error::invalid("inputTopics", "duplicate topic"));
        }
        match &self.sink {
            Sink::Topic(s) | Sink::Table(s) if s.is_empty() => {
                return Err(Error::invalid("sink", "name must not be empty"))
            }
            _ => {}
        }
        for (i, op) in self.operators.iter().enumerate() {
            let path = |f: &str| format!("operators[{i}].{f}");
            match op {
                OperatorSpec::Aggregate { window_millis: 0, .. } => {
                    return Err(Error::invalid(path("windowMillis"), "must be ≥ 1"))
                }
                OperatorSpec::Resample { grid_millis: 0, .. } | OperatorSpec::Align { grid_millis: 0, .. } => {
                    return Err(Error::invalid(path("gridMillis"), "must be ≥ 1"))
                }
                OperatorSpec::Align { .. } if i != 0 => {
                    return Err(Error::invalid(path("kind"), "align must be the first operator"))
                }
                OperatorSpec::Align { .. } if self.input_topics.len() < 2 => {
                    return Err(Error::invalid(path("kind"), "align requires at least 2 input topics"))
                }
                OperatorSpec::MapScale { factor, offset, .. } if !factor.is_finite() || !offset.is_finite() => {
                    return Err(Error::invalid(path("factor"), "must be finite"))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

pub fn parse_pipeline(text: &str) -> Result<PipelineSpec> {
    let spec: PipelineSpec = from_json_with_paths(text)?;
    spec.validate()?;
    Ok(spec)
}

pub fn load_pipeline(path: &Path) -> Result<PipelineSpec> {
    parse_pipeline(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TransformReport {
    pub records_in: u64,
    pub records_out: u64,
}

/// Resample onto grid points `g = k * grid` with `first <= g <= last`.
pub fn resample_series(
    series: &[(EpochMillis, f64)],
    grid_millis: u64,
    method: Method,
) -> Result<Vec<(EpochMillis, f64)>> {
    check_series(series)?;
    let grid = grid_millis.max(1) as EpochMillis;
    let (first, last) = (series[0].0, series[series.len() - 1].0);
    let mut out = Vec::new();
    let mut i = 0;
    let mut g = first.div_euclid(grid) * grid;
    if g < first {
        g += grid;
    }
    while g <= last {
        while i + 1 < series.len() && series[i + 1].0 <= g {
            i += 1;
        }
        let (t0, v0) = series[i];
        let v = if t0 == g || method == Method::Hold {
            v0
        } else {
            let (t1, v1) = series[i + 1];
            v0 + (v1 - v0) * ((g - t0) as f64 / (t1 - t0) as f64)
        };
        out.push((g, v));
        g += grid;
    }
    Ok(out)
}

fn check_series(series: &[(EpochMillis, f64)]) -> Result<()> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    if let Some(i) = series.windows(2).position(|w| w[1].0 <= w[0].0) {
        return Err(Error::UnsortedSeries(i + 1));
    }
    Ok(())
}

/// Resample every series onto the shared grid inside the intersection of
/// their time ranges. Vector components follow the map's key order.
pub fn align_series(
    series_by_topic: &BTreeMap<String, Vec<(EpochMillis, f64)>>,
    grid_millis: u64,
    method: Method,
) -> Result<Vec<(EpochMillis, Vec<f64>)>> {
    if series_by_topic.is_empty() {
        return Err(Error::EmptySeries);
    }
    let mut lo = EpochMillis::MIN;
    let mut hi = EpochMillis::MAX;
    for s in series_by_topic.values() {
        check_series(s)?;
        lo = lo.max(s[0].0);
        hi = hi.min(s[s.len() - 1].0);
    }
    if lo > hi {
        return Err(Error::EmptyIntersection);
    }
    let mut columns = Vec::new();
    for s in series_by_topic.values() {
        let r = resample_series(s, grid_millis, method)?;
        columns.push(r.into_iter().filter(|(t, _)| *t >= lo && *t <= hi).collect::<Vec<_>>());
    }
    let n = columns[0].len();
    Ok((0..n)
        .map(|i| (columns[0][i].0, columns.iter().map(|c| c[i].1).collect()))
        .collect())
}

type SeriesKey = (String, String);

fn numeric(e: &Envelope, op: &str) -> Result<f64> {
    e.value.as_f64().ok_or_else(|| {
        Error::IncompatibleDataType(format!("{op} over {} values of {}", e.data_type, e.node_ref))
    })
}

fn set_value(e: &mut Envelope, v: Value) {
    e.data_type = v.data_type();
    e.value = v;
    if let Meta::Inline(m) = &mut e.meta {
        m.data_type = e.data_type;
    }
}

fn derived(template: &Envelope, ts: EpochMillis, v: Value) -> Envelope {
    let mut e = template.clone();
    e.source_ts = ts;
    set_value(&mut e, v);
    e
}

fn map_scale(series: &mut [Envelope], factor: f64, offset: f64, new_unit: Option<&str>) -> Result<()> {
    let identity = factor == 1.0 && offset == 0.0;
    for e in series.iter_mut() {
        if !e.data_type.is_numeric() {
            if identity {
                continue;
            }
            numeric(e, "mapScale")?;
        }
        if !identity {
            let v = numeric(e, "mapScale")? * factor + offset;
            set_value(e, Value::Float64(v));
        }
        if let (Some(u), Meta::Inline(m)) = (new_unit, &mut e.meta) {
            m.engineering_unit = u.to_string();
        }
    }
    Ok(())
}

fn aggregate_window(func: AggFn, window: &[Envelope]) -> Result<Value> {
    let all_int = window.iter().all(|e| e.data_type == DataType::Int64);
    if func == AggFn::Count {
        return Ok(Value::Int64(window.len() as i64));
    }
    if all_int && func != AggFn::Mean {
        let mut ints = window.iter().map(|e| match e.value {
            Value::Int64(i) => i,
            _ => unreachable!("checked above"),
        });
        return Ok(Value::Int64(match func {
            AggFn::Min => ints.min().expect("non-empty window"),
            AggFn::Max => ints.max().expect("non-empty window"),
            _ => ints
                .try_fold(0i64, i64::checked_add)
                .ok_or_else(|| Error::IncompatibleDataType("int64 sum overflows".into()))?,
        }));
    }
    let mut vals = Vec::with_capacity(window.len());
    for e in window {
        vals.push(numeric(e, "aggregate")?);
    }
    let sum = || vals.iter().sum::<f64>();
    Ok(Value::Float64(match func {
        AggFn::Mean => sum() / vals.len() as f64,
        AggFn::Min => vals.iter().copied().fold(f64::INFINITY, f64::min),
        AggFn::Max => vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        _ => sum(),
    }))
}

/// Tumbling windows `[k * w, (k + 1) * w)` over source time. Each output is
/// stamped with its window start.
fn aggregate(series: &[Envelope], func: AggFn, window_millis: u64) -> Result<Vec<Envelope>> {
    for e in series {
        numeric(e, "aggregate")?;
    }
    let w = window_millis as EpochMillis;
    let mut out = Vec::new();
    let mut start = 0;
    while start < series.len() {
        let k = series[start].source_ts.div_euclid(w);
        let mut end = start + 1;
        while end < series.len() && series[end].source_ts.div_euclid(w) == k {
            end += 1;
        }
        let window = &series[start..end];
        let v = aggregate_window(func, window)?;
        out.push(derived(&window[window.len() - 1], k * w, v));
        start = end;
    }
    Ok(out)
}

fn points(series: &[Envelope], op: &str) -> Result<Vec<(EpochMillis, f64)>> {
    series.iter().map(|e| Ok((e.source_ts, numeric(e, op)?))).collect()
}

fn resample(series: &[Envelope], grid_millis: u64, method: Method) -> Result<Vec<Envelope>> {
    if series.is_empty() {
        return Ok(Vec::new());
    }
    let pts = points(series, "resample")?;
    let template = &series[series.len() - 1];
    Ok(resample_series(&pts, grid_millis, method)?
        .into_iter()
        .map(|(t, v)| derived(template, t, Value::Float64(v)))
        .collect())
}

fn align(
    state: BTreeMap<SeriesKey, Vec<Envelope>>,
    grid_millis: u64,
    method: Method,
) -> Result<BTreeMap<SeriesKey, Vec<Envelope>>> {
    let mut by_topic: BTreeMap<String, Vec<Envelope>> = BTreeMap::new();
    for ((topic, _), s) in state {
        by_topic.entry(topic).or_default().extend(s);
    }
    let mut pts = BTreeMap::new();
    for (topic, s) in &by_topic {
        pts.insert(topic.clone(), points(s, "align")?);
    }
    let rows = align_series(&pts, grid_millis, method)?;
    let mut out = BTreeMap::new();
    for (col, (topic, s)) in by_topic.iter().enumerate() {
        let template = &s[s.len() - 1];
        let aligned = rows
            .iter()
            .map(|(t, vals)| derived(template, *t, Value::Float64(vals[col])))
            .collect();
        out.insert((topic.clone(), template.node_ref.clone()), aligned);
    }
    Ok(out)
}

/// Apply `operators` to series keyed by `(topic, nodeRef)`.
pub fn apply_operators(
    mut state: BTreeMap<SeriesKey, Vec<Envelope>>,
    operators: &[OperatorSpec],
) -> Result<BTreeMap<SeriesKey, Vec<Envelope>>> {
    for op in operators {
        state = match op {
            OperatorSpec::Align { grid_millis, method } => align(state, *grid_millis, *method)?,
            other => {
                let mut next = BTreeMap::new();
                for (key, mut s) in state {
                    let s = match other {
                        OperatorSpec::Filter { predicate } => {
                            s.retain(|e| predicate.matches(e));
                            s
                        }
                        OperatorSpec::MapScale {
                            factor,
                            offset,
                            new_unit,
                        } => {
                            map_scale(&mut s, *factor, *offset, new_unit.as_deref())?;
                            s
                        }
                        OperatorSpec::Aggregate { func, window_millis } => aggregate(&s, *func, *window_millis)?,
                        OperatorSpec::Resample { grid_millis, method } => resample(&s, *grid_millis, *method)?,
                        OperatorSpec::Align { .. } => unreachable!("handled above"),
                    };
                    next.insert(key, s);
                }
                next
            }
        };
    }
    Ok(state)
}

/// Decode `[from, to)` of each input topic. Missing bounds default to the
/// earliest and next offsets.
pub fn read_inputs(
    buffer: &Buffer,
    topics: &[String],
    from_offsets: &BTreeMap<String, u64>,
    to_offsets: &BTreeMap<String, u64>,
) -> Result<Vec<(EpochMillis, Envelope)>> {
    let mut out = Vec::new();
    for topic in topics {
        let info = buffer.topic_info(topic)?;
        let mut offset = from_offsets.get(topic).copied().unwrap_or(info.earliest_offset);
        let to = to_offsets.get(topic).copied().unwrap_or(info.next_offset).min(info.next_offset);
        while offset < to {
            let batch = buffer.read(topic, offset, (to - offset).min(4096) as usize)?.records;
            let Some(last) = batch.last() else { break };
            offset = last.offset + 1;
            for r in batch.into_iter().filter(|r| r.offset < to) {
                out.push((r.ingest_ts, decode_envelope(&r.payload)?));
            }
        }
    }
    Ok(out)
}

/// Run a pipeline over the given offset ranges and write its output.
///
/// Output envelopes carry `pipeline = spec.name` and, for topic sinks, the
/// largest ingest timestamp among the inputs, which keeps reruns over the
/// same ranges byte-identical.
pub fn run_pipeline(
    spec: &PipelineSpec,
    buffer: &Buffer,
    serving: &ServingStore,
    from_offsets: &BTreeMap<String, u64>,
    to_offsets: &BTreeMap<String, u64>,
) -> Result<TransformReport> {
    spec.validate()?;
    let inputs = read_inputs(buffer, &spec.input_topics, from_offsets, to_offsets)?;
    let mut report = TransformReport {
        records_in: inputs.len() as u64,
        records_out: 0,
    };
    let watermark = inputs.iter().map(|(ts, _)| *ts).max().unwrap_or(0);
    let mut state: BTreeMap<SeriesKey, Vec<Envelope>> = BTreeMap::new();
    for (_, e) in inputs {
        state.entry((e.topic.clone(), e.node_ref.clone())).or_default().push(e);
    }
    let state = apply_operators(state, &spec.operators)?;
    match &spec.sink {
        Sink::Topic(sink) => {
            for e in state.into_values().flatten() {
                let e = Envelope {
                    topic: sink.clone(),
                    ingest_ts: watermark,
                    pipeline: Some(spec.name.clone()),
                    ..e
                };
                append_envelope(buffer, e, CodecId::Json)?;
                report.records_out += 1;
            }
        }
        Sink::Table(table) => {
            for e in state.into_values().flatten() {
                serving.upsert(table, e.source_ts, numeric(&e, "table sink")?, &e.topic);
                report.records_out += 1;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingress::{encode_envelope, InlineMeta, SCHEMA_VERSION};

    fn env(topic: &str, ts: EpochMillis, v: Value) -> Envelope {
        Envelope {
            schema_version: SCHEMA_VERSION,
            topic: topic.into(),
            device_id: "dev-1".into(),
            node_ref: format!("ns=2;s={topic}"),
            seq: 0,
            data_type: v.data_type(),
            value: v,
            source_ts: ts,
            ingest_ts: ts,
            meta: Meta::Inline(InlineMeta {
                display_name: topic.into(),
                engineering_unit: "m".into(),
                data_type: DataType::Float64,
                address_space_path: topic.into(),
                tags: vec![],
            }),
            pipeline: None,
        }
    }

    fn fill(buffer: &Buffer, topic: &str, pts: &[(EpochMillis, Value)]) {
        for (ts, v) in pts {
            let e = env(topic, *ts, v.clone());
            append_envelope(buffer, e, CodecId::Json).unwrap();
        }
    }

    fn spec(ops: Vec<OperatorSpec>, sink: Sink) -> PipelineSpec {
        PipelineSpec {
            name: "p".into(),
            input_topics: vec!["a".into()],
            operators: ops,
            sink,
        }
    }

    #[test]
    fn resample_examples() {
        let s = [(0, 0.0), (10_000, 10.0)];
        let lin: Vec<f64> = resample_series(&s, 2000, Method::Linear).unwrap().iter().map(|p| p.1).collect();
        assert_eq!(lin, vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        let hold: Vec<f64> = resample_series(&s, 2000, Method::Hold).unwrap().iter().map(|p| p.1).collect();
        assert_eq!(hold, vec![0.0, 0.0, 0.0, 0.0, 0.0, 10.0]);
        assert!(matches!(resample_series(&[], 10, Method::Linear), Err(Error::EmptySeries)));
        assert!(matches!(
            resample_series(&[(0, 0.0), (0, 1.0)], 10, Method::Linear),
            Err(Error::UnsortedSeries(1))
        ));
        // No extrapolation on either side.
        let r = resample_series(&[(-150, 1.0), (250, 2.0)], 100, Method::Hold).unwrap();
        assert_eq!(r.iter().map(|p| p.0).collect::<Vec<_>>(), vec![-100, 0, 100, 200]);
    }

    #[test]
    fn align_examples() {
        let mut m = BTreeMap::new();
        m.insert("a".to_string(), vec![(0, 0.0), (100, 1.0)]);
        m.insert("b".to_string(), vec![(0, 5.0), (100, 5.0)]);
        let rows = align_series(&m, 50, Method::Linear).unwrap();
        assert_eq!(rows, vec![(0, vec![0.0, 5.0]), (50, vec![0.5, 5.0]), (100, vec![1.0, 5.0])]);
        m.insert("c".to_string(), vec![(200, 0.0), (300, 0.0)]);
        assert!(matches!(align_series(&m, 50, Method::Linear), Err(Error::EmptyIntersection)));
    }

    #[test]
    fn identity_pipeline_readdresses() {
        let b = Buffer::in_memory();
        fill(&b, "a", &[(0, 1.0.into()), (10, Value::String("x".into()))]);
        let serving = ServingStore::in_memory();
        let r = run_pipeline(&spec(vec![], Sink::Topic("out".into())), &b, &serving, &BTreeMap::new(), &BTreeMap::new())
            .unwrap();
        assert_eq!(r, TransformReport { records_in: 2, records_out: 2 });
        let out = b.read("out", 0, 10).unwrap().records;
        for (i, rec) in out.iter().enumerate() {
            let e = decode_envelope(&rec.payload).unwrap();
            let orig = decode_envelope(&b.read("a", i as u64, 1).unwrap().records[0].payload).unwrap();
            assert_eq!(e.topic, "out");
            assert_eq!(e.pipeline.as_deref(), Some("p"));
            assert_eq!((e.value, e.source_ts, e.meta), (orig.value, orig.source_ts, orig.meta));
        }
    }

    #[test]
    fn mean_of_one_window() {
        let b = Buffer::in_memory();
        fill(&b, "a", &[(0, 1.0.into()), (300, 2.0.into()), (999, 3.0.into())]);
        let serving = ServingStore::in_memory();
        let ops = vec![OperatorSpec::Aggregate {
            func: AggFn::Mean,
            window_millis: 1000,
        }];
        run_pipeline(&spec(ops, Sink::Table("t".into())), &b, &serving, &BTreeMap::new(), &BTreeMap::new()).unwrap();
        let rows = serving.range_query("t", 0, 1000);
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].ts, rows[0].value, rows[0].source_topic.as_str()), (0, 2.0, "a"));
    }

    #[test]
    fn int_aggregates_stay_exact() {
        let s: Vec<Envelope> = [5i64, -3, 9, i64::MAX / 4].iter().enumerate().map(|(i, v)| env("a", i as i64, (*v).into())).collect();
        let sum = aggregate(&s, AggFn::Sum, 100).unwrap();
        assert_eq!(sum[0].value, Value::Int64(11 + i64::MAX / 4));
        assert_eq!(aggregate(&s, AggFn::Min, 100).unwrap()[0].value, Value::Int64(-3));
        assert_eq!(aggregate(&s, AggFn::Count, 100).unwrap()[0].value, Value::Int64(4));
        assert_eq!(aggregate(&s, AggFn::Mean, 100).unwrap()[0].data_type, DataType::Float64);
    }

    #[test]
    fn numeric_operators_reject_strings() {
        let s = vec![env("a", 0, Value::String("x".into()))];
        assert!(matches!(aggregate(&s, AggFn::Mean, 10), Err(Error::IncompatibleDataType(_))));
        let mut m = s.clone();
        assert!(matches!(map_scale(&mut m, 2.0, 0.0, None), Err(Error::IncompatibleDataType(_))));
        let mut m = s.clone();
        map_scale(&mut m, 1.0, 0.0, None).unwrap();
        assert_eq!(m, s);
        let f = Predicate::Value { cmp: Cmp::Gt, value: 0.0 };
        assert!(f.matches(&s[0]));
    }

    #[test]
    fn map_scale_updates_inline_unit_only() {
        let mut s = vec![env("a", 0, 10.0.into())];
        let mut r = s.clone();
        r[0].meta = Meta::Reference("dev-1:ns=2;s=a".into());
        map_scale(&mut s, 1.8, 32.0, Some("°F")).unwrap();
        map_scale(&mut r, 1.8, 32.0, Some("°F")).unwrap();
        assert_eq!(s[0].value, Value::Float64(50.0));
        match &s[0].meta {
            Meta::Inline(m) => assert_eq!(m.engineering_unit, "°F"),
            _ => unreachable!(),
        }
        assert_eq!(r[0].meta, Meta::Reference("dev-1:ns=2;s=a".into()));
    }

    #[test]
    fn spec_json_and_validation() {
        let text = r#"{"name":"p","inputTopics":["a","b"],"operators":[
            {"kind":"align","gridMillis":100,"method":"linear"},
            {"kind":"filter","predicate":{"on":"value","cmp":"ge","value":0.5}},
            {"kind":"mapScale","factor":2.0,"offset":1.0,"newUnit":"V"},
            {"kind":"aggregate","fn":"max","windowMillis":1000},
            {"kind":"resample","gridMillis":500,"method":"hold"}],
            "sink":{"table":"t"}}"#;
        let s = parse_pipeline(text).unwrap();
        assert_eq!(s.operators.len(), 5);
        assert_eq!(s.sink, Sink::Table("t".into()));
        let mut bad = s.clone();
        bad.operators.swap(0, 1);
        assert!(matches!(bad.validate(), Err(Error::InvalidValue { .. })));
        let mut bad = s.clone();
        bad.input_topics.pop();
        assert!(matches!(bad.validate(), Err(Error::InvalidValue { .. })));
        assert!(matches!(
            parse_pipeline(r#"{"name":"p","inputTopics":["a"],"operators":[{"kind":"resample","gridMillis":0,"method":"linear"}],"sink":{"topic":"o"}}"#),
            Err(Error::InvalidValue { .. })
        ));
        assert!(parse_pipeline(r#"{"name":"p","inputTopics":["a"],"sink":{"topic":"o"},"extra":1}"#).is_err());
    }

    #[test]
    fn reruns_are_byte_identical() {
        let b = Buffer::in_memory();
        fill(&b, "a", &[(0, 1.0.into()), (700, 2.0.into()), (1500, 4.0.into())]);
        let ops = vec![OperatorSpec::Resample {
            grid_millis: 250,
            method: Method::Linear,
        }];
        let sp = spec(ops, Sink::Topic("o".into()));
        let serving = ServingStore::in_memory();
        let none = BTreeMap::new();
        let r1 = run_pipeline(&sp, &b, &serving, &none, &none).unwrap();
        let first: Vec<_> = b.read("o", 0, 100).unwrap().records;
        let mut to = BTreeMap::new();
        to.insert("a".to_string(), 3);
        run_pipeline(&sp, &b, &serving, &none, &to).unwrap();
        let second: Vec<_> = b.read("o", r1.records_out, 100).unwrap().records;
        assert_eq!(first.len(), second.len());
        for (x, y) in first.iter().zip(&second) {
            let (mut ex, mut ey) = (decode_envelope(&x.payload).unwrap(), decode_envelope(&y.payload).unwrap());
            ex.seq = 0;
            ey.seq = 0;
            assert_eq!(encode_envelope(&ex, CodecId::Json), encode_envelope(&ey, CodecId::Json));
        }
    }
}
