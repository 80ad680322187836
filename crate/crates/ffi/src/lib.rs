//! C ABI over the engine.
//!
//! Every fallible function returns an [`IeStatus`]. On failure a message is
//! kept per thread and can be read with [`ie_last_error_message`]. Strings
//! returned through `out` parameters are owned by the caller and released
//! with [`ie_string_free`]; handles are released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use info_engine::bench::{run_bench, BenchConfig, Scenario};
use info_engine::egress::{subscribe, SubscribeMode, Subscription};
use info_engine::ingress::{decode_envelope, encode_envelope, CodecId};
use info_engine::query_model::{parse_query_model, volume_summary};
use info_engine::serving::{assemble_trajectory, trajectory_csv, TrajectoryQuery};
use info_engine::source::{DeviceFile, SimDevice};
use info_engine::{Engine, Error, IngestConfig, MetadataMode};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IeStatus {
    Ok = 0,
    /// A null pointer, invalid UTF-8 or an out-of-range enum value.
    InvalidArgument = 1,
    /// The supplied document or value failed validation.
    Validation = 2,
    /// Unknown device, topic or metadata key.
    NotFound = 3,
    SourceUnavailable = 4,
    CorruptPayload = 5,
    RetentionViolation = 6,
    /// A series or data-type problem in a transform or trajectory.
    Data = 7,
    Io = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IeMetadataMode {
    Inline = 0,
    Reference = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IeScenario {
    A = 0,
    B = 1,
}

/// An engine with its registry, buffer and serving store.
pub struct IeEngine {
    inner: Engine,
}

/// A cursor over one topic of an engine's buffer.
pub struct IeSubscription {
    inner: Subscription,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(IeStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::MalformedDocument(_)
            | Error::MissingField(_)
            | Error::InvalidValue { .. }
            | Error::DuplicateDevice(_)
            | Error::UnresolvableNode { .. }
            | Error::NotAVariable(_) => IeStatus::Validation,
            Error::UnknownDevice(_) | Error::UnknownMetadataKey(_) | Error::UnknownTopic(_) => IeStatus::NotFound,
            Error::SourceUnavailable { .. } | Error::BadSample(_) | Error::Transport(_) => {
                IeStatus::SourceUnavailable
            }
            Error::UnknownCodec(_) | Error::CorruptPayload(_) | Error::FrameTooLarge(_) => IeStatus::CorruptPayload,
            Error::RetentionViolation { .. } => IeStatus::RetentionViolation,
            Error::EmptySeries
            | Error::UnsortedSeries(_)
            | Error::EmptyIntersection
            | Error::IncompatibleDataType(_) => IeStatus::Data,
            Error::Io(_) => IeStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(IeStatus::InvalidArgument, msg.into())
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> IeStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IeStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside the engine");
            IeStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(invalid(format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("`{name}` is not UTF-8")))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(invalid("output pointer is null"));
    }
    let c = CString::new(s).map_err(|_| invalid("result contains a NUL byte"))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn engine_mut<'a>(e: *mut IeEngine) -> Result<&'a mut Engine, Failure> {
    e.as_mut().map(|e| &mut e.inner).ok_or_else(|| invalid("engine is null"))
}

unsafe fn engine_ref<'a>(e: *const IeEngine) -> Result<&'a Engine, Failure> {
    e.as_ref().map(|e| &e.inner).ok_or_else(|| invalid("engine is null"))
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("value serializes")
}

/// Message of the last failure on this thread, or null. Valid until the next
/// call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ie_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ie_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Storage for one signal as `"<day>/day, <month>/month, <year>/year"`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ie_estimate_volume(sample_bytes: u64, rate_hz: f64, out: *mut *mut c_char) -> IeStatus {
    guard(|| {
        if !(rate_hz >= 0.0 && rate_hz.is_finite()) {
            return Err(invalid("rate must be finite and non-negative"));
        }
        put_string(out, volume_summary(sample_bytes, rate_hz))
    })
}

/// Create an in-memory engine.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ie_engine_new(out: *mut *mut IeEngine) -> IeStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("output pointer is null"));
        }
        *out = Box::into_raw(Box::new(IeEngine {
            inner: Engine::in_memory(),
        }));
        Ok(())
    })
}

/// Open or create an engine rooted in data directory `dir`.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ie_engine_open(dir: *const c_char, out: *mut *mut IeEngine) -> IeStatus {
    guard(|| {
        let dir = str_arg(dir, "dir")?;
        if out.is_null() {
            return Err(invalid("output pointer is null"));
        }
        let inner = Engine::open(dir)?;
        *out = Box::into_raw(Box::new(IeEngine { inner }));
        Ok(())
    })
}

/// Release an engine. Null is ignored.
///
/// # Safety
/// `engine` must come from `ie_engine_new` or `ie_engine_open` and not have
/// been freed. Subscriptions over it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ie_engine_free(engine: *mut IeEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Attach a simulated device described by a device-file JSON document.
///
/// # Safety
/// `engine` must be live; `name` and `device_json` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ie_engine_add_sim_device(
    engine: *mut IeEngine,
    name: *const c_char,
    device_json: *const c_char,
) -> IeStatus {
    guard(|| {
        let engine = engine_mut(engine)?;
        let name = str_arg(name, "name")?;
        let file: DeviceFile = serde_json::from_str(str_arg(device_json, "device_json")?)
            .map_err(|e| Failure::from(Error::MalformedDocument(e.to_string())))?;
        engine.add_adapter(Arc::new(SimDevice::from_file(file, name)?));
        Ok(())
    })
}

/// Register the devices of a query-model document. `out_json` receives the
/// registered device records as a JSON array.
///
/// # Safety
/// `engine` must be live, `query_model_json` NUL-terminated and `out_json`
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ie_engine_register(
    engine: *mut IeEngine,
    query_model_json: *const c_char,
    now: i64,
    out_json: *mut *mut c_char,
) -> IeStatus {
    guard(|| {
        let engine = engine_mut(engine)?;
        let doc = parse_query_model(str_arg(query_model_json, "query_model_json")?)?;
        let records = engine.register(&doc, None, now)?;
        put_string(out_json, to_json(&records))
    })
}

/// Poll the active schedule on virtual time over `[from, until]`. `mode` is
/// an [`IeMetadataMode`] value.
/// `out_json` receives the ingest report.
///
/// # Safety
/// `engine` must be live and `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ie_engine_run(
    engine: *mut IeEngine,
    mode: i32,
    from: i64,
    until: i64,
    out_json: *mut *mut c_char,
) -> IeStatus {
    guard(|| {
        let engine = engine_mut(engine)?;
        let mode = match mode {
            0 => MetadataMode::Inline,
            1 => MetadataMode::Reference,
            other => return Err(invalid(format!("unknown metadata mode {other}"))),
        };
        let report = engine.run(IngestConfig::default().with_mode(mode), from, until);
        put_string(out_json, to_json(&report))
    })
}

/// Buffer topics as a JSON array of `{name, retentionMillis, earliestOffset, nextOffset}`.
///
/// # Safety
/// `engine` must be live and `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ie_engine_topics(engine: *const IeEngine, out_json: *mut *mut c_char) -> IeStatus {
    guard(|| put_string(out_json, to_json(&engine_ref(engine)?.buffer().topics())))
}

/// Append an encoded envelope to its topic. The stored copy carries the
/// offset it landed at, which is also written to `out_offset`.
///
/// # Safety
/// `engine` must be live, `payload` valid for `len` bytes and `out_offset`
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ie_engine_append(
    engine: *const IeEngine,
    payload: *const u8,
    len: usize,
    out_offset: *mut u64,
) -> IeStatus {
    guard(|| {
        let engine = engine_ref(engine)?;
        if payload.is_null() || out_offset.is_null() {
            return Err(invalid("payload or output pointer is null"));
        }
        let e = decode_envelope(std::slice::from_raw_parts(payload, len))?;
        *out_offset = info_engine::ingress::append_envelope(engine.buffer(), e, CodecId::Json)?;
        Ok(())
    })
}

/// Subscribe to `topic` starting at `from_offset`.
///
/// # Safety
/// `engine` must be live, `topic` NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ie_subscribe(
    engine: *const IeEngine,
    topic: *const c_char,
    from_offset: u64,
    out: *mut *mut IeSubscription,
) -> IeStatus {
    guard(|| {
        let engine = engine_ref(engine)?;
        let topic = str_arg(topic, "topic")?;
        if out.is_null() {
            return Err(invalid("output pointer is null"));
        }
        let inner = subscribe(engine.buffer(), topic, SubscribeMode::FromOffset(from_offset))?;
        *out = Box::into_raw(Box::new(IeSubscription { inner }));
        Ok(())
    })
}

/// Up to `max` envelopes from the subscription's cursor as a JSON array,
/// advancing the cursor. An empty array means the subscriber is caught up.
///
/// # Safety
/// `sub` and `engine` must be live, `sub` created over `engine`, and
/// `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ie_subscription_next_json(
    sub: *mut IeSubscription,
    engine: *const IeEngine,
    max: usize,
    out_json: *mut *mut c_char,
) -> IeStatus {
    guard(|| {
        let sub = sub.as_mut().ok_or_else(|| invalid("subscription is null"))?;
        let engine = engine_ref(engine)?;
        let (records, _) = sub.inner.next_raw(engine.buffer(), max)?;
        let mut items = Vec::with_capacity(records.len());
        for r in &records {
            items.push(envelope_json(&r.payload)?);
        }
        put_string(out_json, format!("[{}]", items.join(",")))
    })
}

/// Next offset the subscription will read.
///
/// # Safety
/// `sub` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn ie_subscription_cursor(sub: *const IeSubscription) -> u64 {
    sub.as_ref().map_or(0, |s| s.inner.cursor())
}

/// Release a subscription. Null is ignored.
///
/// # Safety
/// `sub` must come from `ie_subscribe` and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ie_subscription_free(sub: *mut IeSubscription) {
    if !sub.is_null() {
        drop(Box::from_raw(sub));
    }
}

/// Align topics onto a grid and export the trajectory as CSV. The query is
/// JSON: `{"topics": [...], "t0", "t1", "gridMillis", "method": "linear"|"hold"}`.
///
/// # Safety
/// `engine` must be live, `query_json` NUL-terminated and `out_csv` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn ie_engine_trajectory_csv(
    engine: *const IeEngine,
    query_json: *const c_char,
    out_csv: *mut *mut c_char,
) -> IeStatus {
    guard(|| {
        let engine = engine_ref(engine)?;
        let q: TrajectoryQuery = serde_json::from_str(str_arg(query_json, "query_json")?)
            .map_err(|e| Failure::from(Error::MalformedDocument(e.to_string())))?;
        let traj = assemble_trajectory(&q, engine.buffer())?;
        let mut topics = q.topics.clone();
        topics.sort();
        let csv = String::from_utf8(trajectory_csv(&topics, &traj)).expect("csv is UTF-8");
        put_string(out_csv, csv)
    })
}

/// Run the message-count bench and return its report as JSON. `scenario`
/// is an [`IeScenario`] value.
///
/// # Safety
/// `out_json` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ie_bench(
    scenario: i32,
    n: u32,
    m: u32,
    k: u32,
    out_json: *mut *mut c_char,
) -> IeStatus {
    guard(|| {
        let scenario = match scenario {
            0 => Scenario::A,
            1 => Scenario::B,
            other => return Err(invalid(format!("unknown scenario {other}"))),
        };
        let cfg = BenchConfig {
            n_sources: n,
            m_sinks: m,
            ticks: k,
            scenario,
        };
        put_string(out_json, to_json(&run_bench(&cfg)?))
    })
}

fn envelope_json(payload: &[u8]) -> Result<String, Failure> {
    let e = decode_envelope(payload)?;
    let canonical = encode_envelope(&e, CodecId::Json);
    Ok(String::from_utf8(canonical[1..].to_vec()).expect("JSON codec emits UTF-8"))
}

/// Decode an encoded envelope and return its JSON body.
///
/// # Safety
/// `payload` must be valid for `len` bytes and `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ie_decode_envelope_json(payload: *const u8, len: usize, out_json: *mut *mut c_char) -> IeStatus {
    guard(|| {
        if payload.is_null() {
            return Err(invalid("payload is null"));
        }
        put_string(out_json, envelope_json(std::slice::from_raw_parts(payload, len))?)
    })
}
