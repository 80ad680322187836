//! TCP transport for source adapters. Each request and response is one
//! length-prefixed frame holding a UTF-8 JSON object tagged by `op`; the
//! response mirrors the request's `op`, or carries `"op": "error"`.

use std::io::{BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use serde::{Deserialize, Serialize};

use super::{AddressSpaceNode, Quality, Sample, SourceAdapter};
use crate::clock::EpochMillis;
use crate::error::{Error, Result};
use crate::framing::{read_frame, write_frame};
use crate::query_model::NodeRef;
use crate::value::{value_from_json, value_to_json, DataType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "camelCase")]
pub enum Request {
    Read { refs: Vec<NodeRef>, at: EpochMillis },
    Browse { root: NodeRef, depth: u32 },
    AddressSpace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WireSample {
    node_ref: NodeRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    data_type: Option<DataType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<serde_json::Value>,
    source_timestamp: EpochMillis,
    status: Quality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "camelCase")]
pub enum Response {
    Read { samples: Vec<WireSample> },
    Browse { node: AddressSpaceNode },
    AddressSpace { node: AddressSpaceNode },
    Error { kind: String, message: String },
}

impl From<&Sample> for WireSample {
    fn from(s: &Sample) -> Self {
        WireSample {
            node_ref: s.node_ref.clone(),
            data_type: s.value.as_ref().map(|v| v.data_type()),
            value: s.value.as_ref().map(value_to_json),
            source_timestamp: s.source_timestamp,
            status: s.status,
        }
    }
}

impl WireSample {
    fn into_sample(self) -> Result<Sample> {
        let value = match (self.data_type, &self.value) {
            (Some(dt), Some(v)) => Some(value_from_json(dt, v)?),
            (None, None) => None,
            _ => return Err(Error::Transport("sample value without dataType".into())),
        };
        Ok(Sample {
            node_ref: self.node_ref,
            value,
            source_timestamp: self.source_timestamp,
            status: self.status,
        })
    }
}

fn error_response(e: &Error) -> Response {
    let kind = match e {
        Error::UnresolvableNode { .. } => "unresolvableNode",
        Error::NotAVariable(_) => "notAVariable",
        _ => "internal",
    };
    let message = match e {
        Error::UnresolvableNode { node, .. } => node.clone(),
        Error::NotAVariable(n) => n.clone(),
        other => other.to_string(),
    };
    Response::Error {
        kind: kind.into(),
        message,
    }
}

fn handle(device: &dyn SourceAdapter, req: Request) -> Response {
    let result = match req {
        Request::Read { refs, at } => device.read(&refs, at).map(|samples| Response::Read {
            samples: samples.iter().map(WireSample::from).collect(),
        }),
        Request::Browse { root, depth } => device
            .browse(&root, depth)
            .map(|node| Response::Browse { node }),
        Request::AddressSpace => device
            .address_space()
            .map(|node| Response::AddressSpace { node }),
    };
    result.unwrap_or_else(|e| error_response(&e))
}

/// Answer requests on one connection until the peer hangs up.
pub fn serve_connection(stream: TcpStream, device: &dyn SourceAdapter) -> Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    while let Some(frame) = read_frame(&mut reader)? {
        let resp = match serde_json::from_slice::<Request>(&frame) {
            Ok(req) => handle(device, req),
            Err(e) => Response::Error {
                kind: "badRequest".into(),
                message: e.to_string(),
            },
        };
        let bytes = serde_json::to_vec(&resp).expect("responses serialize");
        write_frame(&mut writer, &bytes)?;
        writer.flush()?;
    }
    Ok(())
}

/// Accept connections forever, one thread per connection.
pub fn serve(listener: TcpListener, device: Arc<dyn SourceAdapter>) -> Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let device = Arc::clone(&device);
        thread::spawn(move || {
            if let Err(e) = serve_connection(stream, device.as_ref()) {
                log::warn!("sim connection closed: {e}");
            }
        });
    }
    Ok(())
}

/// Client side of the transport.
pub struct TcpSourceAdapter {
    name: String,
    stream: Mutex<(BufReader<TcpStream>, BufWriter<TcpStream>)>,
    reads: AtomicU64,
}

impl TcpSourceAdapter {
    pub fn connect(addr: impl ToSocketAddrs, device_name: impl Into<String>) -> Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self {
            name: device_name.into(),
            stream: Mutex::new((BufReader::new(stream.try_clone()?), BufWriter::new(stream))),
            reads: AtomicU64::new(0),
        })
    }

    fn call(&self, req: &Request) -> Result<Response> {
        let unavailable = |reason: String| Error::SourceUnavailable {
            device: self.name.clone(),
            reason,
        };
        let mut guard = self.stream.lock().map_err(|_| unavailable("poisoned connection".into()))?;
        let (reader, writer) = &mut *guard;
        let bytes = serde_json::to_vec(req).expect("requests serialize");
        write_frame(writer, &bytes).map_err(|e| unavailable(e.to_string()))?;
        writer.flush().map_err(|e| unavailable(e.to_string()))?;
        let frame = read_frame(reader)
            .map_err(|e| unavailable(e.to_string()))?
            .ok_or_else(|| unavailable("connection closed".into()))?;
        let resp: Response =
            serde_json::from_slice(&frame).map_err(|e| Error::Transport(e.to_string()))?;
        match resp {
            Response::Error { kind, message } => Err(match kind.as_str() {
                "unresolvableNode" => Error::unresolvable(message),
                "notAVariable" => Error::NotAVariable(message),
                _ => unavailable(message),
            }),
            other => Ok(other),
        }
    }
}

impl SourceAdapter for TcpSourceAdapter {
    fn device_name(&self) -> &str {
        &self.name
    }

    fn address_space(&self) -> Result<AddressSpaceNode> {
        match self.call(&Request::AddressSpace)? {
            Response::AddressSpace { node } => Ok(node),
            other => Err(Error::Transport(format!("unexpected response {other:?}"))),
        }
    }

    fn browse(&self, root: &NodeRef, depth: u32) -> Result<AddressSpaceNode> {
        let req = Request::Browse {
            root: root.clone(),
            depth,
        };
        match self.call(&req)? {
            Response::Browse { node } => Ok(node),
            other => Err(Error::Transport(format!("unexpected response {other:?}"))),
        }
    }

    fn read(&self, refs: &[NodeRef], at: EpochMillis) -> Result<Vec<Sample>> {
        self.reads.fetch_add(1, Ordering::SeqCst);
        let req = Request::Read {
            refs: refs.to_vec(),
            at,
        };
        match self.call(&req)? {
            Response::Read { samples } => samples.into_iter().map(WireSample::into_sample).collect(),
            other => Err(Error::Transport(format!("unexpected response {other:?}"))),
        }
    }

    fn read_count(&self) -> u64 {
        self.reads.load(Ordering::SeqCst)
    }
}
