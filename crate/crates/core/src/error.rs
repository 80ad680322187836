use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("invalid value at `{path}`: {reason}")]
    InvalidValue { path: String, reason: String },

    #[error("node {node} cannot be resolved{}", device_context(.device))]
    UnresolvableNode { node: String, device: Option<String> },
    #[error("node {0} is not a variable")]
    NotAVariable(String),
    #[error("device `{0}` is already registered")]
    DuplicateDevice(String),
    #[error("unknown device `{0}`")]
    UnknownDevice(String),
    #[error("unknown metadata key `{0}`")]
    UnknownMetadataKey(String),

    #[error("source `{device}` unavailable: {reason}")]
    SourceUnavailable { device: String, reason: String },
    #[error("bad quality sample for {0}")]
    BadSample(String),

    #[error("unknown codec id 0x{0:02x}")]
    UnknownCodec(u8),
    #[error("corrupt payload: {0}")]
    CorruptPayload(String),

    #[error("unknown topic `{0}`")]
    UnknownTopic(String),
    #[error("retention violation on `{topic}`: {reason}")]
    RetentionViolation { topic: String, reason: String },

    #[error("series is empty")]
    EmptySeries,
    #[error("series timestamps are not strictly increasing at index {0}")]
    UnsortedSeries(usize),
    #[error("series have no common time range")]
    EmptyIntersection,
    #[error("incompatible data type: {0}")]
    IncompatibleDataType(String),

    #[error("frame of {0} bytes exceeds the limit")]
    FrameTooLarge(usize),
    #[error("transport: {0}")]
    Transport(String),

    #[error("I/O failure: {0}")]
    Io(#[from] io::Error),
}

fn device_context(device: &Option<String>) -> String {
    match device {
        Some(d) => format!(" on device `{d}`"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn invalid(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidValue {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn unresolvable(node: impl ToString) -> Self {
        Error::UnresolvableNode {
            node: node.to_string(),
            device: None,
        }
    }

    /// Attach a device name to an [`Error::UnresolvableNode`].
    pub fn with_device(self, name: &str) -> Self {
        match self {
            Error::UnresolvableNode { node, device: None } => Error::UnresolvableNode {
                node,
                device: Some(name.to_string()),
            },
            other => other,
        }
    }

    /// Errors caused by the content of user-supplied documents or arguments,
    /// as opposed to failures while the engine was running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::MalformedDocument(_)
                | Error::MissingField(_)
                | Error::InvalidValue { .. }
                | Error::DuplicateDevice(_)
                | Error::UnresolvableNode { .. }
                | Error::NotAVariable(_)
        )
    }
}
