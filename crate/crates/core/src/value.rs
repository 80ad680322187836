//! Typed sample values.

use std::fmt;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    Float64,
    Int64,
    Boolean,
    String,
    Bytes,
}

impl DataType {
    pub const ALL: [DataType; 5] = [
        DataType::Float64,
        DataType::Int64,
        DataType::Boolean,
        DataType::String,
        DataType::Bytes,
    ];

    pub fn is_numeric(self) -> bool {
        matches!(self, DataType::Float64 | DataType::Int64)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DataType::Float64 => "float64",
            DataType::Int64 => "int64",
            DataType::Boolean => "boolean",
            DataType::String => "string",
            DataType::Bytes => "bytes",
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Float64(f64),
    Int64(i64),
    Boolean(bool),
    String(String),
    Bytes(Vec<u8>),
}

impl Value {
    pub fn data_type(&self) -> DataType {
        match self {
            Value::Float64(_) => DataType::Float64,
            Value::Int64(_) => DataType::Int64,
            Value::Boolean(_) => DataType::Boolean,
            Value::String(_) => DataType::String,
            Value::Bytes(_) => DataType::Bytes,
        }
    }

    /// Numeric view used by the numeric operators.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Float64(v) => Some(*v),
            Value::Int64(v) => Some(*v as f64),
            _ => None,
        }
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float64(v)
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int64(v)
    }
}

/// JSON form of a value. Non-finite floats become the strings `NaN`, `inf`
/// and `-inf`; bytes are base64.
pub fn value_to_json(v: &Value) -> Json {
    match v {
        Value::Float64(f) if f.is_nan() => Json::from("NaN"),
        Value::Float64(f) if f.is_infinite() => Json::from(if *f > 0.0 { "inf" } else { "-inf" }),
        Value::Float64(f) => Json::from(*f),
        Value::Int64(i) => Json::from(*i),
        Value::Boolean(b) => Json::from(*b),
        Value::String(s) => Json::from(s.as_str()),
        Value::Bytes(b) => Json::from(BASE64.encode(b)),
    }
}

pub fn value_from_json(dt: DataType, j: &Json) -> Result<Value> {
    let bad = || Error::CorruptPayload(format!("value {j} does not match dataType {dt}"));
    Ok(match dt {
        DataType::Float64 => match j {
            Json::Number(n) => Value::Float64(n.as_f64().ok_or_else(bad)?),
            Json::String(s) => match s.as_str() {
                "NaN" => Value::Float64(f64::NAN),
                "inf" => Value::Float64(f64::INFINITY),
                "-inf" => Value::Float64(f64::NEG_INFINITY),
                _ => return Err(bad()),
            },
            _ => return Err(bad()),
        },
        DataType::Int64 => Value::Int64(j.as_i64().ok_or_else(bad)?),
        DataType::Boolean => Value::Boolean(j.as_bool().ok_or_else(bad)?),
        DataType::String => Value::String(j.as_str().ok_or_else(bad)?.to_string()),
        DataType::Bytes => Value::Bytes(
            BASE64
                .decode(j.as_str().ok_or_else(bad)?)
                .map_err(|_| bad())?,
        ),
    })
}
