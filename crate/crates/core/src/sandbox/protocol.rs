//! Wire format of the tracer shim: one JSON document per invocation.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pmf::OpcodeHistogram;

pub const SCHEMA_VERSION: &str = "opstab-trace/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceMode {
    Static,
    Dynamic,
}

impl TraceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceMode::Static => "static",
            TraceMode::Dynamic => "dynamic",
        }
    }
}

impl fmt::Display for TraceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome reported by the shim itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceStatus {
    Ok,
    CompileError,
    RuntimeError,
    Timeout,
    TraceError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceDocument {
    pub schema_version: String,
    pub solution_id: String,
    pub interpreter_version: String,
    pub mode: TraceMode,
    pub status: TraceStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub static_counts: Option<BTreeMap<String, u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamic_counts: Option<BTreeMap<String, u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("malformed trace document: {0}")]
    Malformed(String),
    #[error("unsupported schema_version {0:?}")]
    Schema(String),
    #[error("trace document violates protocol: {0}")]
    Invalid(&'static str),
}

impl TraceDocument {
    pub fn parse(bytes: &[u8]) -> Result<Self, ProtocolError> {
        let doc: TraceDocument =
            serde_json::from_slice(bytes).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ProtocolError::Schema(self.schema_version.clone()));
        }
        if self.interpreter_version.trim().is_empty() {
            return Err(ProtocolError::Invalid("interpreter_version is required"));
        }
        let ok = self.status == TraceStatus::Ok;
        match self.mode {
            TraceMode::Static => {
                if self.dynamic_counts.is_some() {
                    return Err(ProtocolError::Invalid("static document carries dynamic_counts"));
                }
                if ok != self.static_counts.is_some() {
                    return Err(ProtocolError::Invalid("static_counts present iff status is ok"));
                }
            }
            TraceMode::Dynamic => {
                if self.static_counts.is_some() {
                    return Err(ProtocolError::Invalid("dynamic document carries static_counts"));
                }
                if ok != self.dynamic_counts.is_some() {
                    return Err(ProtocolError::Invalid("dynamic_counts present iff status is ok"));
                }
            }
        }
        Ok(())
    }

    /// Counts of whichever mode this document carries.
    pub fn histogram(&self) -> Option<OpcodeHistogram> {
        self.static_counts
            .as_ref()
            .or(self.dynamic_counts.as_ref())
            .map(|c| OpcodeHistogram::from(c.clone()))
    }
}
