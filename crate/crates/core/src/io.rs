//! JSON documents on disk and over HTTP. Writing is canonical (pretty
//! printed, fixed field order, trailing newline), so a document read and
//! written again is byte-identical.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::CalibrationSession;
use crate::constraints::ConstraintSet;
use crate::difficulty_map::DifficultyMap;
use crate::layout::Layout;
use crate::num::Scalar;
use crate::optimizer::{OptimizerConfig, RegionMapping, TraceRecord};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported document version {0:?}, expected {FORMAT_VERSION}")]
    Version(Option<u64>),
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error("trace line {line}: {source}")]
    TraceLine { line: usize, source: serde_json::Error },
}

/// A type with a file representation.
pub trait Document: Serialize + DeserializeOwned {
    /// Whether the document carries a top-level `"version"` field.
    const VERSIONED: bool;
}

impl<F: Scalar> Document for CalibrationSession<F> {
    const VERSIONED: bool = true;
}

impl<F: Scalar> Document for DifficultyMap<F> {
    const VERSIONED: bool = true;
}

impl<F: Scalar> Document for Layout<F> {
    const VERSIONED: bool = true;
}

impl<F: Scalar> Document for ConstraintSet<F> {
    const VERSIONED: bool = false;
}

impl<F: Scalar> Document for RegionMapping<F> {
    const VERSIONED: bool = false;
}

#[derive(Serialize)]
struct Versioned<'a, T> {
    version: u32,
    #[serde(flatten)]
    body: &'a T,
}

pub fn to_json<T: Document>(doc: &T) -> String {
    let mut s = if T::VERSIONED {
        serde_json::to_string_pretty(&Versioned { version: FORMAT_VERSION, body: doc })
    } else {
        serde_json::to_string_pretty(doc)
    }
    .expect("documents serialize");
    s.push('\n');
    s
}

pub fn from_json<T: Document>(text: &str) -> Result<T, IoError> {
    if !T::VERSIONED {
        return Ok(serde_json::from_str(text)?);
    }
    let mut value: serde_json::Value = serde_json::from_str(text)?;
    let version = value.as_object_mut().and_then(|o| o.remove("version"));
    match version.as_ref().and_then(|v| v.as_u64()) {
        Some(v) if v == FORMAT_VERSION as u64 => Ok(serde_json::from_value(value)?),
        other => Err(IoError::Version(other)),
    }
}

/// Pretty JSON with a trailing newline, for documents without a version.
pub fn to_plain_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
struct TraceHeader<F> {
    config: OptimizerConfig<F>,
}

/// Line-delimited trace: a header line with the optimizer configuration,
/// then one record per step.
pub fn trace_to_jsonl<F: Scalar>(config: &OptimizerConfig<F>, records: &[TraceRecord<F>]) -> String {
    let mut out = serde_json::to_string(&TraceHeader { config: *config }).expect("config serializes");
    out.push('\n');
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn trace_from_jsonl<F: Scalar>(text: &str) -> Result<(OptimizerConfig<F>, Vec<TraceRecord<F>>), IoError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or(IoError::Json(serde::de::Error::custom("empty trace")))?;
    let header: TraceHeader<F> = serde_json::from_str(first).map_err(|source| IoError::TraceLine { line: 1, source })?;
    let records = lines
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| IoError::TraceLine { line: i + 1, source }))
        .collect::<Result<_, _>>()?;
    Ok((header.config, records))
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::File { path: path.display().to_string(), source })
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    std::fs::write(path, bytes).map_err(|source| IoError::File { path: path.display().to_string(), source })
}

pub fn read_document<T: Document>(path: &Path) -> Result<T, IoError> {
    from_json(&read_text(path)?)
}

pub fn write_document<T: Document>(path: &Path, doc: &T) -> Result<(), IoError> {
    write_bytes(path, to_json(doc).as_bytes())
}
