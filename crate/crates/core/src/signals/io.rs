//! Signal files: one JSON header line followed by little-endian interleaved
//! `f32` I/Q pairs. Dataset manifests are plain JSON arrays.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex32;
use serde::{Deserialize, Serialize};

use super::{IqSignal, MotionClass};
use crate::error::{Error, ParseError, Result};

pub const SIGNAL_FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalHeader {
    pub version: u64,
    pub sample_rate_hz: f64,
    pub carrier_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<MotionClass>,
    pub count: usize,
}

pub fn encode_signal(signal: &IqSignal) -> Vec<u8> {
    let header = SignalHeader {
        version: SIGNAL_FORMAT_VERSION,
        sample_rate_hz: signal.sample_rate_hz(),
        carrier_hz: signal.carrier_hz(),
        label: signal.label(),
        count: signal.len(),
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    out.reserve(signal.len() * 8);
    for s in signal.samples() {
        out.extend_from_slice(&s.re.to_le_bytes());
        out.extend_from_slice(&s.im.to_le_bytes());
    }
    out
}

pub fn decode_signal(bytes: &[u8]) -> Result<IqSignal, ParseError> {
    if bytes.is_empty() {
        return Err(ParseError::Empty);
    }
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| ParseError::MalformedHeader("missing header terminator".into()))?;
    let header_text = std::str::from_utf8(&bytes[..newline])
        .map_err(|e| ParseError::MalformedHeader(e.to_string()))?;
    let raw: serde_json::Value =
        serde_json::from_str(header_text).map_err(|e| ParseError::MalformedHeader(e.to_string()))?;
    let version = raw
        .get("version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| ParseError::MalformedHeader("missing integer 'version'".into()))?;
    if version != SIGNAL_FORMAT_VERSION {
        return Err(ParseError::UnknownVersion(version));
    }
    let header: SignalHeader =
        serde_json::from_value(raw).map_err(|e| ParseError::MalformedHeader(e.to_string()))?;

    let payload = &bytes[newline + 1..];
    let expected = header
        .count
        .checked_mul(8)
        .ok_or_else(|| ParseError::MalformedHeader("count overflows".into()))?;
    if payload.len() < expected {
        return Err(ParseError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(ParseError::TrailingData(payload.len() - expected));
    }
    let samples = payload
        .chunks_exact(8)
        .map(|c| {
            Complex32::new(
                f32::from_le_bytes([c[0], c[1], c[2], c[3]]),
                f32::from_le_bytes([c[4], c[5], c[6], c[7]]),
            )
        })
        .collect();
    IqSignal::new(samples, header.sample_rate_hz, header.carrier_hz, header.label)
        .map_err(|e| ParseError::MalformedHeader(e.to_string()))
}

pub fn write_signal(signal: &IqSignal, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_signal(signal)).map_err(|e| Error::io(path, e))
}

pub fn read_signal(path: impl AsRef<Path>) -> Result<IqSignal> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode_signal(&bytes)?)
}

/// One recording in a dataset manifest. `path` is relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: MotionClass,
    pub speed: f64,
    pub angle_deg: f64,
    #[serde(default)]
    pub seed: u64,
}

pub fn write_manifest(entries: &[ManifestEntry], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(entries).expect("manifest serializes");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
