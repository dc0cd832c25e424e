// SPDX-License-Identifier: Apache-2.0

//! Packet trace text format: one `<time_ns> <port> <hex bytes>` per line.
//! Blank lines and `#` comments are skipped.

use std::fmt::Write as _;

use thiserror::Error;

use crate::bits::decode_hex;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub time_ns: u64,
    pub port: u16,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: time {time} is earlier than the previous record")]
    NonMonotone { line: usize, time: u64 },
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>, TraceError> {
    let mut out: Vec<TraceRecord> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let bad = |reason: &str| TraceError::MalformedLine {
            line,
            reason: reason.to_string(),
        };
        let mut parts = body.split_whitespace();
        let time_ns: u64 = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad("bad time"))?;
        let port: u16 = parts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| bad("bad port"))?;
        let hex = parts.next().unwrap_or("");
        if parts.next().is_some() {
            return Err(bad("trailing fields"));
        }
        let bytes = decode_hex(hex).ok_or_else(|| bad("packet bytes must be an even-length hex string"))?;
        if let Some(prev) = out.last() {
            if time_ns < prev.time_ns {
                return Err(TraceError::NonMonotone { line, time: time_ns });
            }
        }
        out.push(TraceRecord { time_ns, port, bytes });
    }
    Ok(out)
}

pub fn format_trace(records: &[TraceRecord]) -> String {
    let mut s = String::new();
    for r in records {
        let _ = write!(s, "{} {} ", r.time_ns, r.port);
        for b in &r.bytes {
            let _ = write!(s, "{b:02x}");
        }
        s.push('\n');
    }
    s
}

pub fn read_trace(path: &std::path::Path) -> Result<Vec<TraceRecord>, Box<dyn std::error::Error + Send + Sync>> {
    Ok(parse_trace(&std::fs::read_to_string(path)?)?)
}

pub fn write_trace(path: &std::path::Path, records: &[TraceRecord]) -> std::io::Result<()> {
    std::fs::write(path, format_trace(records))
}
