// SPDX-License-Identifier: Apache-2.0

//! Reassembles packet bits from a PHV: listed fields and constants in order,
//! then the payload that followed the parsed headers.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::bits::{decode_hex, BitBuffer};
use crate::phv::{meta, Phv, Schema};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeparseNode {
    /// With `required`, an invalid field is an error instead of being skipped.
    Field { id: String, required: bool },
    Const(BitBuffer),
}

impl DeparseNode {
    pub fn field(id: &str) -> Self {
        DeparseNode::Field {
            id: id.to_string(),
            required: false,
        }
    }

    pub fn len_if_emitted(&self, phv: &Phv) -> usize {
        match self {
            DeparseNode::Field { id, .. } => phv.get(id).map(BitBuffer::len).unwrap_or(0),
            DeparseNode::Const(b) => b.len(),
        }
    }
}

impl fmt::Display for DeparseNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeparseNode::Field { id, required: false } => f.write_str(id),
            DeparseNode::Field { id, required: true } => write!(f, "{id}!"),
            DeparseNode::Const(b) => {
                // right-align into whole bytes, then print ceil(len/4) digits
                let mut aligned = BitBuffer::zeros((8 - b.len() % 8) % 8);
                aligned.extend_from(b);
                let hex = aligned.to_hex();
                let digits = b.len().div_ceil(4);
                write!(f, "const:{}:{}", &hex[hex.len() - digits..], b.len())
            }
        }
    }
}

impl FromStr for DeparseNode {
    type Err = String;

    /// `field`, `field!` or `const:<hex>:<width>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("const:") {
            let (hex, width) = rest
                .split_once(':')
                .ok_or_else(|| format!("constant {s:?} needs const:<hex>:<width>"))?;
            let width: usize = width.parse().map_err(|_| format!("bad constant width in {s:?}"))?;
            let padded = if hex.len() % 2 == 1 { format!("0{hex}") } else { hex.to_string() };
            let bytes = decode_hex(&padded).ok_or_else(|| format!("bad hex in {s:?}"))?;
            let all = BitBuffer::from_bytes(bytes);
            if width == 0 || width > all.len() {
                return Err(format!("constant width {width} does not fit {hex}"));
            }
            // keep the low `width` bits
            let bits = all
                .slice(all.len() - width, width)
                .map_err(|e| e.to_string())?;
            if (0..all.len() - width).any(|i| all.bit(i)) {
                return Err(format!("constant {hex} wider than {width} bits"));
            }
            return Ok(DeparseNode::Const(bits));
        }
        let (id, required) = match s.strip_suffix('!') {
            Some(id) => (id, true),
            None => (s, false),
        };
        if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') {
            return Err(format!("bad deparse node {s:?}"));
        }
        Ok(DeparseNode::Field {
            id: id.to_string(),
            required,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DeparseError {
    #[error("required field {0} is invalid")]
    MissingRequiredField(String),
}

impl DeparseError {
    pub fn counter(&self) -> &'static str {
        "deparse_missing_field"
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DeparseDiagnostic {
    #[error("deparse node names unknown header field {0}")]
    UnknownField(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeparseGraph {
    nodes: Vec<DeparseNode>,
}

impl DeparseGraph {
    pub fn new(nodes: Vec<DeparseNode>) -> Self {
        Self { nodes }
    }

    /// Every header field in declaration order.
    pub fn layout_order(schema: &Schema) -> Self {
        Self::new(schema.headers().iter().map(|h| DeparseNode::field(&h.id)).collect())
    }

    pub fn nodes(&self) -> &[DeparseNode] {
        &self.nodes
    }

    pub fn validate(&self, schema: &Schema) -> Vec<DeparseDiagnostic> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                DeparseNode::Field { id, .. } if schema.header(id).is_none() => {
                    Some(DeparseDiagnostic::UnknownField(id.clone()))
                }
                _ => None,
            })
            .collect()
    }

    /// Rewrites `phv.data_buffer` and points `payload_offset` at the payload.
    pub fn run(&self, phv: &mut Phv) -> Result<(), DeparseError> {
        let mut out = BitBuffer::new();
        for n in &self.nodes {
            match n {
                DeparseNode::Field { id, required } => match phv.get(id) {
                    Ok(v) => out.extend_from(v),
                    Err(_) if *required => return Err(DeparseError::MissingRequiredField(id.clone())),
                    Err(_) => {}
                },
                DeparseNode::Const(b) => out.extend_from(b),
            }
        }
        let offset = phv.payload_offset().unwrap_or(0).min(phv.data_buffer.len());
        let payload = phv.data_buffer.suffix(offset).unwrap_or_default();
        let header_len = out.len();
        out.extend_from(&payload);
        phv.data_buffer = out;
        phv.set_uint(meta::PAYLOAD_OFFSET, header_len as u128, 32);
        Ok(())
    }
}
