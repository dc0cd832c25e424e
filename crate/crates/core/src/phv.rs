// SPDX-License-Identifier: Apache-2.0

//! Packet header vectors, the field definitions that shape them, and the
//! total order used wherever PHVs have to be kept sorted.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::{width_mask, BitBuffer};
use crate::delay::DelayRecord;

/// Names of the metadata fields every program gets for free.
pub mod meta {
    pub const INGRESS_PORT: &str = "ingress_port";
    pub const ARRIVAL_TIME: &str = "arrival_time";
    pub const EGRESS_PORT: &str = "egress_port";
    pub const UNICAST_FLAG: &str = "unicast_flag";
    pub const MCAST_GROUP: &str = "mcast_group";
    pub const SCHEDULING_ORDER: &str = "scheduling_order";
    pub const PAYLOAD_OFFSET: &str = "payload_offset";
    pub const COPY_INDEX: &str = "copy_index";
}

/// Width of a port identifier in bits.
pub const PORT_BITS: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PhvError {
    #[error("read of invalid field {0}")]
    InvalidFieldRead(String),
    #[error("packet of {len} bits exceeds the {max}-bit limit")]
    PacketTooLong { len: usize, max: usize },
}

/// Length of a header field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldLength {
    Fixed(usize),
    /// Resolved by the parser as `value(length_from) * scale_bits + bias_bits`.
    Variable {
        length_from: String,
        #[serde(default = "default_scale")]
        scale_bits: u32,
        #[serde(default)]
        bias_bits: i64,
    },
}

fn default_scale() -> u32 {
    8
}

impl FieldLength {
    pub fn fixed(&self) -> Option<usize> {
        match self {
            FieldLength::Fixed(n) => Some(*n),
            FieldLength::Variable { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeaderFieldDef {
    pub id: String,
    pub start_bit: usize,
    pub length: FieldLength,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaType {
    Uint(usize),
    TimestampNs,
    PortId,
    Enum(Vec<String>),
}

impl MetaType {
    pub fn width(&self) -> usize {
        match self {
            MetaType::Uint(w) => *w,
            MetaType::TimestampNs => 64,
            MetaType::PortId => PORT_BITS,
            MetaType::Enum(variants) => {
                let n = variants.len().max(2);
                (usize::BITS - (n - 1).leading_zeros()) as usize
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetadataFieldDef {
    pub id: String,
    pub ty: MetaType,
}

/// What kind of field an id names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FieldKind {
    Header(FieldLength),
    Metadata(MetaType),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("duplicate field id {0}")]
    DuplicateId(String),
    #[error("field {0} is declared both as header and metadata")]
    HeaderMetadataClash(String),
    #[error("field {0} has zero length")]
    ZeroLength(String),
    #[error("variable-length field {field} takes its length from unknown field {from}")]
    UnknownLengthSource { field: String, from: String },
}

/// Header definition plus metadata: the space every PHV lives in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    headers: Vec<HeaderFieldDef>,
    metadata: Vec<MetadataFieldDef>,
    index: BTreeMap<String, FieldKind>,
    max_packet_length_bits: usize,
}

/// Standard metadata, always present in a [`Schema`].
pub fn standard_metadata() -> Vec<MetadataFieldDef> {
    let m = |id: &str, ty| MetadataFieldDef { id: id.to_string(), ty };
    vec![
        m(meta::INGRESS_PORT, MetaType::PortId),
        m(meta::ARRIVAL_TIME, MetaType::TimestampNs),
        m(meta::EGRESS_PORT, MetaType::PortId),
        m(meta::UNICAST_FLAG, MetaType::Uint(1)),
        m(meta::MCAST_GROUP, MetaType::Uint(16)),
        m(meta::SCHEDULING_ORDER, MetaType::Uint(64)),
        m(meta::PAYLOAD_OFFSET, MetaType::Uint(32)),
        m(meta::COPY_INDEX, MetaType::Uint(16)),
    ]
}

impl Schema {
    /// Builds a schema, collecting every definition problem.
    pub fn new(
        headers: Vec<HeaderFieldDef>,
        extra_metadata: Vec<MetadataFieldDef>,
        max_packet_length_bits: usize,
    ) -> Result<Schema, Vec<SchemaError>> {
        let mut errors = Vec::new();
        let mut index = BTreeMap::new();
        for h in &headers {
            if h.length == FieldLength::Fixed(0) {
                errors.push(SchemaError::ZeroLength(h.id.clone()));
            }
            if index
                .insert(h.id.clone(), FieldKind::Header(h.length.clone()))
                .is_some()
            {
                errors.push(SchemaError::DuplicateId(h.id.clone()));
            }
        }
        let mut metadata = standard_metadata();
        metadata.extend(extra_metadata);
        let mut seen_meta = std::collections::BTreeSet::new();
        for m in &metadata {
            if m.ty.width() == 0 {
                errors.push(SchemaError::ZeroLength(m.id.clone()));
            }
            if !seen_meta.insert(m.id.clone()) {
                errors.push(SchemaError::DuplicateId(m.id.clone()));
                continue;
            }
            if index
                .insert(m.id.clone(), FieldKind::Metadata(m.ty.clone()))
                .is_some()
            {
                errors.push(SchemaError::HeaderMetadataClash(m.id.clone()));
            }
        }
        for h in &headers {
            if let FieldLength::Variable { length_from, .. } = &h.length {
                if !index.contains_key(length_from) {
                    errors.push(SchemaError::UnknownLengthSource {
                        field: h.id.clone(),
                        from: length_from.clone(),
                    });
                }
            }
        }
        if errors.is_empty() {
            Ok(Schema {
                headers,
                metadata,
                index,
                max_packet_length_bits,
            })
        } else {
            Err(errors)
        }
    }

    pub fn headers(&self) -> &[HeaderFieldDef] {
        &self.headers
    }

    pub fn metadata(&self) -> &[MetadataFieldDef] {
        &self.metadata
    }

    pub fn header(&self, id: &str) -> Option<&HeaderFieldDef> {
        self.headers.iter().find(|h| h.id == id)
    }

    pub fn kind(&self, id: &str) -> Option<&FieldKind> {
        self.index.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Declared width; `None` for unknown ids and variable-length headers.
    pub fn width(&self, id: &str) -> Option<usize> {
        match self.index.get(id)? {
            FieldKind::Header(l) => l.fixed(),
            FieldKind::Metadata(t) => Some(t.width()),
        }
    }

    pub fn max_packet_length_bits(&self) -> usize {
        self.max_packet_length_bits
    }
}

/// Key-value container of parsed header fields and metadata, plus the raw
/// packet bits. A field absent from the map is invalid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phv {
    fields: BTreeMap<String, BitBuffer>,
    pub data_buffer: BitBuffer,
    seq: u64,
    pub delay: DelayRecord,
    dropped: bool,
    egress_lock: Option<u16>,
}

/// Creates the PHV for a freshly received packet.
pub fn make_phv(
    pkt: BitBuffer,
    port: u16,
    t: u64,
    seq: u64,
    max_packet_length_bits: usize,
) -> Result<Phv, PhvError> {
    if pkt.len() > max_packet_length_bits {
        return Err(PhvError::PacketTooLong {
            len: pkt.len(),
            max: max_packet_length_bits,
        });
    }
    let mut phv = Phv {
        fields: BTreeMap::new(),
        data_buffer: pkt,
        seq,
        delay: DelayRecord::new(),
        dropped: false,
        egress_lock: None,
    };
    phv.set_uint(meta::INGRESS_PORT, u128::from(port), PORT_BITS);
    phv.set_uint(meta::ARRIVAL_TIME, u128::from(t), 64);
    Ok(phv)
}

impl Phv {
    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn set_seq(&mut self, seq: u64) {
        self.seq = seq;
    }

    pub fn is_valid(&self, id: &str) -> bool {
        self.fields.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Result<&BitBuffer, PhvError> {
        self.fields
            .get(id)
            .ok_or_else(|| PhvError::InvalidFieldRead(id.to_string()))
    }

    /// Numeric value of a field at most 128 bits wide.
    pub fn get_u128(&self, id: &str) -> Result<u128, PhvError> {
        self.get(id)?
            .to_u128()
            .ok_or_else(|| PhvError::InvalidFieldRead(id.to_string()))
    }

    pub fn set(&mut self, id: &str, value: BitBuffer) {
        self.fields.insert(id.to_string(), value);
    }

    /// Stores `value` truncated to `width` bits.
    pub fn set_uint(&mut self, id: &str, value: u128, width: usize) {
        self.set(id, BitBuffer::from_u128(value & width_mask(width), width));
    }

    pub fn invalidate(&mut self, id: &str) {
        self.fields.remove(id);
    }

    pub fn fields(&self) -> impl Iterator<Item = (&str, &BitBuffer)> {
        self.fields.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn ingress_port(&self) -> u16 {
        self.port_field(meta::INGRESS_PORT).unwrap_or(0)
    }

    pub fn arrival_time(&self) -> u64 {
        self.get_u128(meta::ARRIVAL_TIME).map(|v| v as u64).unwrap_or(0)
    }

    pub fn egress_port(&self) -> Option<u16> {
        self.port_field(meta::EGRESS_PORT)
    }

    fn port_field(&self, id: &str) -> Option<u16> {
        self.get_u128(id).ok().map(|v| v as u16)
    }

    pub fn payload_offset(&self) -> Option<usize> {
        self.get_u128(meta::PAYLOAD_OFFSET).ok().map(|v| v as usize)
    }

    pub fn is_dropped(&self) -> bool {
        self.dropped
    }

    pub fn mark_dropped(&mut self) {
        self.dropped = true;
    }

    /// Egress port recorded when the PHV crossed into the egress stage.
    pub fn egress_lock(&self) -> Option<u16> {
        self.egress_lock
    }

    pub fn lock_egress(&mut self, port: u16) {
        self.egress_lock = Some(port);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Asc,
    Desc,
}

/// Lexicographic order over PHV fields with an implicit final tiebreak on
/// `(arrival_time, ingress_port, seq)`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PhvOrderKey {
    pub fields: Vec<(String, Direction)>,
}

impl PhvOrderKey {
    pub fn new(fields: impl IntoIterator<Item = (String, Direction)>) -> Self {
        Self {
            fields: fields.into_iter().collect(),
        }
    }

    pub fn asc(field: &str) -> Self {
        Self::new([(field.to_string(), Direction::Asc)])
    }

    pub fn desc(field: &str) -> Self {
        Self::new([(field.to_string(), Direction::Desc)])
    }
}

/// Strict total order on PHVs. Two distinct PHVs never compare equal,
/// since their `seq` values differ.
pub fn compare(a: &Phv, b: &Phv, key: &PhvOrderKey) -> Result<Ordering, PhvError> {
    for (field, dir) in &key.fields {
        let o = a.get(field)?.cmp_numeric(b.get(field)?);
        let o = match dir {
            Direction::Asc => o,
            Direction::Desc => o.reverse(),
        };
        if o != Ordering::Equal {
            return Ok(o);
        }
    }
    for tie in [meta::ARRIVAL_TIME, meta::INGRESS_PORT] {
        let o = a.get(tie)?.cmp_numeric(b.get(tie)?);
        if o != Ordering::Equal {
            return Ok(o);
        }
    }
    Ok(a.seq.cmp(&b.seq))
}
