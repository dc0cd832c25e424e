// SPDX-License-Identifier: Apache-2.0

//! Packed big-endian bit strings.
//!
//! [`BitBuffer`] backs both the raw packet held in a PHV and the values of
//! individual header or metadata fields. Bits are stored most-significant
//! first, eight to a byte; any unused trailing bits of the last byte are
//! always zero so that equality and hashing can work on the packed form.

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

/// Errors produced by bit-level access.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BitsError {
    /// The requested range runs past the end of the buffer.
    #[error("bit range {start}..{end} out of bounds for buffer of {len} bits")]
    OutOfBounds { start: usize, end: usize, len: usize },
    /// A zero-length slice was requested.
    #[error("slice length must be at least one bit")]
    EmptySlice,
    /// A textual value could not be parsed.
    #[error("cannot parse value {0:?}")]
    BadLiteral(String),
    /// A value needs more bits than the destination provides.
    #[error("value {value:?} does not fit in {width} bits")]
    TooWide { value: String, width: usize },
}

/// A finite sequence of bits, most significant first.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct BitBuffer {
    bytes: Vec<u8>,
    len: usize,
}

impl BitBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Wraps whole bytes; the bit length is `8 * bytes.len()`.
    pub fn from_bytes(bytes: impl Into<Vec<u8>>) -> Self {
        let bytes = bytes.into();
        let len = bytes.len() * 8;
        Self { bytes, len }
    }

    /// The low `width` bits of `value`. Higher bits are discarded.
    pub fn from_u128(value: u128, width: usize) -> Self {
        assert!(width <= 128, "from_u128 supports at most 128 bits");
        let mut out = Self::with_capacity(width);
        for i in (0..width).rev() {
            out.push_bit((value >> i) & 1 == 1);
        }
        out
    }

    /// `width` zero bits.
    pub fn zeros(width: usize) -> Self {
        Self {
            bytes: vec![0; width.div_ceil(8)],
            len: width,
        }
    }

    fn with_capacity(bits: usize) -> Self {
        Self {
            bytes: Vec::with_capacity(bits.div_ceil(8)),
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Bit `i`, counting from the most significant end.
    pub fn bit(&self, i: usize) -> bool {
        assert!(i < self.len);
        (self.bytes[i / 8] >> (7 - i % 8)) & 1 == 1
    }

    pub fn push_bit(&mut self, bit: bool) {
        if self.len.is_multiple_of(8) {
            self.bytes.push(0);
        }
        if bit {
            let last = self.bytes.len() - 1;
            self.bytes[last] |= 1 << (7 - self.len % 8);
        }
        self.len += 1;
    }

    /// Appends all bits of `other`.
    pub fn extend_from(&mut self, other: &BitBuffer) {
        if self.len.is_multiple_of(8) {
            self.bytes.extend_from_slice(&other.bytes);
            self.len += other.len;
            return;
        }
        for i in 0..other.len {
            self.push_bit(other.bit(i));
        }
    }

    /// Copies `len` bits starting at `start`. Never mutates `self`.
    pub fn slice(&self, start: usize, len: usize) -> Result<BitBuffer, BitsError> {
        if len == 0 {
            return Err(BitsError::EmptySlice);
        }
        self.tail_or_range(start, len)
    }

    /// Everything from `start` to the end; empty when `start == len`.
    pub fn suffix(&self, start: usize) -> Result<BitBuffer, BitsError> {
        if start > self.len {
            return Err(BitsError::OutOfBounds {
                start,
                end: start,
                len: self.len,
            });
        }
        self.tail_or_range(start, self.len - start)
    }

    fn tail_or_range(&self, start: usize, len: usize) -> Result<BitBuffer, BitsError> {
        let end = start.checked_add(len).ok_or(BitsError::OutOfBounds {
            start,
            end: usize::MAX,
            len: self.len,
        })?;
        if end > self.len {
            return Err(BitsError::OutOfBounds {
                start,
                end,
                len: self.len,
            });
        }
        if start.is_multiple_of(8) {
            let mut bytes = self.bytes[start / 8..end.div_ceil(8)].to_vec();
            if !len.is_multiple_of(8) {
                let last = bytes.len() - 1;
                bytes[last] &= 0xffu8 << (8 - len % 8);
            }
            return Ok(Self { bytes, len });
        }
        let mut out = Self::with_capacity(len);
        for i in start..end {
            out.push_bit(self.bit(i));
        }
        Ok(out)
    }

    /// Numeric value when the buffer is at most 128 bits wide.
    pub fn to_u128(&self) -> Option<u128> {
        if self.len > 128 {
            return None;
        }
        let mut v: u128 = 0;
        for i in 0..self.len {
            v = (v << 1) | u128::from(self.bit(i));
        }
        Some(v)
    }

    /// Packed bytes; a partial last byte is zero-padded on the right.
    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// Compares the unsigned integers the two bit strings spell out,
    /// ignoring leading zeros, so values of different widths compare sanely.
    pub fn cmp_numeric(&self, other: &BitBuffer) -> Ordering {
        let a = self.first_one().map_or(0, |i| self.len - i);
        let b = other.first_one().map_or(0, |i| other.len - i);
        if a != b {
            return a.cmp(&b);
        }
        let (oa, ob) = (self.len - a, other.len - b);
        for i in 0..a {
            match self.bit(oa + i).cmp(&other.bit(ob + i)) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        Ordering::Equal
    }

    fn first_one(&self) -> Option<usize> {
        (0..self.len).find(|&i| self.bit(i))
    }

    /// Lower-case hex of the packed bytes.
    pub fn to_hex(&self) -> String {
        self.bytes.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Debug for BitBuffer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len <= 128 && self.len > 0 {
            write!(f, "{}'0x{:x}", self.len, self.to_u128().unwrap_or(0))
        } else {
            write!(f, "{}'[{}]", self.len, self.to_hex())
        }
    }
}

impl fmt::Display for BitBuffer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.to_u128() {
            Some(v) => write!(f, "0x{v:x}"),
            None => write!(f, "0x{}", self.to_hex()),
        }
    }
}

/// Parses an integer literal into a `u128`.
///
/// Accepts decimal, `0x` hex, `0b` binary, dotted-quad IPv4 and
/// colon-separated MAC notation. Spaces and underscores inside a hex or
/// binary literal are ignored, so `0x 00 15 25` reads as `0x001525`.
pub fn parse_u128(text: &str) -> Result<u128, BitsError> {
    let bad = || BitsError::BadLiteral(text.to_string());
    let t = text.trim();
    if let Some(rest) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        let digits: String = rest.chars().filter(|c| *c != ' ' && *c != '_').collect();
        if digits.is_empty() {
            return Err(bad());
        }
        return u128::from_str_radix(&digits, 16).map_err(|_| bad());
    }
    if let Some(rest) = t.strip_prefix("0b") {
        let digits: String = rest.chars().filter(|c| *c != ' ' && *c != '_').collect();
        if digits.is_empty() {
            return Err(bad());
        }
        return u128::from_str_radix(&digits, 2).map_err(|_| bad());
    }
    if t.contains('.') {
        let parts: Vec<&str> = t.split('.').collect();
        if parts.len() != 4 {
            return Err(bad());
        }
        return parts.iter().try_fold(0u128, |acc, p| {
            p.parse::<u8>().map(|b| (acc << 8) | u128::from(b)).map_err(|_| bad())
        });
    }
    if t.contains(':') {
        return t.split(':').try_fold(0u128, |acc, p| {
            if p.is_empty() || p.len() > 2 {
                return Err(bad());
            }
            u8::from_str_radix(p, 16)
                .map(|b| (acc << 8) | u128::from(b))
                .map_err(|_| bad())
        });
    }
    t.replace('_', "").parse::<u128>().map_err(|_| bad())
}

/// Parses a literal into a buffer of exactly `width` bits.
pub fn parse_value(text: &str, width: usize) -> Result<BitBuffer, BitsError> {
    let v = parse_u128(text)?;
    if width > 128 {
        return Err(BitsError::TooWide {
            value: text.to_string(),
            width,
        });
    }
    if width < 128 && v >> width != 0 {
        return Err(BitsError::TooWide {
            value: text.to_string(),
            width,
        });
    }
    Ok(BitBuffer::from_u128(v, width))
}

/// Decodes an even-length hex string into bytes.
pub fn decode_hex(text: &str) -> Option<Vec<u8>> {
    if !text.len().is_multiple_of(2) || !text.is_ascii() {
        return None;
    }
    (0..text.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&text[i..i + 2], 16).ok())
        .collect()
}

/// Mask with the low `width` bits set.
pub fn width_mask(width: usize) -> u128 {
    if width >= 128 {
        u128::MAX
    } else {
        (1u128 << width) - 1
    }
}
