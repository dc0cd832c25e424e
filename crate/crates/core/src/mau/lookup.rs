// SPDX-License-Identifier: Apache-2.0

//! Match-action tables and the four lookup kinds.
//!
//! Exact keys live in an ordered map, LPM keys in one map per prefix length
//! probed from longest to shortest, and ternary/range rows in a list sorted
//! by descending priority (insertion order breaks ties). Indices are rebuilt
//! on every mutation, so a lookup never observes a half-applied update.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::action::Action;
use crate::bits::{parse_u128, width_mask};
use crate::table::TableOp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchKind {
    Exact,
    Lpm,
    Ternary,
    Range,
}

impl FromStr for MatchKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(MatchKind::Exact),
            "lpm" => Ok(MatchKind::Lpm),
            "ternary" => Ok(MatchKind::Ternary),
            "range" => Ok(MatchKind::Range),
            other => Err(format!("unknown match kind {other:?}")),
        }
    }
}

impl fmt::Display for MatchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchKind::Exact => "exact",
            MatchKind::Lpm => "lpm",
            MatchKind::Ternary => "ternary",
            MatchKind::Range => "range",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchKey {
    Exact(u128),
    Lpm { value: u128, prefix_len: u32 },
    Ternary { value: u128, mask: u128 },
    Range { lo: u128, hi: u128 },
}

impl MatchKey {
    pub fn kind(&self) -> MatchKind {
        match self {
            MatchKey::Exact(_) => MatchKind::Exact,
            MatchKey::Lpm { .. } => MatchKind::Lpm,
            MatchKey::Ternary { .. } => MatchKind::Ternary,
            MatchKey::Range { .. } => MatchKind::Range,
        }
    }

    /// Canonical form: LPM and ternary values are masked.
    fn normalized(self, width: usize) -> Self {
        match self {
            MatchKey::Lpm { value, prefix_len } => MatchKey::Lpm {
                value: value & prefix_mask(width, prefix_len),
                prefix_len,
            },
            MatchKey::Ternary { value, mask } => MatchKey::Ternary {
                value: value & mask,
                mask,
            },
            k => k,
        }
    }

    pub fn matches(&self, width: usize, v: u128) -> bool {
        match *self {
            MatchKey::Exact(k) => k == v,
            MatchKey::Lpm { value, prefix_len } => {
                let m = prefix_mask(width, prefix_len);
                v & m == value & m
            }
            MatchKey::Ternary { value, mask } => v & mask == value & mask,
            MatchKey::Range { lo, hi } => lo <= v && v <= hi,
        }
    }
}

/// Mask selecting the top `prefix_len` bits of a `width`-bit value.
pub fn prefix_mask(width: usize, prefix_len: u32) -> u128 {
    let p = prefix_len as usize;
    if p == 0 {
        0
    } else {
        width_mask(width) ^ width_mask(width - p.min(width))
    }
}

/// Parses the text form of a key: `v` (exact), `v/len` (lpm),
/// `v&&&mask` (ternary) or `lo..hi` (range). Values use the usual literal
/// forms (decimal, hex, binary, dotted quad, MAC).
pub fn parse_match_key(kind: MatchKind, text: &str) -> Result<MatchKey, String> {
    let lit = |t: &str| parse_u128(t.trim()).map_err(|e| e.to_string());
    match kind {
        MatchKind::Exact => Ok(MatchKey::Exact(lit(text)?)),
        MatchKind::Lpm => {
            let (v, len) = text.split_once('/').ok_or_else(|| format!("lpm key {text:?} needs value/len"))?;
            let prefix_len = len.trim().parse().map_err(|_| format!("bad prefix length in {text:?}"))?;
            Ok(MatchKey::Lpm { value: lit(v)?, prefix_len })
        }
        MatchKind::Ternary => {
            let (v, m) = text
                .split_once("&&&")
                .ok_or_else(|| format!("ternary key {text:?} needs value&&&mask"))?;
            Ok(MatchKey::Ternary { value: lit(v)?, mask: lit(m)? })
        }
        MatchKind::Range => {
            let (lo, hi) = text.split_once("..").ok_or_else(|| format!("range key {text:?} needs lo..hi"))?;
            Ok(MatchKey::Range { lo: lit(lo)?, hi: lit(hi)? })
        }
    }
}

impl fmt::Display for MatchKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatchKey::Exact(v) => write!(f, "{v:#x}"),
            MatchKey::Lpm { value, prefix_len } => write!(f, "{value:#x}/{prefix_len}"),
            MatchKey::Ternary { value, mask } => write!(f, "{value:#x}&&&{mask:#x}"),
            MatchKey::Range { lo, hi } => write!(f, "{lo:#x}..{hi:#x}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatEntry {
    pub key: MatchKey,
    /// Meaningful for ternary and range rows; larger wins.
    pub priority: i64,
    pub actions: Vec<Action>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableError {
    #[error("duplicate exact key {0:#x}")]
    DuplicateExactKey(u128),
    #[error("duplicate table entry")]
    DuplicateEntry,
    #[error("no matching table entry")]
    NoSuchEntry,
    #[error("malformed entry: {0}")]
    MalformedEntry(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatTable {
    kind: MatchKind,
    width: usize,
    entries: Vec<MatEntry>,
    exact: BTreeMap<u128, usize>,
    lpm: BTreeMap<u32, BTreeMap<u128, usize>>,
    by_priority: Vec<usize>,
}

impl MatTable {
    pub fn new(kind: MatchKind, width: usize) -> Self {
        Self {
            kind,
            width,
            entries: Vec::new(),
            exact: BTreeMap::new(),
            lpm: BTreeMap::new(),
            by_priority: Vec::new(),
        }
    }

    /// Builds a table, rejecting the first bad entry.
    pub fn with_entries(kind: MatchKind, width: usize, entries: Vec<MatEntry>) -> Result<Self, TableError> {
        let mut t = Self::new(kind, width);
        for e in entries {
            t.apply(TableOp::Add, e)?;
        }
        Ok(t)
    }

    pub fn kind(&self) -> MatchKind {
        self.kind
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn entries(&self) -> &[MatEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Best entry for `value`, or `None` on a miss.
    pub fn lookup(&self, value: u128) -> Option<&MatEntry> {
        let idx = match self.kind {
            MatchKind::Exact => self.exact.get(&value).copied(),
            MatchKind::Lpm => self.lpm.iter().rev().find_map(|(len, keys)| {
                keys.get(&(value & prefix_mask(self.width, *len))).copied()
            }),
            MatchKind::Ternary | MatchKind::Range => self
                .by_priority
                .iter()
                .copied()
                .find(|&i| self.entries[i].key.matches(self.width, value)),
        }?;
        Some(&self.entries[idx])
    }

    fn check(&self, e: &MatEntry) -> Result<(), TableError> {
        let bad = |m: &str| Err(TableError::MalformedEntry(m.to_string()));
        if e.key.kind() != self.kind {
            return bad(&format!("{} key in a {} table", e.key.kind(), self.kind));
        }
        let fits = |v: u128| v & !width_mask(self.width) == 0;
        match e.key {
            MatchKey::Exact(v) if !fits(v) => bad("key wider than field"),
            MatchKey::Lpm { value, prefix_len } => {
                if prefix_len as usize > self.width {
                    bad("prefix length exceeds field width")
                } else if !fits(value) {
                    bad("key wider than field")
                } else {
                    Ok(())
                }
            }
            MatchKey::Ternary { value, mask } if !fits(value) || !fits(mask) => {
                bad("key or mask wider than field")
            }
            MatchKey::Range { lo, hi } if lo > hi => bad("range lo > hi"),
            MatchKey::Range { lo, hi } if !fits(lo) || !fits(hi) => bad("range wider than field"),
            _ => Ok(()),
        }
    }

    fn find(&self, key: &MatchKey, priority: i64) -> Option<usize> {
        let uses_priority = matches!(self.kind, MatchKind::Ternary | MatchKind::Range);
        self.entries
            .iter()
            .position(|e| e.key == *key && (!uses_priority || e.priority == priority))
    }

    /// Add, modify or delete one entry. Entries are identified by their
    /// normalized key, plus priority for ternary and range tables.
    pub fn apply(&mut self, op: TableOp, entry: MatEntry) -> Result<(), TableError> {
        self.check(&entry)?;
        let entry = MatEntry {
            key: entry.key.normalized(self.width),
            ..entry
        };
        let pos = self.find(&entry.key, entry.priority);
        match (op, pos) {
            (TableOp::Add, Some(_)) => {
                return Err(match entry.key {
                    MatchKey::Exact(k) => TableError::DuplicateExactKey(k),
                    _ => TableError::DuplicateEntry,
                })
            }
            (TableOp::Add, None) => self.entries.push(entry),
            (TableOp::Modify, Some(i)) => self.entries[i] = entry,
            (TableOp::Delete, Some(i)) => {
                self.entries.remove(i);
            }
            (_, None) => return Err(TableError::NoSuchEntry),
        }
        self.reindex();
        Ok(())
    }

    fn reindex(&mut self) {
        self.exact.clear();
        self.lpm.clear();
        self.by_priority.clear();
        for (i, e) in self.entries.iter().enumerate() {
            match e.key {
                MatchKey::Exact(k) => {
                    self.exact.insert(k, i);
                }
                MatchKey::Lpm { value, prefix_len } => {
                    self.lpm.entry(prefix_len).or_default().insert(value, i);
                }
                MatchKey::Ternary { .. } | MatchKey::Range { .. } => self.by_priority.push(i),
            }
        }
        let entries = &self.entries;
        // stable: equal priorities keep insertion order
        self.by_priority
            .sort_by(|a, b| entries[*b].priority.cmp(&entries[*a].priority));
    }
}
