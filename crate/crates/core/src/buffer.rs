// SPDX-License-Identifier: Apache-2.0

//! Programmable buffering: a set of FIFO buffers with per-buffer size and
//! RX/TX gates (the BPT) and, at the post-parser position, field-based
//! admission rules (the BCT).
//!
//! The receiver side is [`BufferSet::receive`], the sender side
//! [`BufferSet::send`]. The sender visits buffers round-robin and skips
//! buffers that are empty or paused (`tx == false`).

use std::collections::{BTreeMap, VecDeque};
use std::cmp::Ordering;

use serde::Serialize;
use thiserror::Error;

use crate::bits::BitBuffer;
use crate::phv::Phv;
use crate::table::TableOp;

pub type BufferId = u32;

/// Catch-all buffer for PHVs no admission rule claims.
pub const DEFAULT_BUFFER: BufferId = 0;
pub const DEFAULT_BUFFER_SIZE: usize = 1 << 20;

/// One BPT row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BufferParams {
    /// Capacity in PHVs.
    pub size: usize,
    pub rx: bool,
    pub tx: bool,
}

impl BufferParams {
    pub fn open(size: usize) -> Self {
        Self { size, rx: true, tx: true }
    }
}

/// One BCT row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BufferConfigEntry {
    pub field: String,
    pub value: BitBuffer,
    pub buffer: BufferId,
    pub priority: i64,
}

/// How an arriving PHV is mapped to a buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Admission {
    /// Post-parser: highest-priority matching BCT row.
    ByField(Vec<BufferConfigEntry>),
    /// Post-port and per-port BRE buffers: static ingress/egress port map.
    ByPort(BTreeMap<u16, BufferId>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BufferDrop {
    RxClosed,
    BufferFull,
}

impl BufferDrop {
    pub fn counter(self) -> &'static str {
        match self {
            BufferDrop::RxClosed => "rx_closed",
            BufferDrop::BufferFull => "buffer_full",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReceiveOutcome {
    Stored(BufferId),
    /// `notify` is set on the first full-drop since the buffer last had room.
    Dropped {
        buffer: BufferId,
        reason: BufferDrop,
        notify: bool,
        phv: Box<Phv>,
    },
}

/// A BPT column update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BptSetting {
    Size(usize),
    Rx(bool),
    Tx(bool),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BufferError {
    #[error("no buffer {0}")]
    NoSuchBuffer(BufferId),
    #[error("buffer size must be positive")]
    InvalidSize,
    #[error("BCT already has an entry for ({field}, {value})")]
    DuplicateEntry { field: String, value: String },
    #[error("no BCT entry for ({field}, {value})")]
    NoSuchEntry { field: String, value: String },
    #[error("this buffer engine has no BCT")]
    NoBct,
}

/// Per-buffer event counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct BufferCounters {
    pub inserts: u64,
    pub pops: u64,
    pub drops: u64,
}

#[derive(Debug, Clone)]
struct Buffer {
    params: BufferParams,
    queue: VecDeque<Phv>,
    full_notified: bool,
    counters: BufferCounters,
}

impl Buffer {
    fn new(params: BufferParams) -> Self {
        Self {
            params,
            queue: VecDeque::new(),
            full_notified: false,
            counters: BufferCounters::default(),
        }
    }

    fn rearm(&mut self) {
        if self.queue.len() < self.params.size {
            self.full_notified = false;
        }
    }
}

#[derive(Debug, Clone)]
pub struct BufferSet {
    buffers: BTreeMap<BufferId, Buffer>,
    admission: Admission,
    rr_cursor: BufferId,
}

impl BufferSet {
    /// Builds a buffer set from its BPT. Buffer 0 is added as an open,
    /// effectively unbounded catch-all unless the BPT declares it.
    pub fn new(bpt: impl IntoIterator<Item = (BufferId, BufferParams)>, admission: Admission) -> Self {
        let mut buffers: BTreeMap<BufferId, Buffer> =
            bpt.into_iter().map(|(id, p)| (id, Buffer::new(p))).collect();
        buffers
            .entry(DEFAULT_BUFFER)
            .or_insert_with(|| Buffer::new(BufferParams::open(DEFAULT_BUFFER_SIZE)));
        Self {
            buffers,
            admission,
            rr_cursor: 0,
        }
    }

    pub fn admission(&self) -> &Admission {
        &self.admission
    }

    /// Buffer a PHV would be admitted to.
    pub fn select(&self, phv: &Phv) -> BufferId {
        match &self.admission {
            Admission::ByPort(map) => map
                .get(&phv.ingress_port())
                .copied()
                .unwrap_or(DEFAULT_BUFFER),
            Admission::ByField(bct) => select_by_field(bct, phv).unwrap_or(DEFAULT_BUFFER),
        }
    }

    /// Receiver thread: admit `phv` into the buffer chosen by
    /// [`BufferSet::select`].
    pub fn receive(&mut self, phv: Phv) -> ReceiveOutcome {
        let id = self.select(&phv);
        self.receive_into(id, phv)
    }

    /// Receiver thread with an explicit target buffer.
    pub fn receive_into(&mut self, id: BufferId, phv: Phv) -> ReceiveOutcome {
        let buf = self
            .buffers
            .entry(id)
            .or_insert_with(|| Buffer::new(BufferParams::open(DEFAULT_BUFFER_SIZE)));
        if !buf.params.rx {
            buf.counters.drops += 1;
            return ReceiveOutcome::Dropped {
                buffer: id,
                reason: BufferDrop::RxClosed,
                notify: false,
                phv: Box::new(phv),
            };
        }
        if buf.queue.len() >= buf.params.size {
            buf.counters.drops += 1;
            let notify = !buf.full_notified;
            buf.full_notified = true;
            return ReceiveOutcome::Dropped {
                buffer: id,
                reason: BufferDrop::BufferFull,
                notify,
                phv: Box::new(phv),
            };
        }
        buf.queue.push_back(phv);
        buf.counters.inserts += 1;
        ReceiveOutcome::Stored(id)
    }

    /// Sender thread: pops the head of the next eligible buffer in
    /// round-robin order, starting at the cursor.
    pub fn send(&mut self) -> Option<(BufferId, Phv)> {
        let id = self.next_eligible()?;
        let buf = self.buffers.get_mut(&id)?;
        let phv = buf.queue.pop_front()?;
        buf.counters.pops += 1;
        buf.rearm();
        self.rr_cursor = id.wrapping_add(1);
        Some((id, phv))
    }

    fn next_eligible(&self) -> Option<BufferId> {
        let eligible = |b: &Buffer| b.params.tx && !b.queue.is_empty();
        self.buffers
            .range(self.rr_cursor..)
            .chain(self.buffers.range(..self.rr_cursor))
            .find(|(_, b)| eligible(b))
            .map(|(id, _)| *id)
    }

    /// True when [`BufferSet::send`] would return a PHV.
    pub fn has_eligible(&self) -> bool {
        self.next_eligible().is_some()
    }

    pub fn set_cursor(&mut self, id: BufferId) {
        self.rr_cursor = id;
    }

    /// BPT update from the control plane. Shrinking below the current
    /// occupancy never evicts; it only blocks inserts.
    pub fn set_param(&mut self, id: BufferId, setting: BptSetting) -> Result<(), BufferError> {
        let buf = self.buffers.get_mut(&id).ok_or(BufferError::NoSuchBuffer(id))?;
        match setting {
            BptSetting::Size(0) => return Err(BufferError::InvalidSize),
            BptSetting::Size(n) => buf.params.size = n,
            BptSetting::Rx(v) => buf.params.rx = v,
            BptSetting::Tx(v) => buf.params.tx = v,
        }
        buf.rearm();
        Ok(())
    }

    /// BCT update from the control plane. Rows are keyed by
    /// `(field, value)`; delete ignores the buffer and priority.
    pub fn update_bct(&mut self, op: TableOp, entry: BufferConfigEntry) -> Result<(), BufferError> {
        if op != TableOp::Delete && !self.buffers.contains_key(&entry.buffer) {
            return Err(BufferError::NoSuchBuffer(entry.buffer));
        }
        let Admission::ByField(bct) = &mut self.admission else {
            return Err(BufferError::NoBct);
        };
        let pos = bct.iter().position(|e| {
            e.field == entry.field && e.value.cmp_numeric(&entry.value) == Ordering::Equal
        });
        let key = || (entry.field.clone(), entry.value.to_string());
        match (op, pos) {
            (TableOp::Add, Some(_)) => {
                let (field, value) = key();
                Err(BufferError::DuplicateEntry { field, value })
            }
            (TableOp::Add, None) => {
                bct.push(entry);
                Ok(())
            }
            (TableOp::Modify, Some(i)) => {
                bct[i] = entry;
                Ok(())
            }
            (TableOp::Delete, Some(i)) => {
                bct.remove(i);
                Ok(())
            }
            (_, None) => {
                let (field, value) = key();
                Err(BufferError::NoSuchEntry { field, value })
            }
        }
    }

    pub fn params(&self, id: BufferId) -> Option<BufferParams> {
        self.buffers.get(&id).map(|b| b.params)
    }

    pub fn contains(&self, id: BufferId) -> bool {
        self.buffers.contains_key(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = BufferId> + '_ {
        self.buffers.keys().copied()
    }

    pub fn occupancy(&self, id: BufferId) -> usize {
        self.buffers.get(&id).map_or(0, |b| b.queue.len())
    }

    pub fn occupancies(&self) -> BTreeMap<BufferId, usize> {
        self.buffers.iter().map(|(id, b)| (*id, b.queue.len())).collect()
    }

    pub fn total_occupancy(&self) -> usize {
        self.buffers.values().map(|b| b.queue.len()).sum()
    }

    pub fn counters(&self, id: BufferId) -> Option<BufferCounters> {
        self.buffers.get(&id).map(|b| b.counters)
    }

    /// PHVs currently held in buffer `id`, head first.
    pub fn contents(&self, id: BufferId) -> impl Iterator<Item = &Phv> {
        self.buffers.get(&id).into_iter().flat_map(|b| b.queue.iter())
    }
}

/// Highest priority wins; equal priorities go to the lower buffer id.
fn select_by_field(bct: &[BufferConfigEntry], phv: &Phv) -> Option<BufferId> {
    bct.iter()
        .filter(|e| {
            phv.get(&e.field)
                .is_ok_and(|v| v.cmp_numeric(&e.value) == Ordering::Equal)
        })
        .max_by(|a, b| a.priority.cmp(&b.priority).then(b.buffer.cmp(&a.buffer)))
        .map(|e| e.buffer)
}
