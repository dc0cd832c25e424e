// SPDX-License-Identifier: Apache-2.0

//! Manycast group table and PHV replication.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::buffer::{Admission, BufferId, BufferParams, BufferSet};
use crate::phv::{meta, Phv, PORT_BITS};

pub type GroupId = u16;

/// Default per-port BRE buffer size, in PHVs.
pub const BRE_BUFFER_SIZE: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplicationError {
    #[error("no manycast group {0}")]
    NoSuchGroup(GroupId),
    #[error("neither egress_port nor mcast_group is set")]
    NoEgressDecision,
    #[error("manycast group {0} would be empty")]
    EmptyGroup(GroupId),
    #[error("port {0} does not exist")]
    InvalidPort(u16),
}

impl ReplicationError {
    pub fn counter(&self) -> &'static str {
        match self {
            ReplicationError::NoSuchGroup(_) => "no_such_group",
            ReplicationError::NoEgressDecision => "no_egress",
            ReplicationError::EmptyGroup(_) => "empty_group",
            ReplicationError::InvalidPort(_) => "invalid_egress_port",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Mgt {
    groups: BTreeMap<GroupId, BTreeSet<u16>>,
    port_count: u16,
}

impl Mgt {
    pub fn new(port_count: u16) -> Self {
        Self {
            groups: BTreeMap::new(),
            port_count,
        }
    }

    pub fn groups(&self) -> &BTreeMap<GroupId, BTreeSet<u16>> {
        &self.groups
    }

    pub fn members(&self, gid: GroupId) -> Option<&BTreeSet<u16>> {
        self.groups.get(&gid)
    }

    /// Creates or replaces a group.
    pub fn set(&mut self, gid: GroupId, ports: impl IntoIterator<Item = u16>) -> Result<(), ReplicationError> {
        let ports: BTreeSet<u16> = ports.into_iter().collect();
        if ports.is_empty() {
            return Err(ReplicationError::EmptyGroup(gid));
        }
        if let Some(&p) = ports.iter().find(|&&p| p >= self.port_count) {
            return Err(ReplicationError::InvalidPort(p));
        }
        self.groups.insert(gid, ports);
        Ok(())
    }

    pub fn delete(&mut self, gid: GroupId) -> Result<(), ReplicationError> {
        self.groups
            .remove(&gid)
            .map(|_| ())
            .ok_or(ReplicationError::NoSuchGroup(gid))
    }

    /// Expands a PHV into `(port, copy)` pairs. A valid `mcast_group` takes
    /// the manycast path; each copy gets its member port, a `copy_index`
    /// and a fresh sequence number from `next_seq`.
    pub fn replicate(
        &self,
        phv: Phv,
        mut next_seq: impl FnMut() -> u64,
    ) -> Result<Vec<(u16, Phv)>, ReplicationError> {
        if let Ok(g) = phv.get_u128(meta::MCAST_GROUP) {
            let gid = g as GroupId;
            let members = self.groups.get(&gid).ok_or(ReplicationError::NoSuchGroup(gid))?;
            return Ok(members
                .iter()
                .enumerate()
                .map(|(i, &port)| {
                    let mut copy = phv.clone();
                    copy.set_uint(meta::EGRESS_PORT, u128::from(port), PORT_BITS);
                    copy.set_uint(meta::COPY_INDEX, i as u128, 16);
                    copy.set_seq(next_seq());
                    (port, copy)
                })
                .collect());
        }
        match phv.egress_port() {
            Some(p) if p < self.port_count => Ok(vec![(p, phv)]),
            Some(p) => Err(ReplicationError::InvalidPort(p)),
            None => Err(ReplicationError::NoEgressDecision),
        }
    }
}

/// One FIFO buffer per egress port; buffer id equals the port number.
pub fn bre_buffers(port_count: u16, params: &BTreeMap<BufferId, BufferParams>) -> BufferSet {
    let bpt = (0..u32::from(port_count)).map(|p| {
        let prm = params.get(&p).copied().unwrap_or(BufferParams::open(BRE_BUFFER_SIZE));
        (p, prm)
    });
    BufferSet::new(bpt, Admission::ByPort(BTreeMap::new()))
}
