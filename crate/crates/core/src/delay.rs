// SPDX-License-Identifier: Apache-2.0

//! Per-component entry/exit timestamps and the delay decomposition built
//! from them.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

/// Every stage a PHV can pass through, in wiring order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    PortIn,
    Be1,
    PrIn,
    Be2,
    MauIn,
    DprIn,
    Bre,
    PrE,
    MauE,
    DprE,
    Sched,
    PortE,
}

impl Component {
    pub const ALL: [Component; 12] = [
        Component::PortIn,
        Component::Be1,
        Component::PrIn,
        Component::Be2,
        Component::MauIn,
        Component::DprIn,
        Component::Bre,
        Component::PrE,
        Component::MauE,
        Component::DprE,
        Component::Sched,
        Component::PortE,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Component::PortIn => "port_in",
            Component::Be1 => "be1",
            Component::PrIn => "pr_in",
            Component::Be2 => "be2",
            Component::MauIn => "mau_in",
            Component::DprIn => "dpr_in",
            Component::Bre => "bre",
            Component::PrE => "pr_e",
            Component::MauE => "mau_e",
            Component::DprE => "dpr_e",
            Component::Sched => "sched",
            Component::PortE => "port_e",
        }
    }

    pub fn from_name(name: &str) -> Option<Component> {
        Component::ALL.into_iter().find(|c| c.name() == name)
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DelayError {
    #[error("component {0} has an entry timestamp but no exit")]
    IncompleteRecord(Component),
    #[error("component {0} exits before it enters")]
    NegativeDelay(Component),
}

/// Entry and exit timestamp of one component visit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Stamp {
    pub entry: u64,
    pub exit: Option<u64>,
}

/// Timestamps for every component a PHV visited.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct DelayRecord {
    stamps: BTreeMap<Component, Stamp>,
}

impl DelayRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn enter(&mut self, c: Component, at: u64) {
        self.stamps.insert(c, Stamp { entry: at, exit: None });
    }

    pub fn exit(&mut self, c: Component, at: u64) {
        if let Some(s) = self.stamps.get_mut(&c) {
            s.exit = Some(at);
        }
    }

    pub fn stamp(&self, c: Component) -> Option<Stamp> {
        self.stamps.get(&c).copied()
    }

    pub fn visited(&self) -> impl Iterator<Item = (Component, Stamp)> + '_ {
        self.stamps.iter().map(|(c, s)| (*c, *s))
    }

    /// `D_C = exit - entry`; zero for components never visited.
    pub fn component_delay(&self, c: Component) -> Result<u64, DelayError> {
        match self.stamps.get(&c) {
            None => Ok(0),
            Some(Stamp { exit: None, .. }) => Err(DelayError::IncompleteRecord(c)),
            Some(Stamp { entry, exit: Some(x) }) => {
                x.checked_sub(*entry).ok_or(DelayError::NegativeDelay(c))
            }
        }
    }
}

/// Network delay split into its four terms. `total` is their exact sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct DelayBreakdown {
    pub queuing: u64,
    pub processing: u64,
    pub transmission_propagation: u64,
    pub total: u64,
}

const PROCESSING: [Component; 8] = [
    Component::PrIn,
    Component::MauIn,
    Component::DprIn,
    Component::Bre,
    Component::PrE,
    Component::MauE,
    Component::DprE,
    Component::Sched,
];

/// Queuing is the ingress buffer engine (both positions), processing is
/// every stage from the ingress parser through the scheduler, and the link
/// contributes transmission plus propagation.
pub fn network_delay(rec: &DelayRecord, link_delay: u64) -> Result<DelayBreakdown, DelayError> {
    for (c, s) in rec.visited() {
        if s.exit.is_none() {
            return Err(DelayError::IncompleteRecord(c));
        }
    }
    let queuing = rec.component_delay(Component::Be1)? + rec.component_delay(Component::Be2)?;
    let mut processing = 0;
    for c in PROCESSING {
        processing += rec.component_delay(c)?;
    }
    Ok(DelayBreakdown {
        queuing,
        processing,
        transmission_propagation: link_delay,
        total: queuing + processing + link_delay,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_record() {
        let mut r = DelayRecord::new();
        for c in Component::ALL {
            r.enter(c, 0);
            r.exit(c, 0);
        }
        assert_eq!(network_delay(&r, 0).unwrap().total, 0);
    }

    #[test]
    fn one_ns_per_component() {
        // nine delay-bearing components: BE_In, PR_In, MAU_In, DPR_In, BRE,
        // PR_E, MAU_E, DPR_E, S
        let mut r = DelayRecord::new();
        let mut t = 0;
        for c in [
            Component::Be2,
            Component::PrIn,
            Component::MauIn,
            Component::DprIn,
            Component::Bre,
            Component::PrE,
            Component::MauE,
            Component::DprE,
            Component::Sched,
        ] {
            r.enter(c, t);
            t += 1;
            r.exit(c, t);
        }
        let b = network_delay(&r, 5).unwrap();
        assert_eq!(b.queuing, 1);
        assert_eq!(b.processing, 8);
        assert_eq!(b.total, 14);
    }

    #[test]
    fn incomplete_record_is_rejected() {
        let mut r = DelayRecord::new();
        r.enter(Component::MauIn, 3);
        assert_eq!(
            network_delay(&r, 0),
            Err(DelayError::IncompleteRecord(Component::MauIn))
        );
    }

    #[test]
    fn names_round_trip() {
        for c in Component::ALL {
            assert_eq!(Component::from_name(c.name()), Some(c));
        }
    }
}
