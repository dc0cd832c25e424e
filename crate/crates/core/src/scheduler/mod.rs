// SPDX-License-Identifier: Apache-2.0

//! Per-port scheduling data structures behind an insert/remove interface.
//!
//! Algorithms are plugins: a [`Registry`] maps a name to a constructor and
//! the parameter keys it understands. Each egress port gets its own
//! instance.

mod fifo;
mod strict;
mod wfq;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fifo::Fifo;
pub use strict::StrictPriority;
pub use wfq::Wfq;

use crate::bits::parse_u128;
use crate::phv::{meta, Phv};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchedError {
    #[error("unknown scheduler parameter {0:?}")]
    UnknownParam(String),
    #[error("invalid value {value:?} for {key:?}")]
    InvalidValue { key: String, value: String },
    #[error("unknown scheduling algorithm {0:?}")]
    UnknownAlgorithm(String),
    #[error("PHV has no egress_port")]
    NoEgressPort,
}

fn default_algorithm() -> String {
    "fifo".to_string()
}

fn default_capacity() -> usize {
    1024
}

fn one() -> u64 {
    1
}

/// Scheduler parameters as written in a program file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedParams {
    #[serde(default = "default_algorithm")]
    pub algorithm: String,
    /// PHVs per port.
    #[serde(default = "default_capacity")]
    pub capacity: usize,
    /// Port line rate; without it departures are not paced.
    #[serde(default)]
    pub rate_bps: Option<u64>,
    /// WFQ flow key. Defaults to `ingress_port`.
    #[serde(default)]
    pub flow_field: Option<String>,
    /// WFQ weights keyed by flow value literal.
    #[serde(default)]
    pub weights: BTreeMap<String, u64>,
    #[serde(default = "one")]
    pub default_weight: u64,
    /// strict_priority: field copied into `scheduling_order` when valid.
    #[serde(default)]
    pub priority_field: Option<String>,
}

impl Default for SchedParams {
    fn default() -> Self {
        Self {
            algorithm: default_algorithm(),
            capacity: default_capacity(),
            rate_bps: None,
            flow_field: None,
            weights: BTreeMap::new(),
            default_weight: 1,
            priority_field: None,
        }
    }
}

impl SchedParams {
    pub fn flow_field(&self) -> &str {
        self.flow_field.as_deref().unwrap_or(meta::INGRESS_PORT)
    }

    /// Weights with parsed flow keys. Rejects zero weights and bad keys.
    pub fn parsed_weights(&self) -> Result<BTreeMap<u128, u64>, SchedError> {
        if self.default_weight == 0 {
            return Err(SchedError::InvalidValue {
                key: "default_weight".into(),
                value: "0".into(),
            });
        }
        self.weights
            .iter()
            .map(|(k, &w)| {
                let key = parse_u128(k).map_err(|_| SchedError::InvalidValue {
                    key: format!("weight.{k}"),
                    value: w.to_string(),
                })?;
                if w == 0 {
                    return Err(SchedError::InvalidValue {
                        key: format!("weight.{k}"),
                        value: "0".into(),
                    });
                }
                Ok((key, w))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InsertOutcome {
    Accepted,
    /// The arriving PHV was refused.
    DroppedSelf(Box<Phv>),
    /// The arrival was stored and this resident was pushed out.
    Evicted(Box<Phv>),
}

/// A scheduling algorithm managing one port's SDS.
pub trait SchedAlgorithm: fmt::Debug {
    /// Re-reads parameters. Affects only later insertions.
    fn configure(&mut self, params: &SchedParams) -> Result<(), SchedError>;
    fn insert(&mut self, phv: Phv, capacity: usize) -> InsertOutcome;
    fn remove(&mut self) -> Option<Phv>;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Residents in departure order.
    fn ordered(&self) -> Vec<&Phv>;
    fn box_clone(&self) -> Box<dyn SchedAlgorithm>;
}

impl Clone for Box<dyn SchedAlgorithm> {
    fn clone(&self) -> Self {
        self.box_clone()
    }
}

#[derive(Clone, Copy)]
pub struct AlgorithmSpec {
    pub build: fn() -> Box<dyn SchedAlgorithm>,
    /// Algorithm-specific `sched set` keys.
    pub accepts: fn(&str) -> bool,
}

impl fmt::Debug for AlgorithmSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("AlgorithmSpec")
    }
}

#[derive(Debug, Clone)]
pub struct Registry {
    specs: BTreeMap<String, AlgorithmSpec>,
}

impl Default for Registry {
    fn default() -> Self {
        let mut r = Registry {
            specs: BTreeMap::new(),
        };
        r.register(
            "fifo",
            AlgorithmSpec {
                build: || Box::new(Fifo::default()),
                accepts: |_| false,
            },
        );
        r.register(
            "strict_priority",
            AlgorithmSpec {
                build: || Box::new(StrictPriority::default()),
                accepts: |k| k == "priority_field",
            },
        );
        r.register(
            "wfq",
            AlgorithmSpec {
                build: || Box::new(Wfq::default()),
                accepts: |k| matches!(k, "flow_field" | "default_weight") || k.starts_with("weight."),
            },
        );
        r
    }
}

impl Registry {
    pub fn register(&mut self, name: &str, spec: AlgorithmSpec) {
        self.specs.insert(name.to_string(), spec);
    }

    pub fn get(&self, name: &str) -> Option<AlgorithmSpec> {
        self.specs.get(name).copied()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.specs.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone)]
struct PortSds {
    algo: Box<dyn SchedAlgorithm>,
    next_free: u64,
}

/// Read-only copy of scheduler state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SdsSnapshot {
    pub algorithm: String,
    pub capacity: usize,
    pub occupancy: BTreeMap<u16, usize>,
    /// `scheduling_order` of each port's head PHV, when valid.
    pub head_order: BTreeMap<u16, Option<u128>>,
}

#[derive(Debug, Clone)]
pub struct Scheduler {
    params: SchedParams,
    spec: AlgorithmSpec,
    ports: BTreeMap<u16, PortSds>,
}

impl Scheduler {
    pub fn new(params: SchedParams, port_count: u16, registry: &Registry) -> Result<Self, SchedError> {
        let spec = registry
            .get(&params.algorithm)
            .ok_or_else(|| SchedError::UnknownAlgorithm(params.algorithm.clone()))?;
        if params.capacity == 0 {
            return Err(SchedError::InvalidValue {
                key: "capacity".into(),
                value: "0".into(),
            });
        }
        if params.rate_bps == Some(0) {
            return Err(SchedError::InvalidValue {
                key: "rate_bps".into(),
                value: "0".into(),
            });
        }
        let mut ports = BTreeMap::new();
        for p in 0..port_count {
            let mut algo = (spec.build)();
            algo.configure(&params)?;
            ports.insert(
                p,
                PortSds {
                    algo,
                    next_free: 0,
                },
            );
        }
        Ok(Self { params, spec, ports })
    }

    pub fn params(&self) -> &SchedParams {
        &self.params
    }

    pub fn insert(&mut self, phv: Phv) -> Result<InsertOutcome, SchedError> {
        let port = phv.egress_port().ok_or(SchedError::NoEgressPort)?;
        let sds = self.ports.get_mut(&port).ok_or(SchedError::NoEgressPort)?;
        Ok(sds.algo.insert(phv, self.params.capacity))
    }

    /// Pops the head PHV of `port`. The departure time is `now` or the
    /// moment the port finishes its previous transmission, whichever is
    /// later.
    pub fn remove(&mut self, port: u16, now: u64) -> Option<(Phv, u64)> {
        let sds = self.ports.get_mut(&port)?;
        let phv = sds.algo.remove()?;
        let depart = now.max(sds.next_free);
        sds.next_free = match self.params.rate_bps {
            Some(rate) => depart + transmission_ns(phv.data_buffer.len() as u64, rate),
            None => depart,
        };
        Some((phv, depart))
    }

    /// Earliest time `port` may start its next transmission.
    pub fn next_free(&self, port: u16) -> u64 {
        self.ports.get(&port).map_or(0, |s| s.next_free)
    }

    pub fn occupancy(&self, port: u16) -> usize {
        self.ports.get(&port).map_or(0, |s| s.algo.len())
    }

    pub fn total_occupancy(&self) -> usize {
        self.ports.values().map(|s| s.algo.len()).sum()
    }

    pub fn ports(&self) -> impl Iterator<Item = u16> + '_ {
        self.ports.keys().copied()
    }

    pub fn ordered(&self, port: u16) -> Vec<&Phv> {
        self.ports.get(&port).map_or_else(Vec::new, |s| s.algo.ordered())
    }

    pub fn inspect(&self) -> SdsSnapshot {
        SdsSnapshot {
            algorithm: self.params.algorithm.clone(),
            capacity: self.params.capacity,
            occupancy: self.ports.iter().map(|(p, s)| (*p, s.algo.len())).collect(),
            head_order: self
                .ports
                .iter()
                .map(|(p, s)| {
                    let head = s.algo.ordered().first().and_then(|h| h.get_u128(meta::SCHEDULING_ORDER).ok());
                    (*p, head)
                })
                .collect(),
        }
    }

    /// Applies one `sched set` update atomically.
    pub fn set_param(&mut self, key: &str, value: &str) -> Result<(), SchedError> {
        let invalid = || SchedError::InvalidValue {
            key: key.to_string(),
            value: value.to_string(),
        };
        let positive = || -> Result<u64, SchedError> {
            match parse_u128(value).ok().and_then(|v| u64::try_from(v).ok()) {
                Some(v) if v > 0 => Ok(v),
                _ => Err(invalid()),
            }
        };
        let mut next = self.params.clone();
        match key {
            "capacity" => next.capacity = positive()? as usize,
            "rate_bps" => {
                next.rate_bps = if value == "none" { None } else { Some(positive()?) };
            }
            k if !(self.spec.accepts)(k) => return Err(SchedError::UnknownParam(k.to_string())),
            "priority_field" | "flow_field" => {
                if value.is_empty() {
                    return Err(invalid());
                }
                let v = Some(value.to_string());
                if key == "priority_field" {
                    next.priority_field = v;
                } else {
                    next.flow_field = v;
                }
            }
            "default_weight" => next.default_weight = positive()?,
            k => {
                let flow = k.strip_prefix("weight.").ok_or_else(|| SchedError::UnknownParam(k.to_string()))?;
                if parse_u128(flow).is_err() {
                    return Err(SchedError::UnknownParam(k.to_string()));
                }
                next.weights.insert(flow.to_string(), positive()?);
            }
        }
        for sds in self.ports.values_mut() {
            sds.algo.configure(&next)?;
        }
        self.params = next;
        Ok(())
    }
}

/// Serialization time of `bits` at `rate_bps`, rounded up to whole ns.
pub fn transmission_ns(bits: u64, rate_bps: u64) -> u64 {
    (u128::from(bits) * 1_000_000_000).div_ceil(u128::from(rate_bps)) as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::BitBuffer;
    use crate::phv::{make_phv, PORT_BITS};

    pub(crate) fn pkt(seq: u64, port: u16, bytes: usize) -> Phv {
        let mut p = make_phv(BitBuffer::zeros(bytes * 8), 0, 0, seq, 1 << 20).unwrap();
        p.set_uint(meta::EGRESS_PORT, u128::from(port), PORT_BITS);
        p
    }

    fn sched(params: SchedParams) -> Scheduler {
        Scheduler::new(params, 4, &Registry::default()).unwrap()
    }

    #[test]
    fn fifo_pacing() {
        let mut s = sched(SchedParams {
            rate_bps: Some(1_000_000_000),
            ..Default::default()
        });
        s.insert(pkt(0, 1, 1500)).unwrap();
        s.insert(pkt(1, 1, 1500)).unwrap();
        let (_, d0) = s.remove(1, 100).unwrap();
        let (_, d1) = s.remove(1, 100).unwrap();
        assert_eq!(d1 - d0, 12_000);
        assert!(s.remove(1, 100).is_none());
    }

    #[test]
    fn params_and_inspect() {
        let mut s = sched(SchedParams::default());
        assert_eq!(s.inspect().occupancy.values().sum::<usize>(), 0);
        for i in 0..3 {
            s.insert(pkt(i, 2, 10)).unwrap();
        }
        let snap = s.inspect();
        assert_eq!(snap.occupancy[&2], 3);
        s.insert(pkt(9, 2, 10)).unwrap();
        assert_eq!(snap.occupancy[&2], 3);
        assert_eq!(s.set_param("weight.1", "2"), Err(SchedError::UnknownParam("weight.1".into())));
        assert!(matches!(s.set_param("capacity", "0"), Err(SchedError::InvalidValue { .. })));
        s.set_param("capacity", "1").unwrap();
        s.insert(pkt(10, 3, 10)).unwrap();
        assert!(matches!(s.insert(pkt(11, 3, 10)).unwrap(), InsertOutcome::DroppedSelf(_)));
        assert_eq!(s.insert(pkt(12, 9, 10)), Err(SchedError::NoEgressPort));
    }

    #[test]
    fn wfq_weight_validation() {
        let mut s = sched(SchedParams {
            algorithm: "wfq".into(),
            ..Default::default()
        });
        assert!(matches!(s.set_param("weight.1", "0"), Err(SchedError::InvalidValue { .. })));
        s.set_param("weight.1", "3").unwrap();
        assert_eq!(s.params().weights["1"], 3);
        assert!(Scheduler::new(
            SchedParams {
                algorithm: "nope".into(),
                ..Default::default()
            },
            1,
            &Registry::default()
        )
        .is_err());
    }
}
