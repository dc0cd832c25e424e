// SPDX-License-Identifier: Apache-2.0

//! The device: every component wired in a fixed order and driven by a
//! discrete-event loop over simulated nanoseconds.
//!
//! Events at equal times run in class order (control plane, packet
//! processing, ingress buffer drains, BRE drains, scheduler ticks) and then
//! in creation order. A processing component handles a PHV at its entry
//! event; the PHV leaves `cost` ns later, or later still if the component
//! was busy. A buffer's entry is the receive time and its exit is the pop
//! time plus its cost. Each component's entry equals the previous exit, so
//! per-component delays add up to the end-to-end delay.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::Serialize;

use crate::bits::BitBuffer;
use crate::buffer::{BufferId, BufferSet, ReceiveOutcome};
use crate::control::{CpError, CpReadRecord, CpScript};
use crate::deparser::DeparseGraph;
use crate::delay::{network_delay, Component, DelayBreakdown, DelayRecord};
use crate::mau::{MauGraph, StatefulStore};
use crate::parser::ParseGraph;
use crate::phv::{make_phv, Phv, Schema};
use crate::replication::Mgt;
use crate::scheduler::{InsertOutcome, Scheduler, SdsSnapshot};
use crate::trace::TraceRecord;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineConfig {
    pub ports: u16,
    pub enable_be1: bool,
    pub enable_be2: bool,
    pub enable_egress: bool,
    /// Processing cost per component in ns. Ports are always free.
    pub costs: BTreeMap<Component, u64>,
    pub link_delay_ns: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            ports: 8,
            enable_be1: false,
            enable_be2: true,
            enable_egress: true,
            costs: BTreeMap::new(),
            link_delay_ns: 0,
        }
    }
}

impl PipelineConfig {
    pub fn cost(&self, c: Component) -> u64 {
        self.costs.get(&c).copied().unwrap_or(0)
    }

    /// Component a PHV enters after leaving `c`.
    pub fn next(&self, c: Component) -> Component {
        use Component::*;
        match c {
            PortIn if self.enable_be1 => Be1,
            PortIn | Be1 => PrIn,
            PrIn if self.enable_be2 => Be2,
            PrIn | Be2 => MauIn,
            MauIn => DprIn,
            DprIn => Bre,
            Bre if self.enable_egress => PrE,
            Bre | DprE => Sched,
            PrE => MauE,
            MauE => DprE,
            Sched | PortE => PortE,
        }
    }
}

/// A loaded, validated data-plane program.
#[derive(Debug, Clone)]
pub struct Program {
    pub name: String,
    pub schema: Schema,
    pub config: PipelineConfig,
    pub parser_ingress: ParseGraph,
    pub parser_egress: ParseGraph,
    pub be1: BufferSet,
    pub be2: BufferSet,
    pub bre: BufferSet,
    pub store: StatefulStore,
    pub mau_ingress: MauGraph,
    pub mau_egress: MauGraph,
    pub deparser_ingress: DeparseGraph,
    pub deparser_egress: DeparseGraph,
    pub mgt: Mgt,
    pub scheduler: Scheduler,
}

/// States of the packet lifecycle machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LifecycleState {
    PortIn,
    Be1Receive,
    Be1Send,
    ParseIngress,
    Be2Receive,
    Be2Send,
    MauIngress,
    DeparseIngress,
    BreReplicate,
    BreReceiveUnicast,
    BreReceiveManycast,
    BreSend,
    ParseEgress,
    MauEgress,
    DeparseEgress,
    Schedule,
    PortE,
    Emitted,
    Dropped,
}

impl LifecycleState {
    pub fn label(self) -> &'static str {
        use LifecycleState::*;
        match self {
            PortIn => "S1",
            Be1Receive => "S2",
            Be1Send => "S3",
            ParseIngress => "S4",
            Be2Receive => "S5",
            Be2Send => "S6",
            MauIngress => "S7",
            DeparseIngress => "S8",
            BreReplicate => "S9",
            BreReceiveUnicast => "S10",
            BreReceiveManycast => "S11",
            BreSend => "S12",
            ParseEgress => "S13",
            MauEgress => "S14",
            DeparseEgress => "S15",
            Schedule => "SCHED",
            PortE => "PORT_E",
            Emitted => "EMITTED",
            Dropped => "DROPPED",
        }
    }

    /// Sub-machine a complex state expands to, if any.
    pub fn sub_machine(self) -> Option<&'static str> {
        use LifecycleState::*;
        match self {
            Be1Receive | Be2Receive | BreReceiveUnicast | BreReceiveManycast => Some("buffer_receiver"),
            Be1Send | Be2Send | BreSend => Some("buffer_sender"),
            ParseIngress | ParseEgress => Some("parser"),
            MauIngress | MauEgress => Some("mau"),
            DeparseIngress | DeparseEgress => Some("deparser"),
            _ => None,
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        use LifecycleState::*;
        [
            PortIn,
            Be1Receive,
            Be1Send,
            ParseIngress,
            Be2Receive,
            Be2Send,
            MauIngress,
            DeparseIngress,
            BreReplicate,
            BreReceiveUnicast,
            BreReceiveManycast,
            BreSend,
            ParseEgress,
            MauEgress,
            DeparseEgress,
            Schedule,
            PortE,
            Emitted,
            Dropped,
        ]
        .into_iter()
        .find(|st| st.label() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BufferStage {
    Be1,
    Be2,
    Bre,
}

impl BufferStage {
    pub const ALL: [BufferStage; 3] = [BufferStage::Be1, BufferStage::Be2, BufferStage::Bre];

    pub fn component(self) -> Component {
        match self {
            BufferStage::Be1 => Component::Be1,
            BufferStage::Be2 => Component::Be2,
            BufferStage::Bre => Component::Bre,
        }
    }

    pub fn name(self) -> &'static str {
        self.component().name()
    }

    fn class(self) -> u8 {
        match self {
            BufferStage::Bre => CLASS_BRE_DRAIN,
            _ => CLASS_BE_DRAIN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Notification {
    pub at: u64,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub buffer: Option<BufferId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node: Option<String>,
}

/// Count, sum, extremes and a log2 histogram of delays in ns. Bucket 0
/// holds zero; bucket `b > 0` holds values in `[2^(b-1), 2^b)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DelayAgg {
    pub count: u64,
    pub sum_ns: u64,
    pub min_ns: Option<u64>,
    pub max_ns: Option<u64>,
    pub histogram_log2: BTreeMap<u32, u64>,
}

impl DelayAgg {
    pub fn add(&mut self, v: u64) {
        self.count += 1;
        self.sum_ns += v;
        self.min_ns = Some(self.min_ns.map_or(v, |m| m.min(v)));
        self.max_ns = Some(self.max_ns.map_or(v, |m| m.max(v)));
        *self.histogram_log2.entry(log2_bucket(v)).or_default() += 1;
    }
}

pub fn log2_bucket(v: u64) -> u32 {
    64 - v.leading_zeros()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Residual {
    pub be1: BTreeMap<BufferId, usize>,
    pub be2: BTreeMap<BufferId, usize>,
    pub bre: BTreeMap<BufferId, usize>,
    pub sds: BTreeMap<u16, usize>,
    pub total: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Stats {
    pub program: String,
    pub arrivals: u64,
    pub emissions: u64,
    /// Extra PHVs created by manycast (copies minus one per packet).
    pub replicated_extra: u64,
    pub drops: u64,
    pub drops_by_reason: BTreeMap<String, u64>,
    pub residual: Residual,
    pub counters: BTreeMap<String, u64>,
    pub delay: BTreeMap<String, DelayAgg>,
    pub table_misses: BTreeMap<String, u64>,
    pub notifications: Vec<Notification>,
    pub cp_applied: u64,
    pub cp_errors: Vec<CpError>,
    pub cp_reads: Vec<CpReadRecord>,
    pub sds: Option<SdsSnapshot>,
    pub egress_guard_violations: u64,
}

impl Stats {
    /// arrivals + replicated_extra == emissions + drops + residual.
    pub fn conserved(&self) -> bool {
        self.arrivals + self.replicated_extra == self.emissions + self.drops + self.residual.total
    }

    pub fn drops_for(&self, reason: &str) -> u64 {
        self.drops_by_reason.get(reason).copied().unwrap_or(0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize")
    }
}

/// One packet leaving the device.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Emission {
    pub seq: u64,
    pub port: u16,
    /// Port_E exit plus link delay.
    pub time_ns: u64,
    pub data: BitBuffer,
    pub delay: DelayRecord,
    pub breakdown: DelayBreakdown,
    pub copy_index: Option<u128>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub log_events: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub output: Vec<TraceRecord>,
    pub emissions: Vec<Emission>,
    pub stats: Stats,
    pub events: Vec<String>,
}

const CLASS_CP: u8 = 0;
const CLASS_PACKET: u8 = 1;
const CLASS_BE_DRAIN: u8 = 2;
const CLASS_BRE_DRAIN: u8 = 3;
const CLASS_TICK: u8 = 4;

#[derive(Debug)]
enum EventKind {
    Cp(usize),
    Arrive(usize),
    Enter(Component, Box<Phv>),
    Drain(BufferStage),
    Tick(u16),
}

#[derive(Debug)]
struct Event {
    at: u64,
    class: u8,
    order: u64,
    kind: EventKind,
}

impl Event {
    fn key(&self) -> (u64, u8, u64) {
        (self.at, self.class, self.order)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.key().cmp(&self.key())
    }
}

/// A running device instance.
pub struct Device {
    pub(crate) p: Program,
    pub(crate) now: u64,
    heap: BinaryHeap<Event>,
    event_order: u64,
    next_seq: u64,
    busy_until: BTreeMap<Component, u64>,
    draining: BTreeSet<BufferStage>,
    tick_pending: BTreeSet<u16>,
    pub(crate) stats: Stats,
    pending: Vec<Notification>,
    log: Option<Vec<String>>,
    output: Vec<TraceRecord>,
    emissions: Vec<Emission>,
}

impl Device {
    pub fn new(program: Program, opts: &RunOptions) -> Self {
        let stats = Stats {
            program: program.name.clone(),
            ..Default::default()
        };
        Self {
            p: program,
            now: 0,
            heap: BinaryHeap::new(),
            event_order: 0,
            next_seq: 0,
            busy_until: BTreeMap::new(),
            draining: BTreeSet::new(),
            tick_pending: BTreeSet::new(),
            stats,
            pending: Vec::new(),
            log: opts.log_events.then(Vec::new),
            output: Vec::new(),
            emissions: Vec::new(),
        }
    }

    pub fn program(&self) -> &Program {
        &self.p
    }

    pub fn store(&self) -> &StatefulStore {
        &self.p.store
    }

    pub fn buffers(&self, stage: BufferStage) -> &BufferSet {
        match stage {
            BufferStage::Be1 => &self.p.be1,
            BufferStage::Be2 => &self.p.be2,
            BufferStage::Bre => &self.p.bre,
        }
    }

    pub(crate) fn buffers_mut(&mut self, stage: BufferStage) -> &mut BufferSet {
        match stage {
            BufferStage::Be1 => &mut self.p.be1,
            BufferStage::Be2 => &mut self.p.be2,
            BufferStage::Bre => &mut self.p.bre,
        }
    }

    /// Drains notifications raised since the last poll.
    pub fn poll_notifications(&mut self) -> Vec<Notification> {
        std::mem::take(&mut self.pending)
    }

    pub(crate) fn notify(&mut self, n: Notification) {
        self.stats.notifications.push(n.clone());
        self.pending.push(n);
    }

    fn push(&mut self, at: u64, class: u8, kind: EventKind) {
        let order = self.event_order;
        self.event_order += 1;
        self.heap.push(Event { at, class, order, kind });
    }

    fn log(&mut self, seq: u64, state: LifecycleState, detail: &str) {
        if let Some(l) = &mut self.log {
            let mut line = format!("{} seq={} {}", self.now, seq, state.label());
            if !detail.is_empty() {
                line.push(' ');
                line.push_str(detail);
            }
            l.push(line);
        }
    }

    fn drop_phv(&mut self, phv: &Phv, reason: &str) {
        self.stats.drops += 1;
        *self.stats.drops_by_reason.entry(reason.to_string()).or_default() += 1;
        self.log(phv.seq(), LifecycleState::Dropped, reason);
    }

    /// Replays `trace`, interleaving the commands of `script`.
    pub fn run(mut self, trace: &[TraceRecord], script: &CpScript) -> RunOutput {
        self.stats.cp_errors.extend(script.errors.iter().cloned());
        for (i, c) in script.commands.iter().enumerate() {
            self.push(c.at, CLASS_CP, EventKind::Cp(i));
        }
        for (i, r) in trace.iter().enumerate() {
            self.push(r.time_ns, CLASS_PACKET, EventKind::Arrive(i));
        }
        while let Some(ev) = self.heap.pop() {
            self.now = ev.at;
            match ev.kind {
                EventKind::Cp(i) => {
                    let cmd = &script.commands[i];
                    self.apply_command(cmd);
                    for s in BufferStage::ALL {
                        self.kick(s);
                    }
                }
                EventKind::Arrive(i) => self.arrive(&trace[i]),
                EventKind::Enter(c, phv) => self.enter(c, *phv),
                EventKind::Drain(s) => self.drain(s),
                EventKind::Tick(port) => self.tick(port),
            }
        }
        self.finish()
    }

    fn arrive(&mut self, r: &TraceRecord) {
        self.stats.arrivals += 1;
        let seq = self.next_seq;
        self.next_seq += 1;
        let bits = BitBuffer::from_bytes(r.bytes.clone());
        let mut phv = match make_phv(bits, r.port, self.now, seq, self.p.schema.max_packet_length_bits()) {
            Ok(p) => p,
            Err(_) => {
                let dummy = make_phv(BitBuffer::new(), r.port, self.now, seq, usize::MAX).expect("empty packet");
                self.drop_phv(&dummy, "packet_too_long");
                return;
            }
        };
        self.log(seq, LifecycleState::PortIn, &format!("port={}", r.port));
        if r.port >= self.p.config.ports {
            self.drop_phv(&phv, "invalid_ingress_port");
            return;
        }
        phv.delay.enter(Component::PortIn, self.now);
        phv.delay.exit(Component::PortIn, self.now);
        let next = self.p.config.next(Component::PortIn);
        self.push(self.now, CLASS_PACKET, EventKind::Enter(next, Box::new(phv)));
    }

    /// Serializes a processing component: returns the exit time.
    fn occupy(&mut self, c: Component) -> u64 {
        let start = self.now.max(self.busy_until.get(&c).copied().unwrap_or(0));
        let exit = start + self.p.config.cost(c);
        self.busy_until.insert(c, exit);
        exit
    }

    fn forward(&mut self, c: Component, mut phv: Phv, exit: u64) {
        phv.delay.exit(c, exit);
        let next = self.p.config.next(c);
        self.push(exit, CLASS_PACKET, EventKind::Enter(next, Box::new(phv)));
    }

    fn enter(&mut self, c: Component, mut phv: Phv) {
        use Component::*;
        let seq = phv.seq();
        match c {
            Be1 => self.receive(BufferStage::Be1, phv),
            Be2 => self.receive(BufferStage::Be2, phv),
            Bre => self.replicate(phv),
            Sched => self.schedule(phv),
            PortE => self.emit(phv),
            PrIn | PrE => {
                phv.delay.enter(c, self.now);
                let (state, graph) = if c == PrIn {
                    (LifecycleState::ParseIngress, &self.p.parser_ingress)
                } else {
                    (LifecycleState::ParseEgress, &self.p.parser_egress)
                };
                if c == PrE {
                    // egress parsing starts from the bits; metadata is carried
                    let headers: Vec<String> = self.p.schema.headers().iter().map(|h| h.id.clone()).collect();
                    for h in headers {
                        phv.invalidate(&h);
                    }
                }
                let res = graph.run(&self.p.schema, &mut phv);
                self.log(seq, state, "");
                match res {
                    Ok(()) => {
                        let exit = self.occupy(c);
                        self.forward(c, phv, exit);
                    }
                    Err(e) => self.drop_phv(&phv, e.counter()),
                }
            }
            MauIn | MauE => {
                phv.delay.enter(c, self.now);
                let (state, graph) = if c == MauIn {
                    (LifecycleState::MauIngress, &mut self.p.mau_ingress)
                } else {
                    (LifecycleState::MauEgress, &mut self.p.mau_egress)
                };
                let res = graph.run(&mut phv, &self.p.schema, &mut self.p.store, self.now);
                self.log(seq, state, "");
                match res {
                    Ok(out) => {
                        for node in out.miss_alerts {
                            self.notify(Notification {
                                at: self.now,
                                kind: "table_miss_threshold".into(),
                                stage: Some(c.name().into()),
                                buffer: None,
                                node: Some(node),
                            });
                        }
                        if out.dropped {
                            self.drop_phv(&phv, "mat_drop");
                        } else {
                            let exit = self.occupy(c);
                            self.forward(c, phv, exit);
                        }
                    }
                    Err(e) => self.drop_phv(&phv, e.counter()),
                }
            }
            DprIn | DprE => {
                phv.delay.enter(c, self.now);
                let (state, graph) = if c == DprIn {
                    (LifecycleState::DeparseIngress, &self.p.deparser_ingress)
                } else {
                    (LifecycleState::DeparseEgress, &self.p.deparser_egress)
                };
                let res = graph.run(&mut phv);
                self.log(seq, state, "");
                match res {
                    Ok(()) => {
                        let exit = self.occupy(c);
                        self.forward(c, phv, exit);
                    }
                    Err(e) => self.drop_phv(&phv, e.counter()),
                }
            }
            PortIn => unreachable!("Port_In is entered through arrivals"),
        }
    }

    fn receive(&mut self, stage: BufferStage, mut phv: Phv) {
        let seq = phv.seq();
        phv.delay.enter(stage.component(), self.now);
        let state = match stage {
            BufferStage::Be1 => LifecycleState::Be1Receive,
            _ => LifecycleState::Be2Receive,
        };
        let outcome = self.buffers_mut(stage).receive(phv);
        self.after_receive(stage, seq, state, outcome);
    }

    fn after_receive(&mut self, stage: BufferStage, seq: u64, state: LifecycleState, outcome: ReceiveOutcome) {
        match outcome {
            ReceiveOutcome::Stored(id) => {
                self.log(seq, state, &format!("{}={}", stage.name(), id));
                self.kick(stage);
            }
            ReceiveOutcome::Dropped {
                buffer,
                reason,
                notify,
                phv,
            } => {
                self.log(seq, state, &format!("{}={}", stage.name(), buffer));
                if notify {
                    self.notify(Notification {
                        at: self.now,
                        kind: "buffer_full".into(),
                        stage: Some(stage.name().into()),
                        buffer: Some(buffer),
                        node: None,
                    });
                }
                self.drop_phv(&phv, reason.counter());
            }
        }
    }

    /// Starts the sender of `stage` if it is idle and has work.
    pub(crate) fn kick(&mut self, stage: BufferStage) {
        if !self.draining.contains(&stage) && self.buffers(stage).has_eligible() {
            self.draining.insert(stage);
            self.push(self.now, stage.class(), EventKind::Drain(stage));
        }
    }

    fn drain(&mut self, stage: BufferStage) {
        let Some((id, phv)) = self.buffers_mut(stage).send() else {
            self.draining.remove(&stage);
            return;
        };
        let state = match stage {
            BufferStage::Be1 => LifecycleState::Be1Send,
            BufferStage::Be2 => LifecycleState::Be2Send,
            BufferStage::Bre => LifecycleState::BreSend,
        };
        self.log(phv.seq(), state, &format!("{}={}", stage.name(), id));
        let exit = self.now + self.p.config.cost(stage.component());
        self.forward(stage.component(), phv, exit);
        if self.buffers(stage).has_eligible() {
            self.push(exit, stage.class(), EventKind::Drain(stage));
        } else {
            self.draining.remove(&stage);
        }
    }

    fn replicate(&mut self, mut phv: Phv) {
        let seq = phv.seq();
        phv.delay.enter(Component::Bre, self.now);
        self.log(seq, LifecycleState::BreReplicate, "");
        let mut next_seq = self.next_seq;
        let res = self.p.mgt.replicate(phv.clone(), || {
            let s = next_seq;
            next_seq += 1;
            s
        });
        self.next_seq = next_seq;
        let copies = match res {
            Ok(c) => c,
            Err(e) => {
                self.drop_phv(&phv, e.counter());
                return;
            }
        };
        let manycast = phv.is_valid(crate::phv::meta::MCAST_GROUP);
        self.stats.replicated_extra += copies.len() as u64 - 1;
        let state = if manycast {
            LifecycleState::BreReceiveManycast
        } else {
            LifecycleState::BreReceiveUnicast
        };
        for (port, mut copy) in copies {
            copy.lock_egress(port);
            let cseq = copy.seq();
            let outcome = self.p.bre.receive_into(BufferId::from(port), copy);
            self.after_receive(BufferStage::Bre, cseq, state, outcome);
        }
    }

    fn schedule(&mut self, mut phv: Phv) {
        let seq = phv.seq();
        phv.delay.enter(Component::Sched, self.now);
        let port = phv.egress_port();
        self.log(seq, LifecycleState::Schedule, &format!("port={}", port.map_or(-1, i64::from)));
        match self.p.scheduler.insert(phv.clone()) {
            Err(_) => self.drop_phv(&phv, "no_egress"),
            Ok(InsertOutcome::DroppedSelf(p)) => self.drop_phv(&p, "sched_full"),
            Ok(out) => {
                if let InsertOutcome::Evicted(p) = out {
                    self.drop_phv(&p, "sched_evicted");
                }
                let port = port.expect("insert succeeded");
                if self.tick_pending.insert(port) {
                    let at = self.now.max(self.p.scheduler.next_free(port));
                    self.push(at, CLASS_TICK, EventKind::Tick(port));
                }
            }
        }
    }

    fn tick(&mut self, port: u16) {
        let Some((phv, depart)) = self.p.scheduler.remove(port, self.now) else {
            self.tick_pending.remove(&port);
            return;
        };
        let exit = depart + self.p.config.cost(Component::Sched);
        self.forward(Component::Sched, phv, exit);
        if self.p.scheduler.occupancy(port) > 0 {
            let at = self.now.max(self.p.scheduler.next_free(port));
            self.push(at, CLASS_TICK, EventKind::Tick(port));
        } else {
            self.tick_pending.remove(&port);
        }
    }

    fn emit(&mut self, mut phv: Phv) {
        phv.delay.enter(Component::PortE, self.now);
        phv.delay.exit(Component::PortE, self.now);
        let port = phv.egress_port().unwrap_or(0);
        if phv.egress_lock() != phv.egress_port() {
            self.stats.egress_guard_violations += 1;
        }
        self.log(phv.seq(), LifecycleState::PortE, &format!("port={port}"));
        let link = self.p.config.link_delay_ns;
        let breakdown = network_delay(&phv.delay, link).expect("complete record at Port_E");
        for (c, _) in phv.delay.visited() {
            let d = phv.delay.component_delay(c).expect("complete record");
            self.stats.delay.entry(c.name().to_string()).or_default().add(d);
        }
        for (k, v) in [
            ("queuing", breakdown.queuing),
            ("processing", breakdown.processing),
            ("total", breakdown.total),
        ] {
            self.stats.delay.entry(k.to_string()).or_default().add(v);
        }
        let time_ns = self.now + link;
        self.stats.emissions += 1;
        self.log(phv.seq(), LifecycleState::Emitted, &format!("port={port} t={time_ns}"));
        self.output.push(TraceRecord {
            time_ns,
            port,
            bytes: phv.data_buffer.as_bytes().to_vec(),
        });
        self.emissions.push(Emission {
            seq: phv.seq(),
            port,
            time_ns,
            copy_index: phv.get_u128(crate::phv::meta::COPY_INDEX).ok(),
            data: phv.data_buffer,
            delay: phv.delay,
            breakdown,
        });
    }

    fn finish(mut self) -> RunOutput {
        let occ = |b: &BufferSet| -> BTreeMap<BufferId, usize> {
            b.occupancies().into_iter().filter(|(_, n)| *n > 0).collect()
        };
        let r = &mut self.stats.residual;
        r.be1 = occ(&self.p.be1);
        r.be2 = occ(&self.p.be2);
        r.bre = occ(&self.p.bre);
        r.sds = self
            .p
            .scheduler
            .ports()
            .map(|p| (p, self.p.scheduler.occupancy(p)))
            .filter(|(_, n)| *n > 0)
            .collect();
        r.total = (r.be1.values().sum::<usize>()
            + r.be2.values().sum::<usize>()
            + r.bre.values().sum::<usize>()
            + r.sds.values().sum::<usize>()) as u64;
        self.stats.counters = self.p.store.counters().clone();
        for (stage, g) in [("ingress", &self.p.mau_ingress), ("egress", &self.p.mau_egress)] {
            for (node, n) in g.misses() {
                self.stats.table_misses.insert(format!("{stage}.{node}"), *n);
            }
        }
        self.stats.sds = Some(self.p.scheduler.inspect());
        RunOutput {
            output: self.output,
            emissions: self.emissions,
            stats: self.stats,
            events: self.log.unwrap_or_default(),
        }
    }
}

/// Loads `program` into a fresh device and replays `trace` against it.
pub fn run_trace(program: Program, trace: &[TraceRecord], script: &CpScript, opts: &RunOptions) -> RunOutput {
    Device::new(program, opts).run(trace, script)
}
