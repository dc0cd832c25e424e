// SPDX-License-Identifier: Apache-2.0

//! Shared fixtures, generators and independent oracles for the
//! integration suites.
#![allow(dead_code)]

use std::cmp::Reverse;
use std::path::PathBuf;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use avs_core::bits::width_mask;
use avs_core::dpp::{load_dpp, DppFile};
use avs_core::mau::{Action, Expr, MatEntry, MatchKey, MatchKind};
use avs_core::phv::{Direction, Phv, PhvOrderKey};
use avs_core::pipeline::Program;
use avs_core::trace::TraceRecord;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn programs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../programs")
}

pub fn load(name: &str) -> Program {
    let path = programs_dir().join(name);
    load_dpp(&path).unwrap_or_else(|d| panic!("{}: {d:?}", path.display()))
}

pub fn program_json(name: &str) -> Value {
    let text = std::fs::read_to_string(programs_dir().join(name)).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub fn build(v: &Value) -> Program {
    let f: DppFile = serde_json::from_value(v.clone()).unwrap();
    f.build().unwrap_or_else(|d| panic!("{d:?}"))
}

/// A packet in the canonical layout: 6+6+3+1 header bytes, then payload.
pub fn pkt(dst: u64, src: u64, vlan: u32, proto: u8, payload: &[u8]) -> Vec<u8> {
    let mut b = Vec::with_capacity(16 + payload.len());
    b.extend_from_slice(&dst.to_be_bytes()[2..]);
    b.extend_from_slice(&src.to_be_bytes()[2..]);
    b.extend_from_slice(&vlan.to_be_bytes()[1..]);
    b.push(proto);
    b.extend_from_slice(payload);
    b
}

pub fn rec(time_ns: u64, port: u16, bytes: Vec<u8>) -> TraceRecord {
    TraceRecord { time_ns, port, bytes }
}

// ---------------------------------------------------------------- lookup

/// Entries carry a unique `set_sched_order(i)` so a lookup result can be
/// traced back to its insertion index.
pub fn tagged_entry(key: MatchKey, priority: i64, i: usize) -> MatEntry {
    MatEntry {
        key,
        priority,
        actions: vec![Action::SetSchedOrder(Expr::constant(i as u128))],
    }
}

pub fn entry_tag(e: &MatEntry) -> usize {
    match &e.actions[0] {
        Action::SetSchedOrder(x) => match x.terms[0].1 {
            avs_core::mau::Operand::Const(v) => v as usize,
            _ => unreachable!(),
        },
        _ => unreachable!(),
    }
}

pub fn random_key(r: &mut impl Rng, kind: MatchKind, width: usize) -> MatchKey {
    let m = width_mask(width);
    let v = r.random::<u128>() & m;
    match kind {
        MatchKind::Exact => MatchKey::Exact(v),
        MatchKind::Lpm => {
            let len = r.random_range(0..=width as u32);
            let keep = m ^ m.checked_shr(len).unwrap_or(0);
            MatchKey::Lpm { value: v & keep, prefix_len: len }
        }
        MatchKind::Ternary => {
            // sparse masks so several rows overlap
            let mask = r.random::<u128>() & r.random::<u128>() & m;
            MatchKey::Ternary { value: v & mask, mask }
        }
        MatchKind::Range => {
            let a = v;
            let span = r.random::<u128>() & (m >> r.random_range(0..width as u32));
            MatchKey::Range { lo: a, hi: a.saturating_add(span).min(m) }
        }
    }
}

/// A probe value: often derived from a key so that lookups hit.
pub fn probe(r: &mut impl Rng, keys: &[MatchKey], width: usize) -> u128 {
    let m = width_mask(width);
    let noise = r.random::<u128>() & m;
    match keys.choose(r) {
        Some(k) if r.random_bool(0.7) => match *k {
            MatchKey::Exact(v) => v,
            MatchKey::Lpm { value, prefix_len } => {
                let keep = m ^ m.checked_shr(prefix_len).unwrap_or(0);
                value | (noise & !keep)
            }
            MatchKey::Ternary { value, mask } => value | (noise & !mask),
            MatchKey::Range { lo, hi } => match (hi - lo).checked_add(1) {
                Some(n) => lo + noise % n,
                None => noise,
            },
        },
        _ => noise,
    }
}

/// Linear-scan reference: index of the winning entry.
pub fn oracle_lookup(kind: MatchKind, width: usize, entries: &[MatEntry], v: u128) -> Option<usize> {
    let m = width_mask(width);
    let hits = entries.iter().enumerate().filter(|(_, e)| match e.key {
        MatchKey::Exact(k) => k == v,
        MatchKey::Lpm { value, prefix_len } => {
            // compare the top prefix_len bits one by one
            (0..prefix_len as usize).all(|b| {
                let bit = width - 1 - b;
                (value >> bit) & 1 == (v >> bit) & 1
            })
        }
        MatchKey::Ternary { value, mask } => (0..width).all(|b| (mask >> b) & 1 == 0 || (value >> b) & 1 == (v >> b) & 1),
        MatchKey::Range { lo, hi } => lo <= v & m && v & m <= hi,
    });
    match kind {
        MatchKind::Exact => hits.map(|(i, _)| i).next(),
        MatchKind::Lpm => hits
            .max_by_key(|(i, e)| match e.key {
                MatchKey::Lpm { prefix_len, .. } => (prefix_len, Reverse(*i)),
                _ => unreachable!(),
            })
            .map(|(i, _)| i),
        MatchKind::Ternary | MatchKind::Range => {
            hits.max_by_key(|(i, e)| (e.priority, Reverse(*i))).map(|(i, _)| i)
        }
    }
}

// ---------------------------------------------------------------- ordering

/// Sorts by building explicit tuples and using the standard sort.
pub fn brute_sort(phvs: &[Phv], key: &PhvOrderKey) -> Vec<u64> {
    let mut keyed: Vec<(Vec<i128>, u64, u64, u64)> = phvs
        .iter()
        .map(|p| {
            let fields = key
                .fields
                .iter()
                .map(|(f, d)| {
                    let v = p.get_u128(f).unwrap() as i128;
                    match d {
                        Direction::Asc => v,
                        Direction::Desc => -v,
                    }
                })
                .collect();
            (fields, p.arrival_time(), u64::from(p.ingress_port()), p.seq())
        })
        .collect();
    keyed.sort();
    keyed.into_iter().map(|k| k.3).collect()
}

// ---------------------------------------------------------------- programs

pub const HEADERS: &str = r#"[
    {"id": "eth_dst", "start_bit": 0, "length": 48},
    {"id": "eth_src", "start_bit": 48, "length": 48},
    {"id": "vlan_tag", "start_bit": 96, "length": 24},
    {"id": "proto_type", "start_bit": 120, "length": 8}
]"#;

pub fn headers() -> Value {
    serde_json::from_str(HEADERS).unwrap()
}

/// Forwards every packet out of its ingress port.
pub fn reflect_program(ports: u16) -> Value {
    json!({
        "name": "reflect",
        "headers": headers(),
        "pipeline": {"ports": ports},
        "mau_ingress": {"nodes": [
            {"id": "fwd", "field": "proto_type", "kind": "exact",
             "default_actions": "set_egress_port(ingress_port)"}
        ]}
    })
}

fn buffers(r: &mut impl Rng, ids: &[u32]) -> Vec<Value> {
    ids.iter()
        .map(|id| {
            json!({"id": id, "size": r.random_range(1..6),
                   "rx": r.random_bool(0.85), "tx": r.random_bool(0.8)})
        })
        .collect()
}

/// A random but valid program exercising drops, manycast, paused buffers,
/// stateful actions and every scheduler.
pub fn random_program(r: &mut impl Rng) -> Value {
    let ports: u16 = r.random_range(2..=6);
    let mut costs = serde_json::Map::new();
    for c in ["pr_in", "be1", "be2", "mau_in", "dpr_in", "bre", "pr_e", "mau_e", "dpr_e", "sched"] {
        if r.random_bool(0.5) {
            costs.insert(c.into(), json!(r.random_range(0..40)));
        }
    }
    let enable_egress = r.random_bool(0.6);
    let be1_ids = [1, 2];
    let be2_ids = [1, 2, 3];
    let mut port_map = serde_json::Map::new();
    for p in 0..ports {
        if r.random_bool(0.5) {
            port_map.insert(p.to_string(), json!(*be1_ids.choose(r).unwrap()));
        }
    }
    let bct: Vec<Value> = (1..=4u32)
        .map(|v| json!({"field": "vlan_tag", "value": v, "buffer": be2_ids.choose(r).unwrap(), "priority": r.random_range(0..3)}))
        .collect();
    let pool = |r: &mut dyn rand::RngCore| -> String {
        let p = u32::from(ports);
        match r.random_range(0..9) {
            0 => "drop".into(),
            1 => format!("set_egress_port({})", r.random_range(0..p + 1)),
            2 => format!("set_mcast_group({})", r.random_range(0..4)),
            3 => "counter_inc(c)".into(),
            4 => "register_write(r, 1, proto_type); register_read(tmp, r, 1)".into(),
            5 => "meter_exec(m, 0, color)".into(),
            6 => format!("set_sched_order({})", r.random_range(0..8)),
            7 => "add(eth_src, 1)".into(),
            _ => "no_op".into(),
        }
    };
    let in_entries: Vec<Value> = (0..r.random_range(1..6))
        .map(|k| json!({"key": k * 3, "actions": pool(r)}))
        .collect();
    let fallback = if r.random_bool(0.8) {
        format!("set_egress_port({})", r.random_range(0..ports))
    } else {
        "no_op".into()
    };
    let mut p = json!({
        "name": "random",
        "headers": headers(),
        "metadata": [{"id": "color", "type": {"uint": 2}}, {"id": "tmp", "type": {"uint": 16}}],
        "pipeline": {
            "ports": ports,
            "enable_be1": r.random_bool(0.5),
            "enable_be2": r.random_bool(0.7),
            "enable_egress": enable_egress,
            "costs_ns": costs,
            "link_delay_ns": r.random_range(0..100)
        },
        "be1": {"bpt": buffers(r, &be1_ids), "port_map": port_map},
        "be2": {"bpt": buffers(r, &be2_ids), "bct": bct},
        "bre": {"bpt": [{"id": 0, "size": r.random_range(1..4), "rx": true, "tx": r.random_bool(0.8)}]},
        "state": {
            "counters": ["c"],
            "registers": [{"name": "r", "size": 4, "width": 16}],
            "meters": [{"name": "m", "size": 1, "cir": 1000000, "cbs": 200, "pir": 2000000, "pbs": 400}]
        },
        "mau_ingress": {"nodes": [
            {"id": "classify", "field": "proto_type", "kind": "exact", "entries": in_entries,
             "on_hit": "fwd", "on_miss": "fwd"},
            {"id": "fwd", "field": "vlan_tag", "kind": "ternary",
             "entries": [{"key": "0x000001&&&0x00000f", "priority": 1, "actions": pool(r)}],
             "default_actions": fallback, "miss_threshold": 3}
        ]},
        "mgt": {"1": [0, ports - 1], "2": (0..ports).collect::<Vec<_>>()},
        "scheduler": {
            "algorithm": *["fifo", "strict_priority", "wfq"].choose(r).unwrap(),
            "capacity": r.random_range(1..6),
            "rate_bps": if r.random_bool(0.5) { json!(r.random_range(1_000_000_000u64..20_000_000_000)) } else { Value::Null },
            "weights": {"1": 2, "2": 3}
        }
    });
    if enable_egress {
        p["mau_egress"] = json!({"nodes": [
            {"id": "rewrite", "field": "vlan_tag", "kind": "range",
             "entries": [{"key": "0..2", "priority": 0, "actions": "set_field(eth_src, 7); set_sched_order(3)"},
                         {"key": "3..3", "priority": 0, "actions": "drop"}]}
        ]});
    }
    p
}

pub fn random_trace(r: &mut impl Rng, n: usize, ports: u16) -> Vec<TraceRecord> {
    let mut t = 0u64;
    (0..n)
        .map(|i| {
            t += r.random_range(0..300);
            let port = r.random_range(0..ports + 1);
            let bytes = if r.random_bool(0.05) {
                vec![0u8; r.random_range(0..16)]
            } else {
                let payload: Vec<u8> = (0..r.random_range(0..64)).map(|_| r.random()).collect();
                pkt(0x0a00_0000_0000 + i as u64, 0x0b00_0000_0000, r.random_range(0..6), r.random_range(0..16) * 3 % 16, &payload)
            };
            rec(t, port, bytes)
        })
        .collect()
}

pub fn random_script(r: &mut impl Rng, ports: u16, horizon: u64) -> String {
    let mut times: Vec<u64> = (0..r.random_range(0..12)).map(|_| r.random_range(0..horizon.max(1))).collect();
    times.sort();
    let mut s = String::new();
    for t in times {
        let line = match r.random_range(0..11) {
            0 => format!("bpt set be2 {} tx {}", r.random_range(0..4), r.random_bool(0.5)),
            1 => format!("bpt set be1 {} rx {}", r.random_range(0..3), r.random_bool(0.5)),
            2 => format!("bpt set bre {} size {}", r.random_range(0..ports), r.random_range(1..5)),
            3 => format!("table add classify exact {} drop", r.random_range(0..16)),
            4 => format!("table del classify exact {}", r.random_range(0..16)),
            5 => format!("mgt set 3 {}", r.random_range(0..ports)),
            6 => "mgt del 1".into(),
            7 => format!("sched set capacity {}", r.random_range(1..5)),
            8 => "read sds".into(),
            9 => "frobnicate the switch".into(),
            _ => "table add rewrite range 5..9 0 set_egress_port(1)".into(),
        };
        s.push_str(&format!("{t} {line}\n"));
    }
    s
}
