// SPDX-License-Identifier: Apache-2.0

mod common;

use proptest::prelude::*;
use serde_json::json;

use avs_core::control::{parse_script, CpScript};
use avs_core::pipeline::{run_trace, Program, RunOptions, RunOutput};
use avs_core::trace::TraceRecord;

use common::*;

fn go(p: Program, trace: &[TraceRecord], script: &str) -> RunOutput {
    let script = if script.is_empty() { CpScript::default() } else { parse_script(script) };
    run_trace(p, trace, &script, &RunOptions { log_events: true })
}

fn labels(out: &RunOutput, seq: u64) -> Vec<String> {
    let tag = format!("seq={seq}");
    out.events
        .iter()
        .filter(|l| l.split_whitespace().nth(1) == Some(tag.as_str()))
        .map(|l| l.split_whitespace().nth(2).unwrap().to_string())
        .collect()
}

// vlan 0x001525 selects BE2 buffer 3, which is open both ways
fn fwd_pkt(proto: u8) -> Vec<u8> {
    pkt(0x0a00_0000_0001, 0x0b00_0000_0000, 0x001525, proto, &[0xaa; 8])
}

#[test]
fn single_packet_visits_states_in_wiring_order() {
    let out = go(load("canonical.json"), &[rec(165, 0, fwd_pkt(4))], "");
    let want = [
        "S1", "S4", "S5", "S6", "S7", "S8", "S9", "S10", "S12", "S13", "S14", "S15", "SCHED", "PORT_E", "EMITTED",
    ];
    assert_eq!(labels(&out, 0), want);
    assert_eq!(out.output.len(), 1);
    assert_eq!(out.output[0].port, 1);
    assert_eq!(out.stats.counters["ipv4_counter"], 1);
}

#[test]
fn be1_adds_its_own_states() {
    let mut v = program_json("canonical.json");
    v["pipeline"]["enable_be1"] = json!(true);
    let out = go(build(&v), &[rec(0, 2, fwd_pkt(4))], "");
    let l = labels(&out, 0);
    assert_eq!(&l[..4], ["S1", "S2", "S3", "S4"]);
    assert_eq!(out.output.len(), 1);
}

#[test]
fn mau_drop_never_reaches_the_replication_engine() {
    let out = go(load("canonical.json"), &[rec(0, 0, fwd_pkt(6))], "");
    let l = labels(&out, 0);
    assert_eq!(l.last().unwrap(), "DROPPED");
    assert!(!l.iter().any(|s| ["S10", "S11", "S12", "SCHED"].contains(&s.as_str())));
    assert_eq!(out.stats.drops_for("mat_drop"), 1);
    assert!(out.output.is_empty());
}

#[test]
fn empty_trace_gives_empty_output() {
    let out = go(load("canonical.json"), &[], "");
    assert!(out.output.is_empty());
    assert!(out.events.is_empty());
    assert_eq!(out.stats.arrivals, 0);
    assert_eq!(out.stats.residual.total, 0);
    assert!(out.stats.conserved());
}

#[test]
fn rx_closed_buffer_drops() {
    let p = pkt(1, 2, 0x000005, 4, &[]);
    let out = go(load("canonical.json"), &[rec(0, 0, p)], "");
    assert_eq!(out.stats.drops_for("rx_closed"), 1);
    assert!(out.stats.conserved());
}

#[test]
fn paused_buffer_holds_packets_until_the_end() {
    let trace: Vec<_> = (0..5).map(|i| rec(i * 10, 0, pkt(1, 2, 0x000001, 4, &[i as u8]))).collect();
    let out = go(load("canonical.json"), &trace, "");
    assert!(out.output.is_empty());
    assert_eq!(out.stats.residual.be2.get(&1), Some(&5));
    assert_eq!(out.stats.residual.total, 5);
    assert!(out.stats.conserved());
}

#[test]
fn cp_resume_releases_buffer_at_its_timestamp() {
    let trace: Vec<_> = (0..4).map(|i| rec(10 + i * 10, 0, pkt(1, 2, 0x000001, 4, &[i as u8]))).collect();
    let without = go(load("canonical.json"), &trace, "");
    let with = go(load("canonical.json"), &trace, "100 bpt set be2 1 tx true\n");
    assert!(without.output.is_empty());
    assert_eq!(with.output.len(), 4);
    assert!(with.output.iter().all(|r| r.time_ns >= 100));
    // FIFO order out of the resumed buffer
    let seqs: Vec<u64> = with.emissions.iter().map(|e| e.seq).collect();
    assert_eq!(seqs, [0, 1, 2, 3]);
    assert_eq!(with.stats.cp_applied, 1);
}

#[test]
fn cp_table_add_changes_later_packets_only() {
    let trace = [rec(0, 0, fwd_pkt(17)), rec(50, 0, fwd_pkt(17))];
    let base = go(load("canonical.json"), &trace, "");
    assert_eq!(base.output.len(), 2);
    let at_zero = go(load("canonical.json"), &trace, "0 table add mat_proto exact 17 drop\n");
    assert!(at_zero.output.is_empty());
    assert_eq!(at_zero.stats.drops_for("mat_drop"), 2);
    let later = go(load("canonical.json"), &trace, "25 table add mat_proto exact 17 drop\n");
    assert_eq!(later.output.len(), 1);
    assert_eq!(later.stats.drops_for("mat_drop"), 1);
}

#[test]
fn bad_cp_lines_are_recorded_and_skipped() {
    let out = go(load("canonical.json"), &[rec(0, 0, fwd_pkt(4))], "0 frobnicate\n0 bpt set be2 99 tx true\n");
    assert_eq!(out.stats.cp_errors.len(), 2);
    assert_eq!(out.output.len(), 1);
}

#[test]
fn one_ns_per_component_plus_link() {
    let mut v = program_json("canonical.json");
    let costs: serde_json::Map<_, _> = ["pr_in", "be2", "mau_in", "dpr_in", "bre", "pr_e", "mau_e", "dpr_e", "sched"]
        .iter()
        .map(|c| (c.to_string(), json!(1)))
        .collect();
    v["pipeline"]["costs_ns"] = json!(costs);
    v["pipeline"]["link_delay_ns"] = json!(5);
    let out = go(build(&v), &[rec(1000, 0, fwd_pkt(4))], "");
    let e = &out.emissions[0];
    assert_eq!(e.breakdown.total, 14);
    assert_eq!(e.time_ns, 1014);
    assert_eq!(out.output[0].time_ns, 1014);
}

#[test]
fn buffer_full_notifies_once_per_episode() {
    let mut v = program_json("canonical.json");
    v["be2"]["bpt"][0]["size"] = json!(1);
    let trace: Vec<_> = (0..2).map(|i| rec(i, 0, pkt(1, 2, 0x000001, 4, &[]))).collect();
    let out = go(build(&v), &trace, "");
    let full: Vec<_> = out.stats.notifications.iter().filter(|n| n.kind == "buffer_full").collect();
    assert_eq!(full.len(), 1);
    assert_eq!(full[0].buffer, Some(1));
    assert_eq!(out.stats.drops_for("buffer_full"), 1);
}

#[test]
fn two_full_buffers_give_two_notifications() {
    let mut v = program_json("canonical.json");
    v["be2"]["bpt"] = json!([
        {"id": 1, "size": 1, "rx": true, "tx": false},
        {"id": 2, "size": 1, "rx": true, "tx": false}
    ]);
    v["be2"]["bct"] = json!([
        {"field": "vlan_tag", "value": 1, "buffer": 1, "priority": 0},
        {"field": "vlan_tag", "value": 2, "buffer": 2, "priority": 0}
    ]);
    let trace: Vec<_> = [1u32, 1, 2, 2].iter().enumerate().map(|(i, vl)| rec(i as u64, 0, pkt(1, 2, *vl, 4, &[]))).collect();
    let out = go(build(&v), &trace, "");
    let mut ids: Vec<_> = out.stats.notifications.iter().filter(|n| n.kind == "buffer_full").map(|n| n.buffer).collect();
    ids.sort();
    assert_eq!(ids, [Some(1), Some(2)]);
}

#[test]
fn quiet_run_has_no_notifications() {
    let out = go(load("canonical.json"), &[rec(0, 0, fwd_pkt(4))], "0 read notifications\n");
    assert!(out.stats.notifications.is_empty());
    assert_eq!(out.stats.cp_reads.len(), 1);
    assert_eq!(out.stats.cp_reads[0].result, json!([]));
}

#[test]
fn sample_run_matches_a_hand_classification() {
    let trace = avs_core::trace::read_trace(&programs_dir().join("sample_trace.txt")).unwrap();
    let script = std::fs::read_to_string(programs_dir().join("sample_cp.txt")).unwrap();
    let out = go(load("canonical.json"), &trace, &script);
    // classify each packet from its raw bytes and the program tables
    let (mut emitted, mut mat_drop, mut rx_closed, mut counted) = (0, 0, 0, 0);
    for t in &trace {
        let vlan = u32::from_be_bytes([0, t.bytes[12], t.bytes[13], t.bytes[14]]);
        let proto = t.bytes[15];
        if vlan == 0x000005 {
            rx_closed += 1;
            continue;
        }
        // buffer 1 is paused until the script opens it at 2000
        let mau_time = if vlan == 0x000001 { t.time_ns.max(2000) } else { t.time_ns };
        match proto {
            6 => mat_drop += 1,
            4 => {
                counted += 1;
                emitted += 1;
            }
            17 if mau_time >= 2500 => {
                counted += 1;
                emitted += 1;
            }
            _ => emitted += 1,
        }
    }
    assert_eq!(out.stats.arrivals, trace.len() as u64);
    assert_eq!(out.stats.emissions, emitted);
    assert_eq!(out.stats.drops_for("mat_drop"), mat_drop);
    assert_eq!(out.stats.drops_for("rx_closed"), rx_closed);
    assert_eq!(out.stats.counters["ipv4_counter"], counted);
    assert!(out.stats.conserved());
}

#[test]
fn passthrough_reflects_bytes_unchanged() {
    let trace: Vec<_> = (0..4u16).map(|p| rec(u64::from(p) * 7, p, fwd_pkt(4))).collect();
    let out = go(load("passthrough.json"), &trace, "");
    assert_eq!(out.output.len(), 4);
    for (i, o) in trace.iter().zip(&out.output) {
        assert_eq!(i.port, o.port);
        assert_eq!(i.bytes, o.bytes);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn accounting_balances(seed in any::<u64>()) {
        let mut r = rng(seed);
        let pv = random_program(&mut r);
        let ports = pv["pipeline"]["ports"].as_u64().unwrap() as u16;
        let n = rand::Rng::random_range(&mut r, 0..80);
        let trace = random_trace(&mut r, n, ports);
        let script = random_script(&mut r, ports, trace.last().map_or(50, |t| t.time_ns));
        let out = go(build(&pv), &trace, &script);
        let s = &out.stats;
        prop_assert!(s.conserved());
        prop_assert_eq!(s.arrivals, trace.len() as u64);
        prop_assert_eq!(s.emissions, out.output.len() as u64);
        prop_assert_eq!(s.drops, s.drops_by_reason.values().sum::<u64>());
        prop_assert_eq!(s.egress_guard_violations, 0);
        // emissions leave in time order
        prop_assert!(out.output.windows(2).all(|w| w[0].time_ns <= w[1].time_ns));
    }

    #[test]
    fn runs_are_deterministic(seed in any::<u64>()) {
        let mut r = rng(seed);
        let pv = random_program(&mut r);
        let ports = pv["pipeline"]["ports"].as_u64().unwrap() as u16;
        let trace = random_trace(&mut r, 40, ports);
        let script = random_script(&mut r, ports, 2000);
        let a = go(build(&pv), &trace, &script);
        let b = go(build(&pv), &trace, &script);
        prop_assert_eq!(a.output, b.output);
        prop_assert_eq!(a.events, b.events);
        prop_assert_eq!(a.stats.to_json(), b.stats.to_json());
    }
}
