// SPDX-License-Identifier: Apache-2.0

mod common;

use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::Rng;

use avs_core::mau::{parse_match_key, MatTable, MatchKey, MatchKind};
use avs_core::table::TableOp;

use common::*;

const KINDS: [MatchKind; 4] = [MatchKind::Exact, MatchKind::Lpm, MatchKind::Ternary, MatchKind::Range];

fn kind_strategy() -> impl Strategy<Value = MatchKind> {
    prop::sample::select(KINDS.to_vec())
}

fn width_strategy() -> impl Strategy<Value = usize> {
    prop::sample::select(vec![1usize, 4, 8, 16, 32, 48, 64, 100, 128])
}

#[test]
fn lpm_prefers_the_longest_prefix() {
    let mut t = MatTable::new(MatchKind::Lpm, 32);
    for (i, k) in ["10.0.0.0/8", "10.1.0.0/16", "0.0.0.0/0"].iter().enumerate() {
        t.apply(TableOp::Add, tagged_entry(parse_match_key(MatchKind::Lpm, k).unwrap(), 0, i)).unwrap();
    }
    let probe = |v: u32| t.lookup(u128::from(v)).map(entry_tag);
    assert_eq!(probe(0x0a01_0203), Some(1));
    assert_eq!(probe(0x0a02_0203), Some(0));
    assert_eq!(probe(0x0b00_0000), Some(2));
}

#[test]
fn ternary_ties_go_to_the_earlier_entry() {
    let mut t = MatTable::new(MatchKind::Ternary, 8);
    let k1 = parse_match_key(MatchKind::Ternary, "0x01&&&0x0f").unwrap();
    let k2 = parse_match_key(MatchKind::Ternary, "0x11&&&0xff").unwrap();
    t.apply(TableOp::Add, tagged_entry(k1, 5, 0)).unwrap();
    t.apply(TableOp::Add, tagged_entry(k2, 5, 1)).unwrap();
    assert_eq!(t.lookup(0x11).map(entry_tag), Some(0));
    t.apply(TableOp::Add, tagged_entry(k2, 6, 2)).unwrap();
    assert_eq!(t.lookup(0x11).map(entry_tag), Some(2));
    assert_eq!(t.lookup(0x21).map(entry_tag), Some(0));
}

#[test]
fn range_bounds_are_inclusive() {
    let mut t = MatTable::new(MatchKind::Range, 16);
    t.apply(TableOp::Add, tagged_entry(parse_match_key(MatchKind::Range, "5..9").unwrap(), 0, 0)).unwrap();
    assert_eq!(t.lookup(4), None);
    assert!(t.lookup(5).is_some());
    assert!(t.lookup(9).is_some());
    assert_eq!(t.lookup(10), None);
}

#[test]
fn duplicate_exact_key_and_missing_entry_are_errors() {
    let mut t = MatTable::new(MatchKind::Exact, 8);
    t.apply(TableOp::Add, tagged_entry(MatchKey::Exact(3), 0, 0)).unwrap();
    assert!(t.apply(TableOp::Add, tagged_entry(MatchKey::Exact(3), 0, 1)).is_err());
    assert!(t.apply(TableOp::Delete, tagged_entry(MatchKey::Exact(4), 0, 1)).is_err());
    assert!(t.apply(TableOp::Add, tagged_entry(MatchKey::Exact(0x100), 0, 1)).is_err());
    assert_eq!(t.len(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// Random add/modify/delete sequences against a plain vector model.
    #[test]
    fn lookup_agrees_with_linear_scan(seed in any::<u64>(), kind in kind_strategy(), width in width_strategy()) {
        let mut r = rng(seed);
        let mut table = MatTable::new(kind, width);
        let mut model = Vec::new();
        // small key pool so ops collide
        let pool: Vec<MatchKey> = (0..12).map(|_| random_key(&mut r, kind, width)).collect();
        let uses_priority = matches!(kind, MatchKind::Ternary | MatchKind::Range);
        for step in 0..60 {
            let key = *pool.choose(&mut r).unwrap();
            let prio = r.random_range(0..3);
            let op = *[TableOp::Add, TableOp::Add, TableOp::Modify, TableOp::Delete].choose(&mut r).unwrap();
            let e = tagged_entry(key, prio, step);
            let pos = model.iter().position(|m: &avs_core::mau::MatEntry| m.key == key && (!uses_priority || m.priority == prio));
            let res = table.apply(op, e.clone());
            match (op, pos) {
                (TableOp::Add, None) => { prop_assert!(res.is_ok()); model.push(e); }
                (TableOp::Modify, Some(i)) => { prop_assert!(res.is_ok()); model[i] = e; }
                (TableOp::Delete, Some(i)) => { prop_assert!(res.is_ok()); model.remove(i); }
                _ => prop_assert!(res.is_err()),
            }
            prop_assert_eq!(table.len(), model.len());
            let keys: Vec<_> = model.iter().map(|m| m.key).collect();
            for _ in 0..10 {
                let v = probe(&mut r, &keys, width);
                let got = table.lookup(v).map(entry_tag);
                let want = oracle_lookup(kind, width, &model, v).map(|i| entry_tag(&model[i]));
                prop_assert_eq!(got, want);
            }
        }
    }

    #[test]
    fn key_text_round_trips(seed in any::<u64>(), kind in kind_strategy(), width in width_strategy()) {
        let mut r = rng(seed);
        let k = random_key(&mut r, kind, width);
        prop_assert_eq!(parse_match_key(kind, &k.to_string()).unwrap(), k);
    }
}
