// SPDX-License-Identifier: Apache-2.0

mod common;

use proptest::prelude::*;

use avs_core::score::{Axis, FeatureMatrix, Score, ScoreError, ScoredComponent};

use common::*;

fn matrix() -> FeatureMatrix {
    FeatureMatrix::from_json(&std::fs::read_to_string(programs_dir().join("feature_matrix.json")).unwrap()).unwrap()
}

#[test]
fn flexpipe_parser_row_renders_as_given() {
    let text = matrix().score().unwrap().render();
    assert!(text.lines().any(|l| l == "| Parser | FlexPipe | NA | 1 | NA | 1 |"), "{text}");
}

#[test]
fn three_on_a_data_type_axis_is_invalid() {
    let mut m = matrix();
    let flex = m.devices.iter_mut().find(|d| d.name == "FlexPipe").unwrap();
    flex.scores.get_mut(&ScoredComponent::Parser).unwrap().e2 = Score::Value(3);
    let errs = m.score().unwrap_err();
    assert!(matches!(&errs[..], [ScoreError::InvalidScore { axis: Axis::E2, value: 3, .. }]), "{errs:?}");
}

#[test]
fn all_zero_t_switch_rows_sum_to_zero() {
    let report = matrix().score().unwrap();
    let t_rows: Vec<_> = report.rows.iter().filter(|r| r.1 == "T-switch").collect();
    let zero_rows: Vec<_> = t_rows.iter().filter(|r| r.2.iter().all(|c| *c == Score::Value(0))).collect();
    // ingress buffer engine, ingress MAU, BRE and scheduler
    assert_eq!(zero_rows.len(), 4);
    let mut only_zero = matrix();
    only_zero.devices.retain(|d| d.name == "T-switch");
    for s in only_zero.devices[0].scores.values_mut() {
        s.e1 = Score::Value(0);
        s.e2 = Score::Value(0);
        s.e3 = Score::Value(0);
        s.e4 = Score::Value(0);
    }
    assert_eq!(only_zero.score().unwrap().totals["T-switch"].sum, 0);
}

#[test]
fn na_cells_are_not_applicable() {
    let report = matrix().score().unwrap();
    for (dev, t) in &report.totals {
        let cells: Vec<Score> = report.rows.iter().filter(|r| &r.1 == dev).flat_map(|r| r.2).collect();
        let applicable = cells.iter().filter(|c| **c != Score::Na).count() as u32;
        let sum: u32 = cells.iter().map(|c| match c { Score::Value(v) => u32::from(*v), Score::Na => 0 }).sum();
        assert_eq!((t.applicable, t.sum), (applicable, sum), "{dev}");
    }
}

proptest! {
    #[test]
    fn totals_ignore_device_order(perm in Just((0..5usize).collect::<Vec<_>>()).prop_shuffle()) {
        let base = matrix();
        let mut m = base.clone();
        m.devices = perm.iter().map(|&i| base.devices[i].clone()).collect();
        prop_assert_eq!(m.score().unwrap().totals, base.score().unwrap().totals);
    }
}
