// SPDX-License-Identifier: Apache-2.0

mod common;

use rand::Rng;

use avs_core::trace::{format_trace, parse_trace, TraceError};

use common::*;

#[test]
fn thousand_random_records_round_trip() {
    let mut r = rng(0x7ace);
    let mut t = 0u64;
    let records: Vec<_> = (0..1000)
        .map(|_| {
            t += r.random_range(0..1000);
            let bytes: Vec<u8> = (0..r.random_range(0..128)).map(|_| r.random()).collect();
            rec(t, r.random(), bytes)
        })
        .collect();
    let text = format_trace(&records);
    assert_eq!(parse_trace(&text).unwrap(), records);
    assert_eq!(format_trace(&parse_trace(&text).unwrap()), text);
}

#[test]
fn comments_and_blank_lines_are_skipped() {
    let got = parse_trace("# header\n\n10 2 abCD  # trailing\n").unwrap();
    assert_eq!(got, [rec(10, 2, vec![0xab, 0xcd])]);
}

#[test]
fn odd_hex_is_malformed() {
    assert!(matches!(parse_trace("0 0 abc\n"), Err(TraceError::MalformedLine { line: 1, .. })));
}

#[test]
fn bad_fields_are_malformed() {
    for bad in ["x 0 00", "0 70000 00", "0 0 zz", "0 0 00 extra"] {
        assert!(matches!(parse_trace(bad), Err(TraceError::MalformedLine { .. })), "{bad}");
    }
}

#[test]
fn time_going_backwards_is_rejected() {
    assert_eq!(
        parse_trace("5 0 00\n4 0 00\n"),
        Err(TraceError::NonMonotone { line: 2, time: 4 })
    );
}

#[test]
fn sample_trace_parses() {
    let t = avs_core::trace::read_trace(&programs_dir().join("sample_trace.txt")).unwrap();
    assert_eq!(t.len(), 24);
    assert!(t.windows(2).all(|w| w[0].time_ns <= w[1].time_ns));
}
