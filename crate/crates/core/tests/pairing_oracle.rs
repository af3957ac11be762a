mod common;

use std::collections::BTreeSet;

use common::{check_pairing, reference_pairing};
use proptest::prelude::*;
use qcc_core::pairing::{bernoulli_streams, window_scan};
use qcc_core::{ClickRecord, PortId, Side, pair_clicks};

fn stream(port: PortId, slots: &BTreeSet<u64>) -> Vec<ClickRecord> {
    slots
        .iter()
        .enumerate()
        .map(|(i, &slot)| ClickRecord {
            port,
            slot,
            side: if i % 3 == 0 { Side::L } else { Side::R },
        })
        .collect()
}

fn streams() -> impl Strategy<Value = ([Vec<ClickRecord>; 3], u64)> {
    let set = || prop::collection::btree_set(0u64..120, 0..=30);
    (set(), set(), set(), 0u64..60).prop_map(|(a, b, c, w)| {
        (
            [
                stream(PortId::P1, &a),
                stream(PortId::P2, &b),
                stream(PortId::P3, &c),
            ],
            w,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn greedy_matches_exhaustive_oracle((s, w) in streams()) {
        let got = pair_clicks([&s[0], &s[1], &s[2]], w).unwrap();
        if let Err(e) = check_pairing(&s, w, &got) {
            return Err(TestCaseError::fail(e));
        }
        let slots: Vec<[u64; 3]> = got.iter().map(|t| t.slots()).collect();
        prop_assert_eq!(slots, reference_pairing(&s, w));
    }

    #[test]
    fn count_monotone_in_window((s, w) in streams(), dw in 0u64..40) {
        let a = pair_clicks([&s[0], &s[1], &s[2]], w).unwrap().len();
        let b = pair_clicks([&s[0], &s[1], &s[2]], w + dw).unwrap().len();
        prop_assert!(a <= b, "window {} gave {}, window {} gave {}", w, a, w + dw, b);
    }

    #[test]
    fn deterministic((s, w) in streams()) {
        let a = pair_clicks([&s[0], &s[1], &s[2]], w).unwrap();
        let b = pair_clicks([&s[0], &s[1], &s[2]], w).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn sparse_streams_pair_most_clicks() {
    let s = bernoulli_streams(1e-3, 2_000_000, 9);
    let rows = window_scan(&s, &[50_000]).unwrap();
    let r = rows[0];
    assert!(r.paired as f64 >= 0.9 * r.clicks as f64, "{r:?}");
    assert!(r.coincidences * 1000 <= r.paired.max(1), "{r:?}");
}
