mod common;

use common::{arb_scenario, invariant_failure};
use gcs_core::engine::run;
use gcs_core::time::ns;
use gcs_core::trace::TraceSet;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn contracts_hold_on_random_scenarios(spec in arb_scenario(ns(100))) {
        let failure = invariant_failure(&spec);
        prop_assert!(failure.is_none(), "{:?}", failure);
    }

    #[test]
    fn reruns_hash_identically(spec in arb_scenario(ns(40))) {
        let sc = spec.resolve().unwrap();
        prop_assert_eq!(run(&sc).unwrap().hash(), run(&sc).unwrap().hash());
    }

    #[test]
    fn traces_round_trip_through_disk(spec in arb_scenario(ns(30))) {
        let sc = spec.resolve().unwrap();
        let tr = run(&sc).unwrap();
        let dir = tempfile::tempdir().unwrap();
        tr.write_dir(dir.path()).unwrap();
        let back = TraceSet::read_dir(dir.path()).unwrap();
        prop_assert_eq!(back.hash(), tr.hash());
        prop_assert_eq!(back, tr);
    }

    #[test]
    fn logical_clocks_never_decrease(spec in arb_scenario(ns(40))) {
        let sc = spec.resolve().unwrap();
        let tr = run(&sc).unwrap();
        let n = sc.topology.node_count();
        for v in 0..n {
            let ls: Vec<_> = tr.nodes.iter().filter(|r| r.node == v).map(|r| (r.l_phase, r.h_phase)).collect();
            prop_assert!(ls.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
        }
    }
}
