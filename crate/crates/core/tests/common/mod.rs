//! Random scenario generator shared by the property tests and the
//! acceptance target.

#![allow(dead_code)]

use gcs_core::analytics::verify_implementation;
use gcs_core::clocks::UnlockedPolicy;
use gcs_core::engine::run;
use gcs_core::scenario::{DelaySpec, DriftSpec, MPolicy, MonitorMode, PerturbationSpec, ScenarioSpec, TopologySpec};
use gcs_core::time::{ns, ps, Fs};
use proptest::prelude::*;

pub fn arb_topology() -> impl Strategy<Value = TopologySpec> {
    prop_oneof![
        (2usize..=9).prop_map(|size| TopologySpec::Line { size }),
        (3usize..=9).prop_map(|size| TopologySpec::Ring { size }),
        (1usize..=3, 2usize..=3).prop_map(|(width, height)| TopologySpec::Grid { width, height }),
    ]
}

fn size_of(t: &TopologySpec) -> usize {
    match t {
        TopologySpec::Line { size } | TopologySpec::Ring { size } | TopologySpec::Custom { size, .. } => *size,
        TopologySpec::Grid { width, height } => width * height,
    }
}

fn arb_drift() -> impl Strategy<Value = DriftSpec> {
    prop_oneof![
        Just(DriftSpec::Nominal),
        Just(DriftSpec::SeededConstant),
        (ps(200)..ns(20)).prop_map(|interval| DriftSpec::SeededPiecewise { interval }),
    ]
}

fn arb_delays(n: usize) -> impl Strategy<Value = DelaySpec> {
    prop_oneof![
        Just(DelaySpec::Max),
        Just(DelaySpec::Min),
        Just(DelaySpec::SeededConstant),
        (ps(50)..ns(10)).prop_map(|interval| DelaySpec::SeededPiecewise { interval }),
        (proptest::sample::subsequence((0..n).collect::<Vec<_>>(), 0..=n), ns(1)..ns(50)).prop_map(
            move |(fast, at)| DelaySpec::FastSlow { switch: fast.clone(), fast, at: Some(at) }
        ),
    ]
}

fn arb_perturbation() -> impl Strategy<Value = PerturbationSpec> {
    prop_oneof![
        Just(PerturbationSpec::Zero),
        Just(PerturbationSpec::SeededRandom),
        Just(PerturbationSpec::AdversarialExtremes),
    ]
}

fn arb_m_policy() -> impl Strategy<Value = MPolicy> {
    prop_oneof![
        Just(MPolicy::Symbolic),
        Just(MPolicy::Resolve0),
        Just(MPolicy::Resolve1),
        Just(MPolicy::SeededRandom),
        Just(MPolicy::Adversarial),
    ]
}

fn arb_unlocked() -> impl Strategy<Value = UnlockedPolicy> {
    prop_oneof![
        Just(UnlockedPolicy::PinLow),
        Just(UnlockedPolicy::PinHigh),
        Just(UnlockedPolicy::AdversarialExtremes),
        Just(UnlockedPolicy::SeededRandom),
    ]
}

/// Scenarios with monitors in record mode, initial phases both inside and
/// beyond the initial local skew condition.
pub fn arb_scenario(max_duration: Fs) -> impl Strategy<Value = ScenarioSpec> {
    arb_topology().prop_flat_map(move |topo| {
        let n = size_of(&topo);
        (
            Just(topo),
            prop_oneof![
                proptest::collection::vec(0..ps(10), n),
                proptest::collection::vec(0..ps(60), n),
            ],
            arb_drift(),
            arb_delays(n),
            arb_perturbation(),
            arb_m_policy(),
            arb_unlocked(),
            prop_oneof![Just(1e-4), Just(2e-4)],
            ns(20)..=max_duration,
            any::<u64>(),
        )
            .prop_map(|(topo, phases, drift, delays, perturbation, m_policy, unlocked, mu, duration, seed)| {
                let mut s = ScenarioSpec::new("random", topo, phases);
                s.params.mu = mu;
                s.drift = drift;
                s.delays = delays;
                s.perturbation = perturbation;
                s.m_policy = m_policy;
                s.unlocked = unlocked;
                s.duration = duration;
                s.seed = seed;
                s.monitors = MonitorMode::Record;
                s
            })
    })
}

/// Runs a scenario and returns a description of the first broken contract.
pub fn invariant_failure(spec: &ScenarioSpec) -> Option<String> {
    let sc = match spec.resolve() {
        Ok(s) => s,
        Err(e) => return Some(format!("resolve: {e}")),
    };
    let tr = match run(&sc) {
        Ok(t) => t,
        Err(e) => return Some(format!("run: {e}")),
    };
    if let Some(v) = tr.violations.first() {
        return Some(format!("monitor {:?} at {} fs on node {}: {}", v.kind, v.time_fs, v.node, v.detail));
    }
    let rep = verify_implementation(&tr, &sc.params);
    rep.conditions
        .iter()
        .find(|c| !c.pass)
        .map(|c| format!("{}: {}", c.name, c.first_counterexample.clone().unwrap_or_default()))
}
