//! Scenario descriptions. A [`ScenarioSpec`] names policies (seeded drift,
//! delays, perturbations); [`ScenarioSpec::resolve`] turns it into a fully
//! concrete [`Scenario`] that the engine executes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::fairbanks::FairbanksSetup;
use crate::clocks::{RateSchedule, UnlockedPolicy};
use crate::params::SystemParams;
use crate::time::{ns, ps, Fs, PPB};
use crate::topology::Topology;
use crate::tri::Tri;

/// Propagation delay of pulses sent by `from` and observed by `to`,
/// piecewise constant in reception time.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelaySchedule {
    pub from: usize,
    pub to: usize,
    pub steps: Vec<(Fs, Fs)>,
}

impl DelaySchedule {
    pub fn at(&self, t: Fs) -> Fs {
        let i = self.steps.partition_point(|&(s, _)| s <= t);
        self.steps[i.saturating_sub(1)].1
    }
}

/// Static offset added to `to`'s estimate of `from`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Perturbation {
    pub from: usize,
    pub to: usize,
    pub value: Fs,
}

/// How bits inside a decision separator window are valued.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MPolicy {
    Symbolic,
    Resolve0,
    Resolve1,
    SeededRandom,
    /// Resolve toward flipping the node's current mode.
    Adversarial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MonitorMode {
    /// Stop at the first violation and return the trace so far.
    Abort,
    Record,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForcedMode {
    pub node: usize,
    pub from: Fs,
    pub md: Tri,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Faults {
    #[serde(default)]
    pub forced_modes: Vec<ForcedMode>,
    #[serde(default)]
    pub allow_inadmissible_delays: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub params: SystemParams,
    pub topology: Topology,
    /// `H_v(0) = L_v(0)` per node.
    pub initial_phase: Vec<Fs>,
    pub drift: Vec<RateSchedule>,
    pub delays: Vec<DelaySchedule>,
    pub perturbations: Vec<Perturbation>,
    pub m_policy: MPolicy,
    pub unlocked: UnlockedPolicy,
    pub duration: Fs,
    pub stride: Fs,
    pub seed: u64,
    pub monitors: MonitorMode,
    #[serde(default)]
    pub faults: Faults,
    #[serde(default)]
    pub fairbanks: Option<FairbanksSetup>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl Scenario {
    /// Largest initial phase difference over edges.
    pub fn initial_local_skew(&self) -> Fs {
        self.topology
            .edges()
            .iter()
            .map(|&(a, b)| (self.initial_phase[a] - self.initial_phase[b]).abs())
            .max()
            .unwrap_or(0)
    }

    /// The initial local skew is below `kappa`, so the bounds must hold
    /// from the start rather than after stabilization.
    pub fn c1_held(&self) -> bool {
        self.initial_local_skew() < self.params.kappa
    }

    pub fn delay(&self, from: usize, to: usize) -> Option<&DelaySchedule> {
        self.delays.iter().find(|d| d.from == from && d.to == to)
    }

    /// Replaces the delay of every directed edge out of `nodes` from `at` on.
    pub fn switch_delays(&mut self, nodes: &[usize], at: Fs, value: Fs) {
        for d in &mut self.delays {
            if nodes.contains(&d.from) {
                d.steps.retain(|&(s, _)| s < at);
                d.steps.push((at, value));
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TopologySpec {
    Line { size: usize },
    Ring { size: usize },
    Grid { width: usize, height: usize },
    Custom { size: usize, edges: Vec<(usize, usize)> },
}

impl TopologySpec {
    pub fn build(&self) -> Result<Topology, crate::topology::TopologyError> {
        match self {
            TopologySpec::Line { size } => Topology::from_edges(*size, (1..*size).map(|i| (i - 1, i))),
            TopologySpec::Ring { size } => Ok(Topology::ring(*size)),
            TopologySpec::Grid { width, height } => Ok(Topology::grid(*width, *height)),
            TopologySpec::Custom { size, edges } => Topology::from_edges(*size, edges.iter().copied()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DriftSpec {
    /// Every node at rate 1.
    Nominal,
    /// Each node gets one seeded rate in `[1, 1+rho]`.
    SeededConstant,
    /// Seeded rate redrawn every `interval`.
    SeededPiecewise { interval: Fs },
    /// Explicit per-node rates in ppb above 1.
    Explicit { ppb: Vec<i64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DelaySpec {
    Max,
    Min,
    /// Each directed edge gets one seeded delay in `[d-U, d]`.
    SeededConstant,
    SeededPiecewise { interval: Fs },
    /// Edges out of `fast` nodes get `d-U`, all others `d`; optionally the
    /// edges out of `switch` become slow at `at`.
    FastSlow { fast: Vec<usize>, switch: Vec<usize>, at: Option<Fs> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PerturbationSpec {
    Zero,
    Fixed { value: Fs },
    SeededRandom,
    /// `+budget` on edges toward a higher node id, `-budget` otherwise.
    AdversarialExtremes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub params: SystemParams,
    pub topology: TopologySpec,
    pub initial_phase: Vec<Fs>,
    pub drift: DriftSpec,
    pub delays: DelaySpec,
    pub perturbation: PerturbationSpec,
    pub m_policy: MPolicy,
    pub unlocked: UnlockedPolicy,
    pub duration: Fs,
    pub stride: Fs,
    pub seed: u64,
    pub monitors: MonitorMode,
    pub faults: Faults,
    pub fairbanks: Option<FairbanksSetup>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error(transparent)]
    Topology(#[from] crate::topology::TopologyError),
    #[error("{0} initial phases given for {1} nodes")]
    PhaseCount(usize, usize),
    #[error("explicit drift lists {0} rates for {1} nodes")]
    DriftCount(usize, usize),
    #[error("interval must be positive")]
    Interval,
}

pub const BUILTIN_SCENARIOS: [&str; 5] = ["ahead", "behind", "gradient", "fairbanks-large-local", "fairbanks-swap"];

fn stream(seed: u64, tag: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(tag);
    r
}

impl ScenarioSpec {
    pub fn new(name: &str, topology: TopologySpec, initial_phase: Vec<Fs>) -> ScenarioSpec {
        ScenarioSpec {
            name: name.to_string(),
            params: SystemParams::default(),
            topology,
            initial_phase,
            drift: DriftSpec::SeededConstant,
            delays: DelaySpec::SeededConstant,
            perturbation: PerturbationSpec::SeededRandom,
            m_policy: MPolicy::Symbolic,
            unlocked: UnlockedPolicy::AdversarialExtremes,
            duration: ns(1000),
            stride: ps(100),
            seed: 1,
            monitors: MonitorMode::Abort,
            faults: Faults::default(),
            fairbanks: None,
        }
    }

    pub fn resolve(&self) -> Result<Scenario, ScenarioError> {
        let topology = self.topology.build()?;
        let n = topology.node_count();
        if self.initial_phase.len() != n {
            return Err(ScenarioError::PhaseCount(self.initial_phase.len(), n));
        }
        let p = &self.params;
        let rho = p.rho_ppb();
        let drift = match &self.drift {
            DriftSpec::Nominal => vec![RateSchedule::constant(PPB); n],
            DriftSpec::SeededConstant => {
                let mut r = stream(self.seed, 1);
                (0..n).map(|_| RateSchedule::constant(PPB + r.random_range(0..=rho))).collect()
            }
            DriftSpec::SeededPiecewise { interval } => {
                if *interval <= 0 {
                    return Err(ScenarioError::Interval);
                }
                let mut r = stream(self.seed, 1);
                (0..n)
                    .map(|_| {
                        let steps = (0..)
                            .map(|k| k * interval)
                            .take_while(|&t| t <= self.duration)
                            .map(|t| (t, PPB + r.random_range(0..=rho)))
                            .collect();
                        RateSchedule { steps }
                    })
                    .collect()
            }
            DriftSpec::Explicit { ppb } => {
                if ppb.len() != n {
                    return Err(ScenarioError::DriftCount(ppb.len(), n));
                }
                ppb.iter().map(|&x| RateSchedule::constant(PPB + x)).collect()
            }
        };
        let directed: Vec<(usize, usize)> =
            topology.edges().iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect();
        let (lo, hi) = (p.d - p.u, p.d);
        let mut r = stream(self.seed, 2);
        let delays = directed
            .iter()
            .map(|&(from, to)| {
                let steps = match &self.delays {
                    DelaySpec::Max => vec![(0, hi)],
                    DelaySpec::Min => vec![(0, lo)],
                    DelaySpec::SeededConstant => vec![(0, r.random_range(lo..=hi))],
                    DelaySpec::SeededPiecewise { interval } => (0..)
                        .map(|k| k * interval.max(&1))
                        .take_while(|&t| t <= self.duration)
                        .map(|t| (t, r.random_range(lo..=hi)))
                        .collect(),
                    DelaySpec::FastSlow { fast, switch, at } => {
                        let first = if fast.contains(&from) { lo } else { hi };
                        let mut s = vec![(0, first)];
                        if let Some(at) = at {
                            if switch.contains(&from) {
                                s.push((*at, hi));
                            }
                        }
                        s
                    }
                };
                DelaySchedule { from, to, steps }
            })
            .collect();
        let budget = p.perturbation_budget().max(0);
        let mut r = stream(self.seed, 3);
        let perturbations = directed
            .iter()
            .map(|&(from, to)| {
                let value = match &self.perturbation {
                    PerturbationSpec::Zero => 0,
                    PerturbationSpec::Fixed { value } => *value,
                    PerturbationSpec::SeededRandom => r.random_range(-budget..=budget),
                    PerturbationSpec::AdversarialExtremes => {
                        if from < to {
                            budget
                        } else {
                            -budget
                        }
                    }
                };
                Perturbation { from, to, value }
            })
            .collect();
        let mut notes = Vec::new();
        if let Some(fb) = &self.fairbanks {
            notes.push(format!(
                "fairbanks latches start reset; pull-up nodes fire first (gate {} fs, latch {} fs)",
                fb.gate_delay, fb.latch_delay
            ));
        }
        Ok(Scenario {
            name: self.name.clone(),
            params: self.params.clone(),
            topology,
            initial_phase: self.initial_phase.clone(),
            drift,
            delays,
            perturbations,
            m_policy: self.m_policy,
            unlocked: self.unlocked,
            duration: self.duration,
            stride: self.stride,
            seed: self.seed,
            monitors: self.monitors,
            faults: self.faults.clone(),
            fairbanks: self.fairbanks.clone(),
            notes,
        })
    }
}

/// The fast nodes of the seven-node large-local delay pattern.
pub const FAIRBANKS_FAST: [usize; 3] = [2, 3, 4];
/// Nodes whose outgoing edges turn slow in the swap experiment.
pub const FAIRBANKS_SWAPPED: [usize; 2] = [3, 4];

/// Specification of a named builtin; resolve it to run.
pub fn builtin_spec(name: &str) -> Result<ScenarioSpec, ScenarioError> {
    let line4 = TopologySpec::Line { size: 4 };
    let line7 = TopologySpec::Line { size: 7 };
    let spec = match name {
        "ahead" => ScenarioSpec::new(name, line4, vec![0, ps(40), 0, 0]),
        "behind" => ScenarioSpec::new(name, line4, vec![0, -ps(40), 0, 0]),
        "gradient" => ScenarioSpec::new(name, line4, vec![0, ps(30), ps(75), ps(105)]),
        "fairbanks-large-local" => {
            let mut s = ScenarioSpec::new(name, line7, vec![0; 7]);
            s.delays = DelaySpec::FastSlow { fast: FAIRBANKS_FAST.to_vec(), switch: vec![], at: None };
            s.fairbanks = Some(FairbanksSetup::large_local());
            s.duration = ns(100);
            s
        }
        "fairbanks-swap" => {
            let mut s = ScenarioSpec::new(name, line7, vec![0; 7]);
            s.delays = DelaySpec::FastSlow {
                fast: FAIRBANKS_FAST.to_vec(),
                switch: FAIRBANKS_SWAPPED.to_vec(),
                at: Some(ns(50)),
            };
            s.fairbanks = Some(FairbanksSetup::swap(ns(50)));
            s.duration = ns(100);
            s
        }
        _ => return Err(ScenarioError::UnknownScenario(name.to_string())),
    };
    Ok(spec)
}

pub fn builtin_scenario(name: &str) -> Result<Scenario, ScenarioError> {
    builtin_spec(name)?.resolve()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_resolve() {
        for n in BUILTIN_SCENARIOS {
            let s = builtin_scenario(n).unwrap();
            assert!(s.delays.iter().all(|d| d.steps.iter().all(|&(_, x)| x >= s.params.d - s.params.u && x <= s.params.d)));
            assert!(s.drift.iter().all(|r| r.validate(s.params.rho_ppb()).is_ok()));
            let b = s.params.perturbation_budget();
            assert!(s.perturbations.iter().all(|p| p.value.abs() <= b));
        }
        assert!(matches!(builtin_scenario("nope"), Err(ScenarioError::UnknownScenario(_))));
    }

    #[test]
    fn behind_puts_node_one_back() {
        let s = builtin_scenario("behind").unwrap();
        assert_eq!(s.topology.node_count(), 4);
        assert_eq!(s.duration, ns(1000));
        for v in [0, 2, 3] {
            assert_eq!(s.initial_phase[v] - s.initial_phase[1], ps(40));
        }
        assert!(!s.c1_held());
    }

    #[test]
    fn gradient_is_monotone_and_totals_105() {
        let s = builtin_scenario("gradient").unwrap();
        let h = &s.initial_phase;
        assert!(h.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(h[3] - h[0], ps(105));
    }

    #[test]
    fn swap_turns_out_edges_slow() {
        let s = builtin_scenario("fairbanks-swap").unwrap();
        let p = &s.params;
        assert_eq!(s.topology.node_count(), 7);
        assert_eq!(s.delay(3, 2).unwrap().at(0), p.d - p.u);
        assert_eq!(s.delay(3, 2).unwrap().at(ns(50)), p.d);
        assert_eq!(s.delay(2, 1).unwrap().at(ns(50)), p.d - p.u);
        assert_eq!(s.delay(1, 2).unwrap().at(0), p.d);
    }

    #[test]
    fn resolution_is_seeded() {
        let a = builtin_scenario("ahead").unwrap();
        let b = builtin_scenario("ahead").unwrap();
        assert_eq!(a, b);
        let mut spec = builtin_spec("ahead").unwrap();
        spec.seed = 2;
        assert_ne!(spec.resolve().unwrap().drift, a.drift);
    }
}
