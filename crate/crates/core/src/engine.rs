//! Event-exact execution of a [`Scenario`].
//!
//! Between two events every clock runs at a constant rate, so the state at
//! event times determines the whole run. Events are rising clock edges,
//! drift breakpoints, oscillator locks, pipeline deliveries and mode
//! changes, fault activations and record instants.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::clocks::{oscillator_rate_bounds, ClockTrack, Oscillator, ScheduleError};
use crate::logic::{fast_condition, slow_condition, OffsetView};
use crate::params::{validate_params, ParamError, ValidatedParams};
use crate::pipeline::{controller, sample_thresholds, PipelineError, PipelineState, ThresholdWord, Unresolved};
use crate::scenario::{MPolicy, MonitorMode, Scenario};
use crate::time::{div_ceil_i128, format_time, rate, Fs, Phase, PHASE_PER_FS, PPB};
use crate::trace::{
    ModeRecord, MonitorKind, NodeRecord, RateRecord, SampleRecord, SkewPeak, TraceMeta, TraceSet, Violation,
};
use crate::tri::Tri;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("drift schedule of node {node}: {err}")]
    Schedule { node: usize, err: ScheduleError },
    #[error("delay {value} fs on {from}->{to} from {at} fs lies outside [d-U, d]")]
    InadmissibleDelay { from: usize, to: usize, at: Fs, value: Fs },
    #[error("perturbation {value} fs on {from}->{to} exceeds the budget {budget} fs")]
    InadmissiblePerturbation { from: usize, to: usize, value: Fs, budget: Fs },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("monitor {:?} violated at node {} at {} fs: {}", .0.violation.kind, .0.violation.node, .0.violation.time_fs, .0.violation.detail)]
    Violation(Box<Counterexample>),
}

/// First violation of an aborting run and the trace up to it.
#[derive(Debug)]
pub struct Counterexample {
    pub violation: Violation,
    pub trace: TraceSet,
}

/// Checks a scenario against the model; returns the validated parameters and
/// any warnings.
pub fn validate_scenario(s: &Scenario) -> Result<(ValidatedParams, Vec<String>), EngineError> {
    let vp = validate_params(&s.params, s.topology.diameter())?;
    let p = &s.params;
    let n = s.topology.node_count();
    if !p.buffered && p.t_clk < p.t_max() {
        return Err(EngineError::Config(format!(
            "unbuffered pipeline needs T_clk {} >= T_max {}",
            format_time(p.t_clk),
            format_time(p.t_max())
        )));
    }
    if s.initial_phase.len() != n || s.drift.len() != n {
        return Err(EngineError::Config(format!(
            "{} initial phases and {} drift schedules for {n} nodes",
            s.initial_phase.len(),
            s.drift.len()
        )));
    }
    if s.stride <= 0 || s.duration < 0 {
        return Err(EngineError::Config("stride must be positive and duration non-negative".into()));
    }
    for (node, d) in s.drift.iter().enumerate() {
        d.validate(p.rho_ppb()).map_err(|err| EngineError::Schedule { node, err })?;
    }
    let lax = s.faults.allow_inadmissible_delays;
    let budget = p.perturbation_budget();
    for &(a, b) in s.topology.edges() {
        for (from, to) in [(a, b), (b, a)] {
            let d = s
                .delay(from, to)
                .filter(|d| !d.steps.is_empty())
                .ok_or_else(|| EngineError::Config(format!("no delay schedule for {from}->{to}")))?;
            for &(at, value) in &d.steps {
                if !lax && (value < p.d - p.u || value > p.d) {
                    return Err(EngineError::InadmissibleDelay { from, to, at, value });
                }
                if value < 0 {
                    return Err(EngineError::InadmissibleDelay { from, to, at, value });
                }
            }
            let e = s.perturbations.iter().find(|x| x.from == from && x.to == to).map_or(0, |x| x.value);
            if !lax && e.abs() > budget {
                return Err(EngineError::InadmissiblePerturbation { from, to, value: e, budget });
            }
        }
    }
    if let Some(f) = s.faults.forced_modes.iter().find(|f| f.node >= n) {
        return Err(EngineError::Config(format!("forced mode on unknown node {}", f.node)));
    }
    let mut warnings = vp.warnings().to_vec();
    if !s.c1_held() {
        let w = format!(
            "initial local skew {} is not below kappa {}; bounds are expected only after stabilization",
            format_time(s.initial_local_skew()),
            format_time(p.kappa)
        );
        log::warn!("{w}");
        warnings.push(w);
    }
    Ok((vp, warnings))
}

struct NodeSim {
    track: ClockTrack,
    osc: Oscillator,
    pipe: PipelineState,
    next_edge: i128,
    in_flight: VecDeque<(Fs, Fs, Vec<Phase>)>,
    latched: Option<(Fs, Vec<Phase>)>,
    last_rate: (i64, i64),
}

struct Run<'a> {
    s: &'a Scenario,
    delta: Fs,
    nodes: Vec<NodeSim>,
    delay_idx: Vec<Vec<usize>>,
    perturb: Vec<Vec<Fs>>,
    m_rng: ChaCha8Rng,
    osc_rng: ChaCha8Rng,
    trace: TraceSet,
    peak: Option<SkewPeak>,
}

fn current_peak(t: Fs, ls: &[Phase], edges: &[(usize, usize)]) -> SkewPeak {
    let argmax = (0..ls.len()).max_by_key(|&v| (ls[v], std::cmp::Reverse(v))).unwrap();
    let argmin = (0..ls.len()).min_by_key(|&v| (ls[v], v)).unwrap();
    let mut pk = SkewPeak {
        time_fs: t,
        local: Phase::ZERO,
        local_v: 0,
        local_w: 0,
        global: ls[argmax] - ls[argmin],
        global_v: argmin,
        global_w: argmax,
    };
    for (i, &(a, b)) in edges.iter().enumerate() {
        let (lo, hi) = if ls[a] <= ls[b] { (a, b) } else { (b, a) };
        if i == 0 || ls[hi] - ls[lo] > pk.local {
            pk.local = ls[hi] - ls[lo];
            (pk.local_v, pk.local_w) = (lo, hi);
        }
    }
    pk
}

fn merge_peak(a: SkewPeak, b: SkewPeak) -> SkewPeak {
    let mut m = a;
    if b.local > a.local {
        (m.local, m.local_v, m.local_w) = (b.local, b.local_v, b.local_w);
    }
    if b.global > a.global {
        (m.global, m.global_v, m.global_w) = (b.global, b.global_v, b.global_w);
    }
    m
}

fn stream(seed: u64, tag: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(tag);
    r
}

/// Executes a scenario. Identical scenarios give bit-identical traces.
pub fn run(s: &Scenario) -> Result<TraceSet, EngineError> {
    let (vp, warnings) = validate_scenario(s)?;
    let p = &s.params;
    let n = s.topology.node_count();
    let period = p.t_clk as i128 * PHASE_PER_FS;
    let nodes = (0..n)
        .map(|v| {
            let init = Phase::from_fs(s.initial_phase[v]);
            let h = s.drift[v].rate_at(0);
            let track = ClockTrack::new(init, h, PPB);
            NodeSim {
                track,
                osc: Oscillator::new(Tri::Zero, p.mu_ppb(), p.t_osc, s.unlocked),
                pipe: PipelineState::new(p.ell, p.t_meas, p.t_ctr, -p.t_osc),
                next_edge: div_ceil_i128(init.0, period),
                in_flight: VecDeque::new(),
                latched: None,
                last_rate: (h, PPB),
            }
        })
        .collect();
    let mut delay_idx = vec![vec![usize::MAX; n]; n];
    for (i, d) in s.delays.iter().enumerate() {
        delay_idx[d.from][d.to] = i;
    }
    let mut perturb = vec![vec![0; n]; n];
    for e in &s.perturbations {
        perturb[e.from][e.to] = e.value;
    }
    let trace = TraceSet {
        meta: TraceMeta { scenario: s.clone(), delta: vp.delta(), end_fs: s.duration, aborted: false, warnings },
        nodes: Vec::new(),
        samples: Vec::new(),
        rates: (0..n)
            .map(|v| RateRecord { time_fs: 0, node: v, h_ppb: s.drift[v].rate_at(0), m_ppb: PPB })
            .collect(),
        modes: Vec::new(),
        peaks: Vec::new(),
        violations: Vec::new(),
    };
    let mut r = Run {
        s,
        delta: vp.delta(),
        nodes,
        delay_idx,
        perturb,
        m_rng: stream(s.seed, 4),
        osc_rng: stream(s.seed, 5),
        trace,
        peak: None,
    };
    r.execute()?;
    Ok(r.trace)
}

impl Run<'_> {
    fn execute(&mut self) -> Result<(), EngineError> {
        let mut t = 0;
        loop {
            self.process(t)?;
            match self.next_event(t) {
                Some(nt) if nt <= self.s.duration => t = nt,
                _ => break,
            }
        }
        Ok(())
    }

    fn next_event(&self, t: Fs) -> Option<Fs> {
        let p = &self.s.params;
        let period = p.t_clk as i128 * PHASE_PER_FS;
        let mut best = Some((t / self.s.stride + 1) * self.s.stride);
        let mut take = |x: Option<Fs>| {
            if let Some(x) = x {
                debug_assert!(x > t);
                best = Some(best.map_or(x, |b: Fs| b.min(x)));
            }
        };
        for (v, ns) in self.nodes.iter().enumerate() {
            take(self.s.drift[v].next_break(t));
            take(ns.osc.next_event(t));
            take(ns.pipe.next_event_time());
            take(Some(ns.track.reach_time(t, Phase(ns.next_edge * period))));
        }
        take(self.s.faults.forced_modes.iter().map(|f| f.from).filter(|&f| f > t).min());
        best
    }

    fn process(&mut self, t: Fs) -> Result<(), EngineError> {
        let p = &self.s.params;
        let n = self.nodes.len();
        let period = p.t_clk as i128 * PHASE_PER_FS;
        for v in 0..n {
            let h = self.s.drift[v].rate_at(t);
            let ns = &mut self.nodes[v];
            ns.osc.tick(t);
            ns.track.set_rate(t, h, ns.osc.m_ppb);
        }
        for f in &self.s.faults.forced_modes {
            if f.from == t {
                self.nodes[f.node].pipe.force(t, Some(f.md));
            }
        }
        let mut sampled: Vec<Option<(Vec<ThresholdWord>, Vec<Phase>)>> = vec![None; n];
        for (v, slot) in sampled.iter_mut().enumerate() {
            let ns = &self.nodes[v];
            if ns.track.l_at(t) >= Phase(ns.next_edge * period) {
                *slot = Some(self.sample(v, t));
            }
        }
        for (v, slot) in sampled.into_iter().enumerate() {
            let words = slot.map(|(words, est)| {
                let ns = &mut self.nodes[v];
                ns.next_edge += 1;
                ns.in_flight.push_back((t + p.t_meas, t, est));
                words
            });
            let ns = &mut self.nodes[v];
            let out = ns.pipe.step(t, words)?;
            while ns.in_flight.front().is_some_and(|x| x.0 <= t) {
                let (_, st, est) = ns.in_flight.pop_front().unwrap();
                ns.latched = Some((st, est));
            }
            if let Some(md) = out.md_changed {
                let m = ns.osc.set_mode(t, md, &mut self.osc_rng);
                let h = ns.track.current().h_ppb;
                ns.track.set_rate(t, h, m);
                self.trace.modes.push(ModeRecord { time_fs: t, node: v, md });
            }
        }
        for v in 0..n {
            let ns = &mut self.nodes[v];
            let seg = *ns.track.current();
            if (seg.h_ppb, seg.m_ppb) != ns.last_rate {
                ns.last_rate = (seg.h_ppb, seg.m_ppb);
                self.trace.rates.push(RateRecord { time_fs: t, node: v, h_ppb: seg.h_ppb, m_ppb: seg.m_ppb });
            }
        }
        let ls: Vec<Phase> = self.nodes.iter().map(|ns| ns.track.l_at(t)).collect();
        let now = current_peak(t, &ls, self.s.topology.edges());
        self.peak = Some(match self.peak {
            Some(pk) => merge_peak(pk, now),
            None => now,
        });
        if t % self.s.stride == 0 {
            for (v, ns) in self.nodes.iter().enumerate() {
                self.trace.nodes.push(NodeRecord {
                    time_fs: t,
                    node: v,
                    l_phase: ls[v],
                    h_phase: ns.track.h_at(t),
                    md: ns.pipe.md(),
                });
            }
            let mut pk = self.peak.unwrap();
            pk.time_fs = t;
            self.trace.peaks.push(pk);
            self.peak = Some(now);
        }
        if self.s.monitors != MonitorMode::Off {
            self.monitor(t, &ls)?;
        }
        Ok(())
    }

    fn estimate(&self, from: usize, to: usize, t: Fs) -> Phase {
        let p = &self.s.params;
        let tau = self.s.delays[self.delay_idx[from][to]].at(t);
        let seen = self.nodes[from].track.l_at(t - tau);
        let comp = Phase(PHASE_PER_FS * (2 * p.d - p.u) as i128 / 2);
        seen + comp - self.nodes[to].track.l_at(t) + Phase::from_fs(self.perturb[from][to])
    }

    fn sample(&mut self, v: usize, t: Fs) -> (Vec<ThresholdWord>, Vec<Phase>) {
        let p = &self.s.params;
        let nbrs = self.s.topology.neighbors(v).to_vec();
        let est: Vec<Phase> = nbrs.iter().map(|&w| self.estimate(w, v, t)).collect();
        let fixed = match self.s.m_policy {
            MPolicy::Resolve0 => Unresolved::Zero,
            MPolicy::Resolve1 => Unresolved::One,
            _ => Unresolved::Symbolic,
        };
        let mut words: Vec<ThresholdWord> = est
            .iter()
            .map(|&e| {
                let mut w = sample_thresholds(e, p.kappa, self.delta, p.epsilon, p.ell, fixed);
                w.sample_time = t;
                w
            })
            .collect();
        let resolve_all = |words: &mut [ThresholdWord], b: Tri| {
            for w in words.iter_mut() {
                for x in &mut w.bits {
                    if x.is_meta() {
                        *x = b;
                    }
                }
            }
        };
        match self.s.m_policy {
            MPolicy::SeededRandom => {
                for w in &mut words {
                    for x in &mut w.bits {
                        if x.is_meta() {
                            *x = Tri::from_bool(self.m_rng.random_bool(0.5));
                        }
                    }
                }
            }
            MPolicy::Adversarial if words.iter().any(|w| w.meta_count() > 0) => {
                let cur = self.nodes[v].pipe.md();
                let mut zero = words.clone();
                resolve_all(&mut zero, Tri::Zero);
                let flips = controller(&zero, p.ell).map(|m| m != cur).unwrap_or(false);
                resolve_all(&mut words, if flips { Tri::Zero } else { Tri::One });
            }
            _ => {}
        }
        for (i, &w) in nbrs.iter().enumerate() {
            let exact = self.nodes[w].track.l_at(t) - self.nodes[v].track.l_at(t);
            self.trace.samples.push(SampleRecord {
                time_fs: t,
                node: v,
                neighbor: w,
                estimate: est[i],
                exact,
                word: words[i].to_string(),
            });
        }
        (words, est)
    }

    fn monitor(&mut self, t: Fs, ls: &[Phase]) -> Result<(), EngineError> {
        let p = &self.s.params;
        let armed = t >= p.t_clk + p.t_max();
        let delta = Phase::from_fs(self.delta);
        let mut found = Vec::new();
        for (v, ns) in self.nodes.iter().enumerate() {
            let seg = ns.track.current();
            let r = rate(seg.h_ppb, seg.m_ppb);
            let env = oscillator_rate_bounds(ns.pipe.history(), t, p.t_osc, p.rho_ppb(), p.mu_ppb())
                .expect("history starts one oscillator window before time 0");
            if !env.contains(r) || seg.m_ppb < PPB || seg.m_ppb > PPB + p.mu_ppb() {
                found.push((v, MonitorKind::RateEnvelope, format!("rate h={} m={} outside {:?}", seg.h_ppb, seg.m_ppb, env)));
            }
            let nbrs = self.s.topology.neighbors(v);
            let offs: Vec<Phase> = nbrs.iter().map(|&w| ls[w] - ls[v]).collect();
            if armed {
                let view = OffsetView::new(offs.iter().copied());
                let locked = ns.osc.locked(t);
                if p.ell >= 1 {
                    if let Some(s) = fast_condition(&view, p.kappa, p.ell - 1).s {
                        if locked != Some(Tri::One) {
                            found.push((v, MonitorKind::FastConditionMode, format!("fast condition (s={s}) but oscillator {locked:?}")));
                        }
                    }
                }
                let span = (view.max.0.abs() + view.min.0.abs()) / Phase::from_fs(p.kappa).0 + 1;
                if let Some(s) = slow_condition(&view, p.kappa, span as u32).s {
                    if locked != Some(Tri::Zero) {
                        found.push((v, MonitorKind::SlowConditionMode, format!("slow condition (s={s}) but oscillator {locked:?}")));
                    }
                }
            }
            if let Some((st, est)) = &ns.latched {
                for (i, &w) in nbrs.iter().enumerate() {
                    let err = (est[i] - offs[i]).abs();
                    if err > delta {
                        found.push((
                            v,
                            MonitorKind::EstimateError,
                            format!("estimate of {w} sampled at {st} off by {err} > delta"),
                        ));
                    }
                }
            }
        }
        for (node, kind, detail) in found {
            let viol = Violation { time_fs: t, node, kind, detail };
            if self.s.monitors == MonitorMode::Abort {
                let mut trace = self.trace.clone();
                trace.meta.aborted = true;
                trace.meta.end_fs = t;
                trace.violations.push(viol.clone());
                return Err(EngineError::Violation(Box::new(Counterexample { violation: viol, trace })));
            }
            self.trace.violations.push(viol);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{builtin_spec, DelaySpec, DriftSpec, ForcedMode, PerturbationSpec, ScenarioSpec, TopologySpec};
    use crate::time::{ns, ps};

    fn quiet(name: &str, phases: Vec<Fs>) -> ScenarioSpec {
        let mut s = ScenarioSpec::new(name, TopologySpec::Line { size: phases.len() }, phases);
        s.drift = DriftSpec::Nominal;
        s.delays = DelaySpec::Max;
        s.perturbation = PerturbationSpec::Zero;
        s.duration = ns(20);
        s
    }

    #[test]
    fn synchronized_fixed_point() {
        let tr = run(&quiet("sync", vec![0; 4]).resolve().unwrap()).unwrap();
        assert!(tr.modes.is_empty());
        assert!(tr.nodes.iter().all(|r| r.md == Tri::Zero));
        for snap in tr.snapshots() {
            assert!(snap.iter().all(|r| r.l_phase == snap[0].l_phase));
        }
        assert_eq!(tr.snapshots().count(), 201);
        assert!(tr.violations.is_empty());
    }

    #[test]
    fn deterministic() {
        let s = builtin_spec("gradient").unwrap();
        let mut s = s;
        s.duration = ns(50);
        let sc = s.resolve().unwrap();
        assert_eq!(run(&sc).unwrap().hash(), run(&sc).unwrap().hash());
    }

    #[test]
    fn leader_pulls_neighbors_fast() {
        let sc = quiet("lead", vec![0, ps(15), 0]).resolve().unwrap();
        let tr = run(&sc).unwrap();
        let first: Vec<_> = tr.modes.iter().filter(|m| m.md == Tri::One).map(|m| m.node).collect();
        assert!(first.contains(&0) && first.contains(&2), "{first:?}");
        assert!(!tr.modes.iter().any(|m| m.node == 1 && m.md == Tri::One));
    }

    #[test]
    fn unbuffered_period_checked() {
        let mut s = quiet("x", vec![0; 2]);
        s.params.buffered = false;
        assert!(matches!(run(&s.resolve().unwrap()), Err(EngineError::Config(_))));
        s.params.t_clk = ps(800);
        assert!(run(&s.resolve().unwrap()).is_ok());
    }

    #[test]
    fn inadmissible_delay_rejected_unless_allowed() {
        let mut sc = quiet("x", vec![0; 2]).resolve().unwrap();
        sc.delays[0].steps = vec![(0, ps(100))];
        assert!(matches!(run(&sc), Err(EngineError::InadmissibleDelay { .. })));
        sc.faults.allow_inadmissible_delays = true;
        match run(&sc) {
            Err(EngineError::Violation(c)) => assert_eq!(c.violation.kind, MonitorKind::EstimateError),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn forced_mode_trips_slow_monitor() {
        let mut sc = quiet("x", vec![0; 3]).resolve().unwrap();
        sc.faults.forced_modes.push(ForcedMode { node: 1, from: 0, md: Tri::One });
        match run(&sc) {
            Err(EngineError::Violation(c)) => {
                assert_eq!(c.violation.kind, MonitorKind::SlowConditionMode);
                assert!(c.trace.meta.aborted);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn edges_follow_logical_clock() {
        let tr = run(&quiet("e", vec![ps(100), 0]).resolve().unwrap()).unwrap();
        let t0: Vec<Fs> = tr.samples.iter().filter(|s| s.node == 0).map(|s| s.time_fs).collect();
        assert_eq!(t0[0], ps(400));
        assert_eq!(t0[1] - t0[0], ps(500));
        let t1: Vec<Fs> = tr.samples.iter().filter(|s| s.node == 1).map(|s| s.time_fs).collect();
        assert_eq!(t1[0], 0);
    }
}
