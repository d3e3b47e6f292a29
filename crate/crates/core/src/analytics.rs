//! Post-processing of traces: skew series and bound checks, the offline
//! check of every module contract, and staircase (plateau) detection.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::clocks::{oscillator_rate_bounds, ModeHistory};
use crate::params::{local_and_global, SkewBounds, SystemParams};
use crate::pipeline::{controller, threshold, ThresholdWord};
use crate::time::{rate, Fs, Phase, PPB};
use crate::topology::Topology;
use crate::trace::{SkewPeak, TraceSet};
use crate::tri::Tri;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkewKind {
    Local,
    Global,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundViolation {
    /// End of the record interval in which the excess occurred.
    pub time_fs: Fs,
    pub kind: SkewKind,
    pub pair: (usize, usize),
    pub value: Phase,
    pub bound: Fs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewReport {
    /// Record instants with the local and global skew at each.
    pub times: Vec<Fs>,
    pub local: Vec<Phase>,
    pub global: Vec<Phase>,
    /// Exact interval maxima between records.
    pub peaks: Vec<SkewPeak>,
    pub max_local: Phase,
    pub max_global: Phase,
    pub bounds: SkewBounds,
    pub violations: Vec<BoundViolation>,
    /// Last record interval in which the local skew exceeded its bound.
    pub stabilization_time: Option<Fs>,
    /// `(G(0) + kappa*D)/(mu - 2rho)`: the shape of the theoretical
    /// stabilization time, without its unknown constant.
    pub theoretical_stabilization_fs: f64,
}

fn snapshot_peaks(trace: &TraceSet, topology: &Topology) -> Vec<SkewPeak> {
    trace
        .snapshots()
        .map(|snap| {
            let ls: Vec<Phase> = snap.iter().map(|r| r.l_phase).collect();
            let (gv, gw) = extremes(&ls);
            let mut pk = SkewPeak {
                time_fs: snap[0].time_fs,
                local: Phase::ZERO,
                local_v: 0,
                local_w: 0,
                global: ls[gw] - ls[gv],
                global_v: gv,
                global_w: gw,
            };
            for (i, &(a, b)) in topology.edges().iter().enumerate() {
                let (lo, hi) = if ls[a] <= ls[b] { (a, b) } else { (b, a) };
                if i == 0 || ls[hi] - ls[lo] > pk.local {
                    (pk.local, pk.local_v, pk.local_w) = (ls[hi] - ls[lo], lo, hi);
                }
            }
            pk
        })
        .collect()
}

fn extremes(ls: &[Phase]) -> (usize, usize) {
    let lo = (0..ls.len()).min_by_key(|&v| (ls[v], v)).unwrap();
    let hi = (0..ls.len()).max_by_key(|&v| (ls[v], std::cmp::Reverse(v))).unwrap();
    (lo, hi)
}

/// Bounds for the scenario's parameters on `topology`.
pub fn bounds_for(p: &SystemParams, topology: &Topology) -> SkewBounds {
    local_and_global(p.rho_ppb(), p.mu_ppb(), p.kappa, topology.diameter())
}

fn violations_of(peaks: &[SkewPeak], bounds: &SkewBounds, from: Fs) -> Vec<BoundViolation> {
    let mut out = Vec::new();
    for pk in peaks.iter().filter(|p| p.time_fs >= from) {
        if pk.local > Phase::from_fs(bounds.local_bound) {
            out.push(BoundViolation {
                time_fs: pk.time_fs,
                kind: SkewKind::Local,
                pair: (pk.local_v, pk.local_w),
                value: pk.local,
                bound: bounds.local_bound,
            });
        }
        if pk.global > Phase::from_fs(bounds.global_bound) {
            out.push(BoundViolation {
                time_fs: pk.time_fs,
                kind: SkewKind::Global,
                pair: (pk.global_v, pk.global_w),
                value: pk.global,
                bound: bounds.global_bound,
            });
        }
    }
    out
}

/// Local and global skew of a trace against its own parameters' bounds.
pub fn skews(trace: &TraceSet, topology: &Topology) -> SkewReport {
    let p = &trace.meta.scenario.params;
    let bounds = bounds_for(p, topology);
    let at_records = snapshot_peaks(trace, topology);
    let peaks = if trace.peaks.is_empty() { at_records.clone() } else { trace.peaks.clone() };
    let max_local = peaks.iter().map(|p| p.local).max().unwrap_or(Phase::ZERO);
    let max_global = peaks.iter().map(|p| p.global).max().unwrap_or(Phase::ZERO);
    let violations = violations_of(&peaks, &bounds, 0);
    let stabilization_time = violations.iter().filter(|v| v.kind == SkewKind::Local).map(|v| v.time_fs).max();
    let g0 = at_records.first().map_or(0.0, |p| p.global.as_ps_f64() * 1e3);
    let d = topology.diameter() as f64;
    SkewReport {
        times: at_records.iter().map(|p| p.time_fs).collect(),
        local: at_records.iter().map(|p| p.local).collect(),
        global: at_records.iter().map(|p| p.global).collect(),
        peaks,
        max_local,
        max_global,
        bounds,
        violations,
        stabilization_time,
        theoretical_stabilization_fs: (g0 + p.kappa as f64 * d) / (p.mu - 2.0 * p.rho),
    }
}

impl SkewReport {
    /// Largest local skew over record intervals ending at or after `from`.
    pub fn max_local_from(&self, from: Fs) -> Phase {
        self.peaks.iter().filter(|p| p.time_fs >= from).map(|p| p.local).max().unwrap_or(Phase::ZERO)
    }

    pub fn max_global_from(&self, from: Fs) -> Phase {
        self.peaks.iter().filter(|p| p.time_fs >= from).map(|p| p.global).max().unwrap_or(Phase::ZERO)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckMode {
    /// Bounds must hold at every instant after 0.
    Always,
    /// Bounds must hold on a suffix of the run.
    Eventually,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    pub mode: CheckMode,
    pub first_violation: Option<BoundViolation>,
    pub last_violation_fs: Option<Fs>,
    /// Maxima after the last violation (the whole run if there was none).
    pub suffix_max_local: Phase,
    pub suffix_max_global: Phase,
}

pub fn check_bounds(report: &SkewReport, bounds: &SkewBounds, c1_held: bool) -> Verdict {
    let mode = if c1_held { CheckMode::Always } else { CheckMode::Eventually };
    let from = if c1_held { 1 } else { 0 };
    let v = violations_of(&report.peaks, bounds, from);
    let last = v.iter().map(|x| x.time_fs).max();
    let end = report.peaks.last().map_or(0, |p| p.time_fs);
    let pass = match mode {
        CheckMode::Always => v.is_empty(),
        CheckMode::Eventually => last.is_none_or(|l| l < end),
    };
    let tail = |f: fn(&SkewPeak) -> Phase| {
        report
            .peaks
            .iter()
            .filter(|p| last.is_none_or(|l| p.time_fs > l))
            .map(f)
            .max()
            .unwrap_or(Phase::ZERO)
    };
    Verdict {
        pass,
        mode,
        first_violation: v.first().copied(),
        last_violation_fs: last,
        suffix_max_local: tail(|p| p.local),
        suffix_max_global: tail(|p| p.global),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub name: String,
    pub pass: bool,
    pub checked: usize,
    pub first_counterexample: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub conditions: Vec<ConditionResult>,
}

impl ConditionReport {
    pub fn passed(&self) -> bool {
        self.conditions.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&ConditionResult> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

/// Condition names, in report order.
pub const CONDITIONS: [&str; 10] = [
    "slow-lock",
    "fast-lock",
    "unlocked",
    "threshold-one",
    "threshold-zero",
    "single-meta",
    "staircase-word",
    "control-slow",
    "control-fast",
    "estimate-error",
];

struct Tally(BTreeMap<&'static str, ConditionResult>);

impl Tally {
    fn new() -> Tally {
        Tally(
            CONDITIONS
                .iter()
                .map(|&n| (n, ConditionResult { name: n.to_string(), pass: true, checked: 0, first_counterexample: None }))
                .collect(),
        )
    }

    fn check(&mut self, name: &'static str, ok: bool, why: impl FnOnce() -> String) {
        let c = self.0.get_mut(name).expect("known condition");
        c.checked += 1;
        if !ok && c.pass {
            c.pass = false;
            c.first_counterexample = Some(why());
        }
    }

    fn report(mut self) -> ConditionReport {
        ConditionReport { conditions: CONDITIONS.iter().map(|n| self.0.remove(n).unwrap()).collect() }
    }
}

fn histories(trace: &TraceSet, n: usize, t_osc: Fs) -> Vec<ModeHistory> {
    let mut h: Vec<ModeHistory> = (0..n).map(|_| ModeHistory::new(-t_osc, Tri::Zero)).collect();
    for m in &trace.modes {
        h[m.node].push(m.time_fs, m.md);
    }
    h
}

/// Checks the oscillator, measurement and control contracts, and the
/// estimate error budget, against a recorded trace.
pub fn verify_implementation(trace: &TraceSet, params: &SystemParams) -> ConditionReport {
    let mut tally = Tally::new();
    let n = trace.meta.scenario.topology.node_count();
    let end = trace.meta.end_fs;
    let hist = histories(trace, n, params.t_osc);
    let (rho, mu) = (params.rho_ppb(), params.mu_ppb());

    // Oscillator: realized rate inside the envelope at every point where
    // either the rate or the envelope can change.
    for v in 0..n {
        let rates: Vec<_> = trace.rates.iter().filter(|r| r.node == v).collect();
        for (i, r) in rates.iter().enumerate() {
            let stop = rates.get(i + 1).map_or(end, |x| x.time_fs - 1);
            if stop < r.time_fs {
                continue;
            }
            let realized = rate(r.h_ppb, r.m_ppb);
            let points = std::iter::once(r.time_fs).chain(hist[v].envelope_breaks(r.time_fs, stop, params.t_osc));
            for t in points {
                let env = oscillator_rate_bounds(&hist[v], t, params.t_osc, rho, mu).expect("history covers the run");
                let name = match hist[v].constant_on(t - params.t_osc, t) {
                    Some(Tri::Zero) => "slow-lock",
                    Some(Tri::One) => "fast-lock",
                    _ => "unlocked",
                };
                let ok = env.contains(realized) && (PPB..=PPB + mu).contains(&r.m_ppb);
                tally.check(name, ok, || format!("node {v} at {t} fs: h={} m={} outside {env:?}", r.h_ppb, r.m_ppb));
            }
        }
    }

    // Measurement: re-threshold every recorded estimate.
    let delta = trace.meta.delta;
    let ell = params.ell as i32;
    let mut groups: BTreeMap<(usize, Fs), Vec<ThresholdWord>> = BTreeMap::new();
    for s in &trace.samples {
        let Some(w) = ThresholdWord::parse(&s.word, s.time_fs) else {
            tally.check("staircase-word", false, || format!("unparsable word {:?}", s.word));
            continue;
        };
        for (j, &b) in w.bits.iter().enumerate() {
            let i = if (j as i32) < ell { ell - j as i32 } else { -(j as i32 - ell + 1) };
            let thr = threshold(i, params.kappa, delta);
            if s.estimate >= Phase::from_fs(thr) {
                tally.check("threshold-one", b == Tri::One, || {
                    format!("node {} at {} fs: estimate {} gives bit {i} = {}", s.node, s.time_fs, s.estimate, b.as_char())
                });
            }
            if s.estimate <= Phase::from_fs(thr - params.epsilon) {
                tally.check("threshold-zero", b == Tri::Zero, || {
                    format!("node {} at {} fs: estimate {} gives bit {i} = {}", s.node, s.time_fs, s.estimate, b.as_char())
                });
            }
        }
        tally.check("single-meta", w.meta_count() <= 1, || format!("node {} at {} fs: word {w}", s.node, s.time_fs));
        tally.check("staircase-word", w.is_staircase(), || format!("node {} at {} fs: word {w}", s.node, s.time_fs));
        let err = (s.estimate - s.exact).abs();
        tally.check("estimate-error", err <= Phase::from_fs(delta), || {
            format!("node {} neighbor {} at {} fs: |estimate - offset| = {err}", s.node, s.neighbor, s.time_fs)
        });
        groups.entry((s.node, s.time_fs)).or_default().push(w);
    }

    // Control: wherever the switch derived from the latched words is stable
    // for T_ctr, the mode signal must follow it.
    for v in 0..n {
        let mut intervals: Vec<(Fs, Fs, Tri)> = Vec::new();
        let samples: Vec<_> = groups.range((v, Fs::MIN)..=(v, Fs::MAX)).collect();
        for (i, ((_, t), words)) in samples.iter().enumerate() {
            let a = t + params.t_meas;
            let e = samples.get(i + 1).map_or(end + 1, |((_, t2), _)| t2 + params.t_meas);
            if a > end {
                break;
            }
            let Ok(g) = controller(words, params.ell) else { continue };
            match intervals.last_mut() {
                Some(last) if last.2 == g && last.1 == a => last.1 = e,
                _ => intervals.push((a, e, g)),
            }
        }
        for (a, e, g) in intervals {
            let name = match g {
                Tri::Zero => "control-slow",
                Tri::One => "control-fast",
                Tri::Meta => continue,
            };
            let (from, to) = (a + params.t_ctr, (e - 1).min(end));
            if from > to {
                continue;
            }
            let md = hist[v].constant_on(from, to);
            tally.check(name, md == Some(g), || {
                format!("node {v}: switch {} on [{a}, {e}) fs but mode not held from {from} fs", g.as_char())
            });
        }
    }
    tally.report()
}

/// Interval where a series stays within a tolerance band.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub start: Fs,
    pub end: Fs,
    pub level: f64,
}

/// Greedy maximal windows of duration at least `min_len` whose values stay
/// within `tol` of each other.
pub fn plateaus(times: &[Fs], values: &[f64], min_len: Fs, tol: f64) -> Vec<Plateau> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < values.len() {
        let (mut lo, mut hi) = (values[i], values[i]);
        let mut j = i;
        while j + 1 < values.len() {
            let x = values[j + 1];
            if hi.max(x) - lo.min(x) > tol {
                break;
            }
            lo = lo.min(x);
            hi = hi.max(x);
            j += 1;
        }
        if times[j] - times[i] >= min_len {
            let level = values[i..=j].iter().sum::<f64>() / (j - i + 1) as f64;
            out.push(Plateau { start: times[i], end: times[j], level });
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Settled level of each run of consecutive plateaus whose neighbors differ
/// by less than `merge`; a run is represented by its last plateau.
pub fn distinct_levels(plateaus: &[Plateau], merge: f64) -> Vec<f64> {
    let mut levels: Vec<f64> = Vec::new();
    let mut prev: Option<f64> = None;
    for p in plateaus {
        match (prev, levels.last_mut()) {
            (Some(q), Some(l)) if (q - p.level).abs() < merge => *l = p.level,
            _ => levels.push(p.level),
        }
        prev = Some(p.level);
    }
    levels
}

pub const PLATEAU_MIN_LEN: Fs = 100_000_000;
pub const PLATEAU_TOLERANCE_PS: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Staircase {
    pub plateaus: Vec<Plateau>,
    /// Settled levels in ps.
    pub levels: Vec<f64>,
    /// Drops between consecutive levels in ps.
    pub steps: Vec<f64>,
    /// At least two levels, and every drop within `[1.5, 2.5] kappa`.
    pub pass: bool,
}

/// Plateau structure of the local skew series.
pub fn staircase(report: &SkewReport, kappa: Fs) -> Staircase {
    let times: Vec<Fs> = report.peaks.iter().map(|p| p.time_fs).collect();
    let vals: Vec<f64> = report.peaks.iter().map(|p| p.local.as_ps_f64()).collect();
    let plateaus = plateaus(&times, &vals, PLATEAU_MIN_LEN, PLATEAU_TOLERANCE_PS);
    let k = kappa as f64 / 1e3;
    let levels = distinct_levels(&plateaus, k / 2.0);
    let steps: Vec<f64> = levels.windows(2).map(|w| w[0] - w[1]).collect();
    let pass = levels.len() >= 2 && steps.iter().all(|&s| (1.5 * k..=2.5 * k).contains(&s));
    Staircase { plateaus, levels, steps, pass }
}
