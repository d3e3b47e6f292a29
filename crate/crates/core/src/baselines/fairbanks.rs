//! Digital Fairbanks clock generation: pull-up nodes (NOR of their latch
//! views, setting latches) alternate with pull-down nodes (AND, resetting
//! latches), one set-reset latch per edge.
//!
//! A rising gate output is a tick. Each tick sends a command to every
//! incident latch; the command reaches the latch after the wire delay from
//! the ticking node toward the other endpoint (wires are FIFO), and the latch
//! output changes a latch delay later. While its own command is in flight a
//! node sees the commanded value rather than the stale latch output.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::{ns, ps, Fs};
use crate::topology::Topology;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    PullUp,
    PullDown,
}

/// From `at` on, commands sent by `nodes` use the given delay class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelaySwap {
    pub at: Fs,
    pub nodes: Vec<usize>,
    pub fast: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FairbanksSetup {
    pub nodes: usize,
    pub gate_delay: Fs,
    pub latch_delay: Fs,
    pub fast_delay: Fs,
    pub slow_delay: Fs,
    /// Nodes whose outgoing wires start fast; all others start slow.
    pub fast_nodes: Vec<usize>,
    pub swaps: Vec<DelaySwap>,
    /// Nodes with `id % 2 == pull_up_parity` are pull-up nodes.
    pub pull_up_parity: usize,
    pub horizon: Fs,
}

impl FairbanksSetup {
    /// Seven-node line, every wire slow.
    pub fn uniform(nodes: usize) -> FairbanksSetup {
        FairbanksSetup {
            nodes,
            gate_delay: ps(1),
            latch_delay: ps(1),
            fast_delay: ps(1),
            slow_delay: ps(8),
            fast_nodes: vec![],
            swaps: vec![],
            pull_up_parity: 1,
            horizon: ns(100),
        }
    }

    /// Wires out of nodes 2, 3 and 4 fast, all others slow.
    pub fn large_local() -> FairbanksSetup {
        FairbanksSetup { fast_nodes: vec![2, 3, 4], ..FairbanksSetup::uniform(7) }
    }

    /// Large-local pattern with the wires out of 3 and 4 turned slow at `at`.
    pub fn swap(at: Fs) -> FairbanksSetup {
        FairbanksSetup {
            swaps: vec![DelaySwap { at, nodes: vec![3, 4], fast: false }],
            ..FairbanksSetup::large_local()
        }
    }

    pub fn kind(&self, v: usize) -> NodeKind {
        if v % 2 == self.pull_up_parity {
            NodeKind::PullUp
        } else {
            NodeKind::PullDown
        }
    }

    /// Delay of a command sent by `from` at time `t`.
    pub fn delay(&self, from: usize, t: Fs) -> Fs {
        let mut fast = self.fast_nodes.contains(&from);
        for s in &self.swaps {
            if s.at <= t && s.nodes.contains(&from) {
                fast = s.fast;
            }
        }
        if fast {
            self.fast_delay
        } else {
            self.slow_delay
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FairbanksError {
    #[error("no pending event at {at} fs: the network deadlocked")]
    DeadlockDetected { at: Fs },
    #[error("the topology is not two-colorable by node parity: edge ({0}, {1})")]
    NotAlternating(usize, usize),
    #[error("{0}")]
    Topology(#[from] crate::topology::TopologyError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    /// Re-evaluate the gate of a node.
    Out(usize),
    /// A command reaches latch `edge` and takes effect.
    Latch { edge: usize, set: bool, src: usize },
    /// The endpoint `node` of `edge` observes the latch output.
    See { edge: usize, node: usize, set: bool, src: usize },
}

/// Event-driven state of a Fairbanks network.
#[derive(Clone, Debug)]
pub struct FairbanksNet {
    pub setup: FairbanksSetup,
    pub topology: Topology,
    pub latches: Vec<bool>,
    pub outputs: Vec<bool>,
    pub ticks: Vec<Vec<Fs>>,
    pub warnings: Vec<String>,
    incident: Vec<Vec<usize>>,
    seen: HashMap<(usize, usize), bool>,
    own: HashMap<(usize, usize), (u32, bool)>,
    wire_free: HashMap<(usize, usize), Fs>,
    last_write: Vec<Option<(Fs, bool)>>,
    queue: BinaryHeap<Reverse<(Fs, u64, Event)>>,
    seq: u64,
    now: Fs,
}

impl FairbanksNet {
    /// Line network with all latches reset; pull-up nodes fire first.
    pub fn new(setup: FairbanksSetup) -> Result<FairbanksNet, FairbanksError> {
        let topo = Topology::line(setup.nodes);
        FairbanksNet::with_topology(setup, topo)
    }

    pub fn with_topology(setup: FairbanksSetup, topology: Topology) -> Result<FairbanksNet, FairbanksError> {
        let n = topology.node_count();
        let mut incident = vec![Vec::new(); n];
        let mut seen = HashMap::new();
        for (e, &(a, b)) in topology.edges().iter().enumerate() {
            if setup.kind(a) == setup.kind(b) {
                return Err(FairbanksError::NotAlternating(a, b));
            }
            incident[a].push(e);
            incident[b].push(e);
            seen.insert((e, a), false);
            seen.insert((e, b), false);
        }
        let m = topology.edges().len();
        let mut net = FairbanksNet {
            setup,
            topology,
            latches: vec![false; m],
            outputs: vec![false; n],
            ticks: vec![Vec::new(); n],
            warnings: Vec::new(),
            incident,
            seen,
            own: HashMap::new(),
            wire_free: HashMap::new(),
            last_write: vec![None; m],
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0,
        };
        for v in 0..n {
            if net.gate(v) != net.outputs[v] {
                net.push(net.setup.gate_delay, Event::Out(v));
            }
        }
        Ok(net)
    }

    fn push(&mut self, t: Fs, e: Event) {
        self.seq += 1;
        self.queue.push(Reverse((t, self.seq, e)));
    }

    fn view(&self, edge: usize, v: usize) -> bool {
        match self.own.get(&(edge, v)) {
            Some(&(n, value)) if n > 0 => value,
            _ => self.seen[&(edge, v)],
        }
    }

    fn gate(&self, v: usize) -> bool {
        let mut views = self.incident[v].iter().map(|&e| self.view(e, v));
        match self.setup.kind(v) {
            NodeKind::PullUp => !views.any(|q| q),
            NodeKind::PullDown => views.all(|q| q),
        }
    }

    fn other(&self, edge: usize, v: usize) -> usize {
        let (a, b) = self.topology.edges()[edge];
        if a == v {
            b
        } else {
            a
        }
    }

    /// Processes the next event; `Ok(false)` once the horizon is reached.
    pub fn fairbanks_step(&mut self) -> Result<bool, FairbanksError> {
        let Some(Reverse((t, _, ev))) = self.queue.pop() else {
            return Err(FairbanksError::DeadlockDetected { at: self.now });
        };
        if t > self.setup.horizon {
            return Ok(false);
        }
        self.now = t;
        match ev {
            Event::Out(v) => {
                let val = self.gate(v);
                if self.outputs[v] == val {
                    return Ok(true);
                }
                self.outputs[v] = val;
                if val {
                    self.ticks[v].push(t);
                    let set = self.setup.kind(v) == NodeKind::PullUp;
                    for i in 0..self.incident[v].len() {
                        let e = self.incident[v][i];
                        let y = self.other(e, v);
                        let free = self.wire_free.get(&(v, y)).copied().unwrap_or(0);
                        let arr = (t + self.setup.delay(v, t)).max(free);
                        self.wire_free.insert((v, y), arr);
                        let c = self.own.get(&(e, v)).map_or(0, |x| x.0);
                        self.own.insert((e, v), (c + 1, set));
                        self.push(arr + self.setup.latch_delay, Event::Latch { edge: e, set, src: v });
                    }
                    self.push(t + self.setup.gate_delay, Event::Out(v));
                }
            }
            Event::Latch { edge, set, src } => {
                let mut value = set;
                if let Some((wt, prev)) = self.last_write[edge] {
                    if wt == t && prev != set {
                        value = true;
                        let w = format!("set/reset race on latch {edge} at {t} fs; set wins");
                        log::warn!("{w}");
                        self.warnings.push(w);
                    }
                }
                self.last_write[edge] = Some((t, value));
                self.latches[edge] = value;
                let (a, b) = self.topology.edges()[edge];
                for node in [a, b] {
                    self.push(t, Event::See { edge, node, set: value, src });
                }
            }
            Event::See { edge, node, set, src } => {
                self.seen.insert((edge, node), set);
                if src == node {
                    if let Some(c) = self.own.get_mut(&(edge, node)) {
                        c.0 -= 1;
                    }
                }
                self.push(t + self.setup.gate_delay, Event::Out(node));
            }
        }
        Ok(true)
    }

    pub fn run(mut self) -> Result<FairbanksTrace, FairbanksError> {
        while self.fairbanks_step()? {}
        Ok(FairbanksTrace::new(&self.setup, self.ticks, self.warnings))
    }
}

/// One phase-aligned skew sample. Pull-up tick `k` sits at phase `k` and
/// pull-down tick `k` at phase `k + 1/2`; node times at equal phase are
/// compared, interpolating between ticks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairbanksSample {
    /// Time at which node 0 reaches the phase.
    pub time_fs: f64,
    pub phase: f64,
    pub local_fs: f64,
    pub global_fs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairbanksTrace {
    pub ticks: Vec<Vec<Fs>>,
    pub samples: Vec<FairbanksSample>,
    pub warnings: Vec<String>,
}

impl FairbanksTrace {
    fn new(setup: &FairbanksSetup, ticks: Vec<Vec<Fs>>, warnings: Vec<String>) -> FairbanksTrace {
        let n = ticks.len();
        let min_len = ticks.iter().map(Vec::len).min().unwrap_or(0);
        let mut samples = Vec::new();
        // Doubled times keep the half-phase interpolation exact.
        let at = |v: usize, half: usize| -> i64 {
            let off = if setup.kind(v) == NodeKind::PullUp { 0 } else { 1 };
            let x = half - off;
            let (k, f) = (x / 2, x % 2);
            let t = &ticks[v];
            if f == 0 {
                2 * t[k]
            } else {
                t[k] + t[k + 1]
            }
        };
        for half in 2..(2 * min_len.saturating_sub(2)) {
            let ts: Vec<i64> = (0..n).map(|v| at(v, half)).collect();
            let local = (1..n).map(|i| (ts[i] - ts[i - 1]).abs()).max().unwrap_or(0);
            let global = ts.iter().max().unwrap() - ts.iter().min().unwrap();
            samples.push(FairbanksSample {
                time_fs: ts[0] as f64 / 2.0,
                phase: half as f64 / 2.0,
                local_fs: local as f64 / 2.0,
                global_fs: global as f64 / 2.0,
            });
        }
        FairbanksTrace { ticks, samples, warnings }
    }

    pub fn tick_counts(&self) -> Vec<usize> {
        self.ticks.iter().map(Vec::len).collect()
    }

    fn window(&self, from: f64, to: f64) -> impl Iterator<Item = &FairbanksSample> {
        self.samples.iter().filter(move |s| s.time_fs >= from && s.time_fs < to)
    }

    pub fn max_local(&self, from: f64, to: f64) -> f64 {
        self.window(from, to).map(|s| s.local_fs).fold(0.0, f64::max)
    }

    pub fn max_global(&self, from: f64, to: f64) -> f64 {
        self.window(from, to).map(|s| s.global_fs).fold(0.0, f64::max)
    }
}

/// Outcome of pushing the global skew onto edges by swapping delays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwapReport {
    pub swap_time: Fs,
    pub pre_global_fs: f64,
    pub pre_local_fs: f64,
    pub post_local_fs: f64,
    /// `post_local / pre_global`.
    pub conversion: f64,
    pub trace: FairbanksTrace,
}

/// Length of the observation windows before and after a swap.
pub const SWAP_WINDOW: Fs = ns(10);

pub fn fairbanks_swap_experiment(setup: &FairbanksSetup, swap_time: Fs) -> Result<SwapReport, FairbanksError> {
    let mut s = setup.clone();
    s.swaps = vec![DelaySwap { at: swap_time, nodes: vec![3, 4], fast: false }];
    s.horizon = s.horizon.max(swap_time + 2 * SWAP_WINDOW);
    let trace = FairbanksNet::new(s)?.run()?;
    let (t, w) = (swap_time as f64, SWAP_WINDOW as f64);
    let pre_global = trace.max_global(t - w, t);
    let pre_local = trace.max_local(t - w, t);
    let post_local = trace.max_local(t, t + w);
    Ok(SwapReport {
        swap_time,
        pre_global_fs: pre_global,
        pre_local_fs: pre_local,
        post_local_fs: post_local,
        conversion: if pre_global > 0.0 { post_local / pre_global } else { 0.0 },
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node(parity: usize) -> FairbanksSetup {
        FairbanksSetup { nodes: 2, pull_up_parity: parity, horizon: ns(2), ..FairbanksSetup::uniform(2) }
    }

    // In a two-node cycle each node alternates between its own command
    // settling (delay + latch, seen after a gate delay) and the partner's.
    #[test]
    fn two_node_period_oracle() {
        for parity in [0, 1] {
            let s = two_node(parity);
            let tr = FairbanksNet::new(s.clone()).unwrap().run().unwrap();
            let period = 2 * (s.gate_delay + s.latch_delay + s.slow_delay);
            for ticks in &tr.ticks {
                assert!(ticks.len() > 10);
                for w in ticks.windows(2).skip(2) {
                    assert_eq!(w[1] - w[0], period);
                }
            }
        }
    }

    #[test]
    fn uniform_line_is_skew_free() {
        let tr = FairbanksNet::new(FairbanksSetup::uniform(7)).unwrap().run().unwrap();
        let counts = tr.tick_counts();
        assert!(counts.iter().all(|&c| c > 1000));
        assert_eq!(tr.max_local(ps(100) as f64, f64::MAX), 0.0);
    }

    #[test]
    fn large_local_exceeds_uniform() {
        let tr = FairbanksNet::new(FairbanksSetup::large_local()).unwrap().run().unwrap();
        let ll = tr.max_local(ns(10) as f64, f64::MAX);
        assert!(ll >= ps(5) as f64, "{ll}");
        assert!(tr.warnings.is_empty());
    }

    #[test]
    fn alternation_required() {
        let topo = Topology::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        let r = FairbanksNet::with_topology(FairbanksSetup::uniform(3), topo);
        assert!(matches!(r, Err(FairbanksError::NotAlternating(..))));
    }

    #[test]
    fn isolated_node_ticks_once_then_deadlocks() {
        let topo = Topology::from_edges(1, []).unwrap();
        let s = FairbanksSetup::uniform(1);
        let g = s.gate_delay;
        let r = FairbanksNet::with_topology(s, topo).unwrap().run();
        assert_eq!(r, Err(FairbanksError::DeadlockDetected { at: 2 * g }));
    }
}
