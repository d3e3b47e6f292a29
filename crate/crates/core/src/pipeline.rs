//! Clock-edge sampled threshold words, the Kleene min/max controller, and
//! the measurement/control latency pipeline of one node.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clocks::ModeHistory;
use crate::time::{Fs, Phase};
use crate::tri::Tri;

/// Bits `Q^ell .. Q^1 Q^-1 .. Q^-ell`; thresholds increase left to right.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ThresholdWord {
    pub bits: Vec<Tri>,
    pub sample_time: Fs,
}

impl ThresholdWord {
    pub fn ell(&self) -> u32 {
        (self.bits.len() / 2) as u32
    }

    /// `Q^i` for `i` in `1..=ell` or `-ell..=-1`.
    pub fn q(&self, i: i32) -> Tri {
        let ell = self.ell() as i32;
        assert!(i != 0 && i.abs() <= ell, "bit index {i} out of range");
        let idx = if i > 0 { ell - i } else { ell - 1 - i };
        self.bits[idx as usize]
    }

    pub fn meta_count(&self) -> usize {
        self.bits.iter().filter(|b| b.is_meta()).count()
    }

    /// `1^a M^b 0^c` with `b <= 1`.
    pub fn is_staircase(&self) -> bool {
        let rank = |b: &Tri| match b {
            Tri::One => 0,
            Tri::Meta => 1,
            Tri::Zero => 2,
        };
        self.meta_count() <= 1 && self.bits.windows(2).all(|w| rank(&w[0]) <= rank(&w[1]))
    }

    pub fn parse(s: &str, sample_time: Fs) -> Option<ThresholdWord> {
        let bits: Option<Vec<Tri>> = s.chars().map(Tri::from_char).collect();
        let bits = bits?;
        (bits.len() % 2 == 0 && !bits.is_empty()).then_some(ThresholdWord { bits, sample_time })
    }
}

impl fmt::Display for ThresholdWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bits {
            write!(f, "{}", b.as_char())?;
        }
        Ok(())
    }
}

/// Value used for bits inside a decision separator window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unresolved {
    Symbolic,
    Zero,
    One,
}

impl Unresolved {
    fn value(self) -> Tri {
        match self {
            Unresolved::Symbolic => Tri::Meta,
            Unresolved::Zero => Tri::Zero,
            Unresolved::One => Tri::One,
        }
    }
}

/// Threshold of bit `i`: `-(2i-1)kappa - delta` for `Q^i`, and
/// `(2i-1)kappa - delta` for `Q^-i`.
pub fn threshold(i: i32, kappa: Fs, delta: Fs) -> Fs {
    let m = (2 * i.abs() as Fs - 1) * kappa;
    if i > 0 {
        -m - delta
    } else {
        m - delta
    }
}

fn bit(estimate: Phase, thr: Fs, epsilon: Fs, m: Unresolved) -> Tri {
    if estimate >= Phase::from_fs(thr) {
        Tri::One
    } else if estimate <= Phase::from_fs(thr - epsilon) {
        Tri::Zero
    } else {
        m.value()
    }
}

/// Samples one neighbor's offset estimate into a threshold word.
pub fn sample_thresholds(
    estimate: Phase,
    kappa: Fs,
    delta: Fs,
    epsilon: Fs,
    ell: u32,
    m: Unresolved,
) -> ThresholdWord {
    let ell = ell as i32;
    let bits = (1..=ell)
        .rev()
        .chain((1..=ell).map(|i| -i))
        .map(|i| bit(estimate, threshold(i, kappa, delta), epsilon, m))
        .collect();
    ThresholdWord { bits, sample_time: 0 }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PipelineError {
    #[error("word has {got} threshold pairs, expected {want}")]
    MismatchedEll { want: u32, got: u32 },
}

/// `md = OR_i (Q^-i_max AND Q^i_min)` under Kleene semantics, where `max`
/// is the OR and `min` the AND over neighbors.
pub fn controller(words: &[ThresholdWord], ell: u32) -> Result<Tri, PipelineError> {
    if let Some(w) = words.iter().find(|w| w.ell() != ell) {
        return Err(PipelineError::MismatchedEll { want: ell, got: w.ell() });
    }
    let mut md = Tri::Zero;
    for i in 1..=ell as i32 {
        let qmax = words.iter().fold(Tri::Zero, |a, w| a.or(w.q(-i)));
        let qmin = words.iter().fold(Tri::One, |a, w| a.and(w.q(i)));
        md = md.or(qmax.and(qmin));
    }
    Ok(md)
}

/// Latency state of one node between sampling and the oscillator input.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineState {
    ell: u32,
    t_meas: Fs,
    t_ctr: Fs,
    in_flight: VecDeque<(Fs, Vec<ThresholdWord>)>,
    latched: Option<Vec<ThresholdWord>>,
    controller_out: Tri,
    pending: VecDeque<(Fs, Tri)>,
    forced: Option<Tri>,
    md: Tri,
    history: ModeHistory,
}

/// What a pipeline step changed.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StepOutput {
    pub delivered: bool,
    pub md_changed: Option<Tri>,
}

impl PipelineState {
    /// Idle pipeline with `md = 0`, history seeded from `history_start`.
    pub fn new(ell: u32, t_meas: Fs, t_ctr: Fs, history_start: Fs) -> PipelineState {
        PipelineState {
            ell,
            t_meas,
            t_ctr,
            in_flight: VecDeque::new(),
            latched: None,
            controller_out: Tri::Zero,
            pending: VecDeque::new(),
            forced: None,
            md: Tri::Zero,
            history: ModeHistory::new(history_start, Tri::Zero),
        }
    }

    pub fn md(&self) -> Tri {
        self.md
    }

    pub fn controller_out(&self) -> Tri {
        self.controller_out
    }

    pub fn latched(&self) -> Option<&[ThresholdWord]> {
        self.latched.as_deref()
    }

    pub fn history(&self) -> &ModeHistory {
        &self.history
    }

    /// Overrides the controller output from now on (fault injection).
    pub fn force(&mut self, now: Fs, md: Option<Tri>) {
        self.forced = md;
        self.recompute(now);
    }

    pub fn next_event_time(&self) -> Option<Fs> {
        let a = self.in_flight.front().map(|x| x.0);
        let b = self.pending.front().map(|x| x.0);
        a.into_iter().chain(b).min()
    }

    fn recompute(&mut self, now: Fs) {
        let out = match (self.forced, &self.latched) {
            (Some(f), _) => f,
            (None, Some(w)) => controller(w, self.ell).expect("words share ell"),
            (None, None) => Tri::Zero,
        };
        if out != self.controller_out {
            self.controller_out = out;
            self.pending.push_back((now + self.t_ctr, out));
        }
    }

    /// Processes everything due at `now`: a fresh snapshot taken on a clock
    /// edge, word deliveries after `t_meas`, controller changes, and mode
    /// changes after `t_ctr`.
    pub fn step(&mut self, now: Fs, sampled: Option<Vec<ThresholdWord>>) -> Result<StepOutput, PipelineError> {
        let mut out = StepOutput::default();
        if let Some(words) = sampled {
            if let Some(w) = words.iter().find(|w| w.ell() != self.ell) {
                return Err(PipelineError::MismatchedEll { want: self.ell, got: w.ell() });
            }
            self.in_flight.push_back((now + self.t_meas, words));
        }
        while self.in_flight.front().is_some_and(|x| x.0 <= now) {
            let (_, w) = self.in_flight.pop_front().unwrap();
            self.latched = Some(w);
            out.delivered = true;
        }
        if out.delivered {
            self.recompute(now);
        }
        while self.pending.front().is_some_and(|x| x.0 <= now) {
            let (_, md) = self.pending.pop_front().unwrap();
            if md != self.md {
                self.md = md;
                self.history.push(now, md);
                out.md_changed = Some(md);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::ps;

    const K: Fs = 10_000;
    const D: Fs = 4_141;
    const E: Fs = 500;

    fn word(est: Fs, ell: u32) -> String {
        sample_thresholds(Phase::from_fs(est), K, D, E, ell, Unresolved::Symbolic).to_string()
    }

    #[test]
    fn sampling_examples() {
        assert_eq!(word(0, 3), "111000");
        // Just past the first positive threshold; a mirrored reading of the
        // same example would give 110000.
        assert_eq!(word(K - D + 1, 3), "111100");
        assert_eq!(word(3 * K - D + 1, 3), "111110");
        assert_eq!(word(-(K + D + E + 1), 3), "110000");
        assert_eq!(word(-(3 * K + D + E + 1), 3), "100000");
        assert_eq!(word(K - D - 1, 2), "11M0");
        assert_eq!(word(K - D - E, 2), "1100");
        assert_eq!(word(K - D, 2), "1110");
    }

    #[test]
    fn bit_accessor_order() {
        let w = ThresholdWord::parse("1M00", 0).unwrap();
        assert_eq!(w.q(2), Tri::One);
        assert_eq!(w.q(1), Tri::Meta);
        assert_eq!(w.q(-1), Tri::Zero);
        assert_eq!(w.q(-2), Tri::Zero);
        assert!(w.is_staircase());
        assert!(!ThresholdWord::parse("1010", 0).unwrap().is_staircase());
        assert!(!ThresholdWord::parse("1MM0", 0).unwrap().is_staircase());
    }

    fn words(v: &[&str]) -> Vec<ThresholdWord> {
        v.iter().map(|s| ThresholdWord::parse(s, 0).unwrap()).collect()
    }

    #[test]
    fn controller_examples() {
        assert_eq!(controller(&words(&["110000", "111000"]), 3), Ok(Tri::Zero));
        assert_eq!(controller(&words(&["111100", "111000"]), 3), Ok(Tri::One));
        assert_eq!(controller(&words(&["111000", "111000"]), 3), Ok(Tri::Zero));
        assert_eq!(controller(&words(&["111100", "11M000"]), 3), Ok(Tri::Meta));
        // Q^-1 max is 1 (masked M in the sibling), Q^1 is 1 everywhere.
        assert_eq!(controller(&words(&["1111", "11M0"]), 2), Ok(Tri::One));
        assert_eq!(controller(&words(&["1100", "1M00"]), 2), Ok(Tri::Zero));
        assert_eq!(controller(&[], 2), Ok(Tri::Zero));
        assert_eq!(
            controller(&words(&["1100", "111000"]), 2),
            Err(PipelineError::MismatchedEll { want: 2, got: 3 })
        );
    }

    #[test]
    fn pipeline_latencies() {
        let t_meas = ps(500);
        let t_ctr = ps(25);
        let mut p = PipelineState::new(2, t_meas, t_ctr, -ps(250));
        let mut w = words(&["1110"]);
        w[0].sample_time = ps(100);
        p.step(ps(100), Some(w)).unwrap();
        assert_eq!(p.next_event_time(), Some(ps(600)));
        let o = p.step(ps(600), None).unwrap();
        assert!(o.delivered);
        assert_eq!(p.controller_out(), Tri::One);
        assert_eq!(p.md(), Tri::Zero);
        assert_eq!(p.next_event_time(), Some(ps(625)));
        let o = p.step(ps(625), None).unwrap();
        assert_eq!(o.md_changed, Some(Tri::One));
        assert_eq!(p.history().value_at(ps(625)), Tri::One);
        assert_eq!(p.history().value_at(ps(624)), Tri::Zero);
        assert_eq!(p.next_event_time(), None);
    }

    #[test]
    fn quiescent_when_word_unchanged() {
        let mut p = PipelineState::new(2, 0, 0, 0);
        p.step(10, Some(words(&["1100"]))).unwrap();
        let o = p.step(20, Some(words(&["1100"]))).unwrap();
        assert_eq!(o.md_changed, None);
        assert_eq!(p.md(), Tri::Zero);
    }

    #[test]
    fn overlapping_measurements_deliver_in_order() {
        let mut p = PipelineState::new(2, ps(500), 0, 0);
        p.step(0, Some(words(&["1110"]))).unwrap();
        p.step(ps(300), Some(words(&["1100"]))).unwrap();
        p.step(ps(500), None).unwrap();
        assert_eq!(p.md(), Tri::One);
        p.step(ps(800), None).unwrap();
        assert_eq!(p.md(), Tri::Zero);
    }
}
