//! Hardware and logical clocks over piecewise-constant rates, the mode
//! history seen by the oscillator, and the oscillator's locking behavior.
//!
//! A [`ClockTrack`] stores every rate segment of one node, so clock values
//! at any past instant (needed for delayed pulse lookups) are exact.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::{div_ceil_i128, rate, Fs, Phase, PHASE_PER_FS, PPB};
use crate::tri::Tri;

/// Piecewise-constant hardware rate `h_v` in ppb. The first step applies
/// from the start of time (and to extrapolation before 0).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateSchedule {
    pub steps: Vec<(Fs, i64)>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("schedule is empty")]
    Empty,
    #[error("breakpoints are not strictly increasing at {0}")]
    Unordered(Fs),
    #[error("rate {rate} at {at} outside [{lo}, {hi}]")]
    OutOfRange { at: Fs, rate: i64, lo: i64, hi: i64 },
}

impl RateSchedule {
    pub fn constant(h_ppb: i64) -> RateSchedule {
        RateSchedule { steps: vec![(0, h_ppb)] }
    }

    pub fn rate_at(&self, t: Fs) -> i64 {
        let i = self.steps.partition_point(|&(s, _)| s <= t);
        self.steps[i.saturating_sub(1)].1
    }

    /// First breakpoint strictly after `t`.
    pub fn next_break(&self, t: Fs) -> Option<Fs> {
        let i = self.steps.partition_point(|&(s, _)| s <= t);
        self.steps.get(i).map(|&(s, _)| s)
    }

    /// Checks `1 <= h <= 1+rho` on the ppb grid.
    pub fn validate(&self, rho_ppb: i64) -> Result<(), ScheduleError> {
        if self.steps.is_empty() {
            return Err(ScheduleError::Empty);
        }
        for w in self.steps.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(ScheduleError::Unordered(w[1].0));
            }
        }
        for &(at, r) in &self.steps {
            if r < PPB || r > PPB + rho_ppb {
                return Err(ScheduleError::OutOfRange { at, rate: r, lo: PPB, hi: PPB + rho_ppb });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub t0: Fs,
    pub h0: Phase,
    pub l0: Phase,
    pub h_ppb: i64,
    pub m_ppb: i64,
}

impl Segment {
    pub fn l_at(&self, t: Fs) -> Phase {
        Phase(self.l0.0 + rate(self.h_ppb, self.m_ppb) * (t - self.t0) as i128)
    }

    pub fn h_at(&self, t: Fs) -> Phase {
        Phase(self.h0.0 + self.h_ppb as i128 * PPB as i128 * (t - self.t0) as i128)
    }
}

/// Clock state of one node: H and L with their full rate history.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClockTrack {
    segments: Vec<Segment>,
}

impl ClockTrack {
    /// Starts at time 0 with `H(0) = L(0) = initial`.
    pub fn new(initial: Phase, h_ppb: i64, m_ppb: i64) -> ClockTrack {
        ClockTrack { segments: vec![Segment { t0: 0, h0: initial, l0: initial, h_ppb, m_ppb }] }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn current(&self) -> &Segment {
        self.segments.last().expect("track is never empty")
    }

    fn segment_at(&self, t: Fs) -> &Segment {
        let i = self.segments.partition_point(|s| s.t0 <= t);
        &self.segments[i.saturating_sub(1)]
    }

    /// Logical clock at `t`; before time 0 the initial rate is extrapolated.
    pub fn l_at(&self, t: Fs) -> Phase {
        self.segment_at(t).l_at(t)
    }

    pub fn h_at(&self, t: Fs) -> Phase {
        self.segment_at(t).h_at(t)
    }

    /// Switches rates from `t` on. `t` must not precede the current segment.
    pub fn set_rate(&mut self, t: Fs, h_ppb: i64, m_ppb: i64) {
        let cur = *self.current();
        assert!(t >= cur.t0, "rate change at {t} before segment start {}", cur.t0);
        if cur.h_ppb == h_ppb && cur.m_ppb == m_ppb {
            return;
        }
        let seg = Segment { t0: t, h0: cur.h_at(t), l0: cur.l_at(t), h_ppb, m_ppb };
        if cur.t0 == t {
            *self.segments.last_mut().unwrap() = seg;
        } else {
            self.segments.push(seg);
        }
    }

    /// Advances over `dt` at the given rates: the step form of the clock
    /// integral.
    pub fn advance(&mut self, now: Fs, dt: Fs, h_ppb: i64, m_ppb: i64) -> Fs {
        assert!(dt > 0);
        self.set_rate(now, h_ppb, m_ppb);
        now + dt
    }

    /// Earliest integer time `>= from` with `L(t) >= target`, assuming the
    /// current segment's rate persists.
    pub fn reach_time(&self, from: Fs, target: Phase) -> Fs {
        let s = self.current();
        let l = s.l_at(from);
        if l >= target {
            return from;
        }
        from + div_ceil_i128(target.0 - l.0, rate(s.h_ppb, s.m_ppb)) as Fs
    }

    /// Rising edges of the derived clock in `[from, to)`: instants where `L`
    /// reaches a multiple of `t_clk` (nominal), rounded up to the fs grid.
    pub fn rising_edges(&self, t_clk: Fs, from: Fs, to: Fs) -> Vec<Fs> {
        let period = t_clk as i128 * PHASE_PER_FS;
        let mut out = Vec::new();
        let mut k = div_ceil_i128(self.l_at(from).0, period);
        for (i, s) in self.segments.iter().enumerate() {
            let end = self.segments.get(i + 1).map_or(to, |n| n.t0.min(to));
            if end <= from {
                continue;
            }
            let start = s.t0.max(from);
            let r = rate(s.h_ppb, s.m_ppb);
            loop {
                let target = k * period;
                let l = s.l_at(start);
                let t = if l.0 >= target { start } else { start + div_ceil_i128(target - l.0, r) as Fs };
                if t >= end {
                    break;
                }
                out.push(t);
                k += 1;
            }
            if end >= to {
                break;
            }
        }
        out
    }
}

/// Time-stamped changes of the mode signal seen by the oscillator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeHistory {
    changes: Vec<(Fs, Tri)>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("mode history starts at {start} but the window begins at {needed}")]
pub struct HistoryGap {
    pub start: Fs,
    pub needed: Fs,
}

impl ModeHistory {
    pub fn new(start: Fs, md: Tri) -> ModeHistory {
        ModeHistory { changes: vec![(start, md)] }
    }

    pub fn from_changes(changes: Vec<(Fs, Tri)>) -> ModeHistory {
        assert!(!changes.is_empty());
        ModeHistory { changes }
    }

    pub fn changes(&self) -> &[(Fs, Tri)] {
        &self.changes
    }

    pub fn push(&mut self, t: Fs, md: Tri) {
        let last = self.changes.last_mut().unwrap();
        assert!(t >= last.0);
        if last.1 == md {
            return;
        }
        if last.0 == t {
            last.1 = md;
            let n = self.changes.len();
            if n >= 2 && self.changes[n - 2].1 == md {
                self.changes.pop();
            }
        } else {
            self.changes.push((t, md));
        }
    }

    pub fn value_at(&self, t: Fs) -> Tri {
        let i = self.changes.partition_point(|&(s, _)| s <= t);
        self.changes[i.saturating_sub(1)].1
    }

    /// The value held on all of `[a, b]`, if constant.
    pub fn constant_on(&self, a: Fs, b: Fs) -> Option<Tri> {
        let v = self.value_at(a);
        let changed = self.changes.iter().any(|&(s, m)| s > a && s <= b && m != v);
        (!changed).then_some(v)
    }

    /// Times in `(a, b]` where the rate envelope may change: every change
    /// and every change shifted by `t_osc`.
    pub fn envelope_breaks(&self, a: Fs, b: Fs, t_osc: Fs) -> Vec<Fs> {
        let mut v: Vec<Fs> = self
            .changes
            .iter()
            .flat_map(|&(s, _)| [s, s + t_osc])
            .filter(|&s| s > a && s <= b)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Closed interval of logical-clock rates in phase units per fs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateInterval {
    pub lo: i128,
    pub hi: i128,
}

impl RateInterval {
    pub fn contains(&self, r: i128) -> bool {
        self.lo <= r && r <= self.hi
    }
}

/// Admissible logical rates at `t` given the mode over `[t - t_osc, t]`.
pub fn oscillator_rate_bounds(
    history: &ModeHistory,
    t: Fs,
    t_osc: Fs,
    rho_ppb: i64,
    mu_ppb: i64,
) -> Result<RateInterval, HistoryGap> {
    let start = history.changes[0].0;
    if start > t - t_osc {
        return Err(HistoryGap { start, needed: t - t_osc });
    }
    let (p, hr, fm) = (PPB, PPB + rho_ppb, PPB + mu_ppb);
    Ok(match history.constant_on(t - t_osc, t) {
        Some(Tri::Zero) => RateInterval { lo: rate(p, p), hi: rate(hr, p) },
        Some(Tri::One) => RateInterval { lo: rate(p, fm), hi: rate(hr, fm) },
        _ => RateInterval { lo: rate(p, p), hi: rate(hr, fm) },
    })
}

/// Mode multiplier chosen while the oscillator has not locked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnlockedPolicy {
    PinLow,
    PinHigh,
    /// Stay at the extreme opposite to the new target for as long as the
    /// oscillator is allowed to; an unresolved mode keeps the previous rate.
    AdversarialExtremes,
    SeededRandom,
}

/// Tunable oscillator: follows `md` after `t_osc`, free within `[1, 1+mu]`
/// before that.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Oscillator {
    pub m_ppb: i64,
    target: Tri,
    lock_at: Option<Fs>,
    mu_ppb: i64,
    t_osc: Fs,
    policy: UnlockedPolicy,
}

impl Oscillator {
    /// Locked to `md` from the start.
    pub fn new(md: Tri, mu_ppb: i64, t_osc: Fs, policy: UnlockedPolicy) -> Oscillator {
        let m_ppb = if md == Tri::One { PPB + mu_ppb } else { PPB };
        let lock_at = if md == Tri::Meta { None } else { Some(Fs::MIN) };
        Oscillator { m_ppb, target: md, lock_at, mu_ppb, t_osc, policy }
    }

    pub fn locked(&self, t: Fs) -> Option<Tri> {
        match self.lock_at {
            Some(l) if l <= t && self.m_ppb == self.locked_rate() => Some(self.target),
            _ => None,
        }
    }

    fn locked_rate(&self) -> i64 {
        if self.target == Tri::One {
            PPB + self.mu_ppb
        } else {
            PPB
        }
    }

    /// Pending lock instant, if one lies after `t`.
    pub fn next_event(&self, t: Fs) -> Option<Fs> {
        self.lock_at.filter(|&l| l > t)
    }

    /// Reacts to a new mode value at `t`; returns the multiplier from `t` on.
    pub fn set_mode<R: Rng>(&mut self, t: Fs, md: Tri, rng: &mut R) -> i64 {
        if md == self.target {
            return self.m_ppb;
        }
        self.target = md;
        self.lock_at = if md == Tri::Meta { None } else { Some(t + self.t_osc) };
        self.m_ppb = match self.policy {
            UnlockedPolicy::PinLow => PPB,
            UnlockedPolicy::PinHigh => PPB + self.mu_ppb,
            UnlockedPolicy::AdversarialExtremes => match md {
                Tri::One => PPB,
                Tri::Zero => PPB + self.mu_ppb,
                Tri::Meta => self.m_ppb,
            },
            UnlockedPolicy::SeededRandom => PPB + rng.random_range(0..=self.mu_ppb),
        };
        if self.t_osc == 0 {
            self.tick(t);
        }
        self.m_ppb
    }

    /// Applies a due lock; returns the new multiplier if it changed.
    pub fn tick(&mut self, t: Fs) -> Option<i64> {
        match self.lock_at {
            Some(l) if l <= t => {
                let m = self.locked_rate();
                (m != self.m_ppb).then(|| {
                    self.m_ppb = m;
                    m
                })
            }
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::ps;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const RHO: i64 = 10_000;
    const MU: i64 = 100_000;

    #[test]
    fn slow_period_edges() {
        let c = ClockTrack::new(Phase::ZERO, PPB, PPB);
        assert_eq!(c.rising_edges(ps(500), 1, ps(1001)), vec![ps(500), ps(1000)]);
        assert_eq!(c.rising_edges(ps(500), 0, ps(1000)), vec![0, ps(500)]);
    }

    #[test]
    fn fast_spacing() {
        let m = PPB + MU;
        let h = PPB + RHO;
        let c = ClockTrack::new(Phase::ZERO, h, m);
        let e = c.rising_edges(ps(500), 1, ps(5000));
        let r = rate(h, m);
        for (k, t) in e.iter().enumerate() {
            let target = (k as i128 + 1) * ps(500) as i128 * PHASE_PER_FS;
            assert_eq!(*t as i128, div_ceil_i128(target, r));
        }
        for w in e.windows(2) {
            let gap = w[1] - w[0];
            let ideal = ps(500) as f64 / ((1.0 + 1e-4) * (1.0 + 1e-5));
            assert!((gap as f64 - ideal).abs() <= 1.0, "{gap} {ideal}");
        }
    }

    // Fine-step integration oracle for a rate switch mid-window.
    #[test]
    fn edges_across_rate_switch() {
        let mut c = ClockTrack::new(Phase::from_fs(123), PPB, PPB);
        c.set_rate(ps(700), PPB + RHO, PPB + MU);
        c.set_rate(ps(1300), PPB, PPB + MU);
        let got = c.rising_edges(ps(500), 0, ps(3000));
        let mut want = Vec::new();
        let mut l = 123i128 * PHASE_PER_FS;
        let mut k = 1i128;
        for t in 0..ps(3000) {
            if l >= k * ps(500) as i128 * PHASE_PER_FS {
                want.push(t);
                k += 1;
            }
            let (h, m) = if t < ps(700) {
                (PPB, PPB)
            } else if t < ps(1300) {
                (PPB + RHO, PPB + MU)
            } else {
                (PPB, PPB + MU)
            };
            l += rate(h, m);
            assert_eq!(c.l_at(t + 1).0, l);
        }
        assert_eq!(got, want);
        for w in got.windows(2) {
            assert!(w[1] - w[0] <= ps(500));
        }
    }

    #[test]
    fn advance_matches_rates() {
        let mut c = ClockTrack::new(Phase::ZERO, PPB, PPB);
        let t = c.advance(0, ps(500), PPB, PPB);
        assert_eq!(c.l_at(t), Phase::from_ps(500));
        let t2 = c.advance(t, 1, PPB + RHO, PPB + MU);
        assert_eq!(c.l_at(t2).0 - c.l_at(t).0, rate(PPB + RHO, PPB + MU));
        assert_eq!(c.h_at(t2).0 - c.h_at(t).0, (PPB + RHO) as i128 * PPB as i128);
    }

    #[test]
    fn extrapolates_before_zero() {
        let c = ClockTrack::new(Phase::from_fs(10), PPB, PPB + MU);
        assert_eq!(c.l_at(-10).0, 10 * PHASE_PER_FS - 10 * rate(PPB, PPB + MU));
    }

    #[test]
    fn rate_bounds_windows() {
        let t_osc = ps(250);
        let h = ModeHistory::new(-t_osc, Tri::Zero);
        let b = oscillator_rate_bounds(&h, 0, t_osc, RHO, MU).unwrap();
        assert_eq!(b, RateInterval { lo: rate(PPB, PPB), hi: rate(PPB + RHO, PPB) });
        let mut h2 = h.clone();
        h2.push(ps(900), Tri::One);
        let b = oscillator_rate_bounds(&h2, ps(1000), t_osc, RHO, MU).unwrap();
        assert_eq!(b, RateInterval { lo: rate(PPB, PPB), hi: rate(PPB + RHO, PPB + MU) });
        let b = oscillator_rate_bounds(&h2, ps(1150), t_osc, RHO, MU).unwrap();
        assert_eq!(b, RateInterval { lo: rate(PPB, PPB + MU), hi: rate(PPB + RHO, PPB + MU) });
        let m = ModeHistory::new(-t_osc, Tri::Meta);
        let b = oscillator_rate_bounds(&m, ps(10), t_osc, RHO, MU).unwrap();
        assert_eq!(b.lo, rate(PPB, PPB));
        assert_eq!(b.hi, rate(PPB + RHO, PPB + MU));
        assert!(oscillator_rate_bounds(&h, -1, t_osc, RHO, MU).is_err());
    }

    #[test]
    fn history_push_collapses() {
        let mut h = ModeHistory::new(0, Tri::Zero);
        h.push(5, Tri::One);
        h.push(5, Tri::Zero);
        assert_eq!(h.changes(), &[(0, Tri::Zero)]);
        h.push(7, Tri::Zero);
        assert_eq!(h.changes().len(), 1);
    }

    #[test]
    fn oscillator_locks_after_t_osc() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for policy in [
            UnlockedPolicy::PinLow,
            UnlockedPolicy::PinHigh,
            UnlockedPolicy::AdversarialExtremes,
            UnlockedPolicy::SeededRandom,
        ] {
            let mut o = Oscillator::new(Tri::Zero, MU, 250, policy);
            let m = o.set_mode(1000, Tri::One, &mut rng);
            assert!((PPB..=PPB + MU).contains(&m));
            assert_eq!(o.locked(1100), None);
            assert_eq!(o.next_event(1000), Some(1250));
            o.tick(1250);
            assert_eq!(o.m_ppb, PPB + MU);
            assert_eq!(o.locked(1250), Some(Tri::One));
            o.set_mode(2000, Tri::Meta, &mut rng);
            assert_eq!(o.next_event(2000), None);
            assert_eq!(o.locked(5000), None);
        }
        let mut o = Oscillator::new(Tri::One, MU, 250, UnlockedPolicy::AdversarialExtremes);
        assert_eq!(o.set_mode(0, Tri::Zero, &mut rng), PPB + MU);
        assert_eq!(o.set_mode(10, Tri::Meta, &mut rng), PPB + MU);
    }

    #[test]
    fn schedule_validation() {
        let s = RateSchedule { steps: vec![(0, PPB), (ps(5), PPB + RHO)] };
        assert!(s.validate(RHO).is_ok());
        assert_eq!(s.rate_at(ps(5)), PPB + RHO);
        assert_eq!(s.rate_at(-3), PPB);
        assert_eq!(s.next_break(0), Some(ps(5)));
        assert_eq!(s.next_break(ps(5)), None);
        assert!(RateSchedule { steps: vec![(0, PPB - 1)] }.validate(RHO).is_err());
        assert!(RateSchedule { steps: vec![(3, PPB), (3, PPB)] }.validate(RHO).is_err());
    }
}
