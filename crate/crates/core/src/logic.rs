//! Fast condition, slow condition and fast trigger over the extreme offsets
//! of a node's neighborhood.

use serde::{Deserialize, Serialize};

use crate::time::{Fs, Phase};

/// Largest and smallest offset `L_w - L_v` over the closed neighborhood of
/// `v`. The self-offset 0 always takes part.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OffsetView {
    pub max: Phase,
    pub min: Phase,
}

impl OffsetView {
    pub fn new(offsets: impl IntoIterator<Item = Phase>) -> OffsetView {
        let mut v = OffsetView { max: Phase::ZERO, min: Phase::ZERO };
        for o in offsets {
            v.max = v.max.max(o);
            v.min = v.min.min(o);
        }
        v
    }

    pub fn from_fs(offsets: impl IntoIterator<Item = Fs>) -> OffsetView {
        OffsetView::new(offsets.into_iter().map(Phase::from_fs))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub holds: bool,
    /// Smallest level at which the condition holds.
    pub s: Option<u32>,
}

impl Witness {
    fn first(ell: u32, pred: impl Fn(i128) -> bool) -> Witness {
        let s = (0..=ell).find(|&s| pred(s as i128));
        Witness { holds: s.is_some(), s }
    }
}

fn k(kappa: Fs) -> i128 {
    Phase::from_fs(kappa).0
}

/// `exists s in 0..=ell: max >= (2s+1)kappa and min >= -(2s+1)kappa`.
pub fn fast_condition(view: &OffsetView, kappa: Fs, ell: u32) -> Witness {
    let k = k(kappa);
    Witness::first(ell, |s| {
        let t = (2 * s + 1) * k;
        view.max.0 >= t && view.min.0 >= -t
    })
}

/// `exists s in 0..=ell: min <= -2s*kappa and max <= 2s*kappa`.
pub fn slow_condition(view: &OffsetView, kappa: Fs, ell: u32) -> Witness {
    let k = k(kappa);
    Witness::first(ell, |s| {
        let t = 2 * s * k;
        view.min.0 <= -t && view.max.0 <= t
    })
}

/// The fast condition shifted down by `delta` on both axes, evaluated on
/// estimates.
pub fn fast_trigger(view: &OffsetView, kappa: Fs, delta: Fs, ell: u32) -> Witness {
    let k = k(kappa);
    let d = Phase::from_fs(delta).0;
    Witness::first(ell, |s| {
        let t = (2 * s + 1) * k;
        view.max.0 >= t - d && view.min.0 >= -t - d
    })
}

/// Which region of the offset plane a view falls into.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Fast(u32),
    Slow(u32),
    Trigger(u32),
    Neither,
}

pub fn classify(exact: Option<&OffsetView>, estimate: &OffsetView, kappa: Fs, delta: Fs, ell: u32) -> Region {
    if let Some(e) = exact {
        if let Some(s) = fast_condition(e, kappa, ell).s {
            return Region::Fast(s);
        }
        if let Some(s) = slow_condition(e, kappa, ell).s {
            return Region::Slow(s);
        }
    }
    if let Some(s) = fast_trigger(estimate, kappa, delta, ell).s {
        return Region::Trigger(s);
    }
    if exact.is_none() {
        if let Some(s) = slow_condition(estimate, kappa, ell).s {
            return Region::Slow(s);
        }
    }
    Region::Neither
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::ps;

    const K: Fs = 10_000;

    fn view(max: Fs, min: Fs) -> OffsetView {
        OffsetView::from_fs([max, min])
    }

    #[test]
    fn fast_condition_examples() {
        assert_eq!(fast_condition(&view(0, 0), K, 2), Witness { holds: false, s: None });
        assert_eq!(fast_condition(&view(K, 0), K, 2).s, Some(0));
        assert_eq!(fast_condition(&view(3 * K, -2 * K), K, 2).s, Some(1));
        assert_eq!(fast_condition(&view(3 * K, -2 * K), K, 0).s, None);
    }

    #[test]
    fn slow_condition_examples() {
        assert_eq!(slow_condition(&view(0, -1), K, 2).s, Some(0));
        assert_eq!(slow_condition(&view(0, 0), K, 2).s, Some(0));
        assert_eq!(slow_condition(&view(K, -2 * K), K, 2).s, Some(1));
        assert!(!slow_condition(&view(K, -K), K, 2).holds);
    }

    #[test]
    fn fast_trigger_examples() {
        let d = ps(4);
        assert_eq!(fast_trigger(&view(K - d, 0), K, d, 2).s, Some(0));
        assert!(!fast_trigger(&view(K - d - 1, 0), K, d, 2).holds);
        assert!(!fast_trigger(&view(0, 0), K, d, 2).holds);
    }

    #[test]
    fn self_offset_included() {
        let v = OffsetView::from_fs([5, 7]);
        assert_eq!(v.min, Phase::ZERO);
        let v = OffsetView::from_fs([-5, -7]);
        assert_eq!(v.max, Phase::ZERO);
        assert_eq!(v.min, Phase::from_fs(-7));
    }

    // The extreme-offset form agrees with the per-neighbor quantifiers.
    #[test]
    fn extreme_form_matches_neighbor_quantifiers() {
        let d = 3_000;
        let vals: Vec<Fs> = (-12..=12).map(|i| i * K / 2).collect();
        for &a in &vals {
            for &b in &vals {
                let nbrs = [0, a, b];
                let v = OffsetView::from_fs(nbrs);
                let first = |p: &dyn Fn(Fs) -> bool| (0..=2i64).find(|&s| p(s)).map(|s| s as u32);
                let fc = first(&|s| {
                    let t = (2 * s + 1) * K;
                    nbrs.iter().any(|&x| x >= t) && nbrs.iter().all(|&y| y >= -t)
                });
                let ft = first(&|s| {
                    let t = (2 * s + 1) * K;
                    nbrs.iter().any(|&x| x >= t - d) && nbrs.iter().all(|&y| y >= -t - d)
                });
                let sc = first(&|s| {
                    nbrs.iter().any(|&x| x <= -2 * s * K) && nbrs.iter().all(|&y| y <= 2 * s * K)
                });
                assert_eq!(fast_condition(&v, K, 2).s, fc, "{a} {b}");
                assert_eq!(fast_trigger(&v, K, d, 2).s, ft, "{a} {b}");
                assert_eq!(slow_condition(&v, K, 2).s, sc, "{a} {b}");
            }
        }
    }
}
