//! Three-valued signals with Kleene semantics. `Meta` stands for an
//! unresolved (possibly metastable) value.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tri {
    #[serde(rename = "0")]
    Zero,
    #[serde(rename = "M")]
    Meta,
    #[serde(rename = "1")]
    One,
}

impl Tri {
    pub fn from_bool(b: bool) -> Tri {
        if b {
            Tri::One
        } else {
            Tri::Zero
        }
    }

    pub fn and(self, o: Tri) -> Tri {
        match (self, o) {
            (Tri::Zero, _) | (_, Tri::Zero) => Tri::Zero,
            (Tri::One, Tri::One) => Tri::One,
            _ => Tri::Meta,
        }
    }

    pub fn or(self, o: Tri) -> Tri {
        match (self, o) {
            (Tri::One, _) | (_, Tri::One) => Tri::One,
            (Tri::Zero, Tri::Zero) => Tri::Zero,
            _ => Tri::Meta,
        }
    }

    pub fn not(self) -> Tri {
        match self {
            Tri::Zero => Tri::One,
            Tri::One => Tri::Zero,
            Tri::Meta => Tri::Meta,
        }
    }

    pub fn is_meta(self) -> bool {
        self == Tri::Meta
    }

    /// Replaces `Meta` by `r`.
    pub fn resolve(self, r: bool) -> bool {
        match self {
            Tri::Zero => false,
            Tri::One => true,
            Tri::Meta => r,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Tri::Zero => '0',
            Tri::Meta => 'M',
            Tri::One => '1',
        }
    }

    pub fn from_char(c: char) -> Option<Tri> {
        match c {
            '0' => Some(Tri::Zero),
            'M' => Some(Tri::Meta),
            '1' => Some(Tri::One),
            _ => None,
        }
    }
}

impl fmt::Display for Tri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: [Tri; 3] = [Tri::Zero, Tri::Meta, Tri::One];

    #[test]
    fn masking() {
        assert_eq!(Tri::One.or(Tri::Meta), Tri::One);
        assert_eq!(Tri::Zero.or(Tri::Meta), Tri::Meta);
        assert_eq!(Tri::Meta.or(Tri::Meta), Tri::Meta);
        assert_eq!(Tri::Zero.and(Tri::Meta), Tri::Zero);
        assert_eq!(Tri::One.and(Tri::Meta), Tri::Meta);
    }

    // Kleene evaluation agrees with the consensus of both resolutions.
    #[test]
    fn consensus_of_resolutions() {
        for a in ALL {
            for b in ALL {
                for (op, f) in [(Tri::and as fn(Tri, Tri) -> Tri, (|x, y| x && y) as fn(bool, bool) -> bool), (Tri::or, |x, y| x || y)] {
                    let outs: Vec<bool> = [false, true]
                        .iter()
                        .flat_map(|&ra| [false, true].map(move |rb| (ra, rb)))
                        .map(|(ra, rb)| f(a.resolve(ra), b.resolve(rb)))
                        .collect();
                    let want = if outs.iter().all(|&x| x) {
                        Tri::One
                    } else if outs.iter().all(|&x| !x) {
                        Tri::Zero
                    } else {
                        Tri::Meta
                    };
                    assert_eq!(op(a, b), want, "{a} {b}");
                }
            }
        }
    }
}
