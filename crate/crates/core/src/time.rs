//! Integer time base and fixed-point clock phase.
//!
//! Wall-clock time is an `i64` count of femtoseconds. Clock values are kept
//! as [`Phase`], an `i128` in units of 1e-18 nominal femtoseconds, so that a
//! rate expressed as a product of two parts-per-billion factors integrates
//! without rounding.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Femtoseconds.
pub type Fs = i64;

pub const FS_PER_PS: Fs = 1_000;
pub const FS_PER_NS: Fs = 1_000_000;
pub const FS_PER_US: Fs = 1_000_000_000;

/// Parts per billion; a rate of exactly 1 is `PPB`.
pub const PPB: i64 = 1_000_000_000;

/// Phase units gained per femtosecond at rate 1.
pub const PHASE_PER_FS: i128 = 1_000_000_000_000_000_000;

/// Phase advance per femtosecond for hardware rate `h_ppb` and mode
/// multiplier `m_ppb`.
pub fn rate(h_ppb: i64, m_ppb: i64) -> i128 {
    h_ppb as i128 * m_ppb as i128
}

pub const fn ps(v: i64) -> Fs {
    v * FS_PER_PS
}

pub const fn ns(v: i64) -> Fs {
    v * FS_PER_NS
}

/// Converts a dimensionless factor to the ppb grid, rounding to nearest.
pub fn to_ppb(x: f64) -> i64 {
    (x * PPB as f64).round() as i64
}

/// Ceiling division for a positive divisor.
pub fn div_ceil_i128(a: i128, b: i128) -> i128 {
    debug_assert!(b > 0);
    let q = a.div_euclid(b);
    if a.rem_euclid(b) == 0 {
        q
    } else {
        q + 1
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Phase(pub i128);

impl Phase {
    pub const ZERO: Phase = Phase(0);

    pub fn from_fs(fs: Fs) -> Phase {
        Phase(fs as i128 * PHASE_PER_FS)
    }

    pub fn from_ps(p: i64) -> Phase {
        Phase::from_fs(ps(p))
    }

    /// Largest whole femtosecond not above this phase.
    pub fn floor_fs(self) -> Fs {
        self.0.div_euclid(PHASE_PER_FS) as Fs
    }

    pub fn as_ps_f64(self) -> f64 {
        self.0 as f64 / (PHASE_PER_FS as f64 * FS_PER_PS as f64)
    }

    pub fn abs(self) -> Phase {
        Phase(self.0.abs())
    }
}

impl std::ops::Add for Phase {
    type Output = Phase;
    fn add(self, o: Phase) -> Phase {
        Phase(self.0 + o.0)
    }
}

impl std::ops::Sub for Phase {
    type Output = Phase;
    fn sub(self, o: Phase) -> Phase {
        Phase(self.0 - o.0)
    }
}

impl std::ops::Neg for Phase {
    type Output = Phase;
    fn neg(self) -> Phase {
        Phase(-self.0)
    }
}

/// Fixed-point decimal in nominal femtoseconds with 18 fractional digits.
impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let a = self.0.unsigned_abs();
        let p = PHASE_PER_FS as u128;
        write!(f, "{}{}.{:018}", sign, a / p, a % p)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid phase literal {0:?}")]
pub struct PhaseParseError(pub String);

impl FromStr for Phase {
    type Err = PhaseParseError;
    fn from_str(s: &str) -> Result<Phase, PhaseParseError> {
        let err = || PhaseParseError(s.to_string());
        let (neg, body) = match s.strip_prefix('-') {
            Some(b) => (true, b),
            None => (false, s),
        };
        let (int, frac) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int.is_empty() || frac.len() > 18 || !int.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        if !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        let i: i128 = int.parse().map_err(|_| err())?;
        let mut fr: i128 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| err())? };
        for _ in frac.len()..18 {
            fr *= 10;
        }
        let v = i
            .checked_mul(PHASE_PER_FS)
            .and_then(|x| x.checked_add(fr))
            .ok_or_else(err)?;
        Ok(Phase(if neg { -v } else { v }))
    }
}

impl Serialize for Phase {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Phase {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Phase, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TimeParseError {
    #[error("time value {0:?} has no unit (expected fs, ps, ns or us)")]
    MissingUnit(String),
    #[error("time value {0:?} is not a number")]
    BadNumber(String),
    #[error("time value {0:?} is not a whole number of femtoseconds")]
    NotIntegral(String),
}

/// Parses `"10ps"`, `"0.5 ps"`, `"1000ns"`, `"775fs"`. Units are mandatory.
pub fn parse_time(s: &str) -> Result<Fs, TimeParseError> {
    let t = s.trim();
    let (num, scale) = if let Some(n) = t.strip_suffix("fs") {
        (n, 1)
    } else if let Some(n) = t.strip_suffix("ps") {
        (n, FS_PER_PS)
    } else if let Some(n) = t.strip_suffix("ns") {
        (n, FS_PER_NS)
    } else if let Some(n) = t.strip_suffix("us") {
        (n, FS_PER_US)
    } else {
        return Err(TimeParseError::MissingUnit(s.to_string()));
    };
    let num = num.trim();
    let (neg, body) = match num.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, num),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    let digits_ok = |x: &str| x.bytes().all(|b| b.is_ascii_digit());
    if int.is_empty() || !digits_ok(int) || !digits_ok(frac) {
        return Err(TimeParseError::BadNumber(s.to_string()));
    }
    let bad = || TimeParseError::BadNumber(s.to_string());
    let mut v: i128 = int.parse::<i128>().map_err(|_| bad())? * scale as i128;
    let mut place = scale as i128;
    for c in frac.bytes() {
        let dgt = (c - b'0') as i128;
        if place % 10 != 0 {
            if dgt != 0 {
                return Err(TimeParseError::NotIntegral(s.to_string()));
            }
            continue;
        }
        place /= 10;
        v += dgt * place;
    }
    let v = if neg { -v } else { v };
    Fs::try_from(v).map_err(|_| bad())
}

/// Formats femtoseconds with the largest unit that keeps it exact.
pub fn format_time(fs: Fs) -> String {
    if fs != 0 && fs % FS_PER_NS == 0 {
        format!("{}ns", fs / FS_PER_NS)
    } else if fs != 0 && fs % FS_PER_PS == 0 {
        format!("{}ps", fs / FS_PER_PS)
    } else {
        format!("{}fs", fs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_units() {
        assert_eq!(parse_time("10ps"), Ok(10_000));
        assert_eq!(parse_time("0.5 ps"), Ok(500));
        assert_eq!(parse_time("1000ns"), Ok(1_000_000_000));
        assert_eq!(parse_time("775fs"), Ok(775));
        assert_eq!(parse_time("-4ps"), Ok(-4_000));
        assert_eq!(parse_time("1.0005ps"), Err(TimeParseError::NotIntegral("1.0005ps".into())));
        assert_eq!(parse_time("1.5000ps"), Ok(1_500));
        assert!(matches!(parse_time("10"), Err(TimeParseError::MissingUnit(_))));
        assert!(matches!(parse_time("x ps"), Err(TimeParseError::BadNumber(_))));
    }

    #[test]
    fn format_round_trips() {
        for v in [0, 1, 999, 1_000, 4_141, 500_000, 50 * FS_PER_NS] {
            assert_eq!(parse_time(&format_time(v)), Ok(v));
        }
    }

    #[test]
    fn phase_decimal_round_trip() {
        for raw in [0i128, 1, -1, PHASE_PER_FS, -PHASE_PER_FS - 7, 123_456_789_012_345_678_901_234] {
            let p = Phase(raw);
            assert_eq!(p.to_string().parse::<Phase>(), Ok(p));
        }
        assert_eq!(Phase::from_fs(-3).to_string(), "-3.000000000000000000");
        assert_eq!("2.5".parse::<Phase>().unwrap(), Phase(PHASE_PER_FS * 5 / 2));
    }

    #[test]
    fn ceil_division() {
        assert_eq!(div_ceil_i128(7, 2), 4);
        assert_eq!(div_ceil_i128(8, 2), 4);
        assert_eq!(div_ceil_i128(-7, 2), -3);
        assert_eq!(div_ceil_i128(0, 5), 0);
    }
}
