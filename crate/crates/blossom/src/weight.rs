//! Weights measured in half-integer units.
//!
//! Dual adjustments routinely land on odd multiples of 1/2 even when every
//! input weight is a whole number, so all arithmetic in this crate is done on
//! an integer count of half-units. This keeps every comparison exact; there
//! is no floating point anywhere in the solver.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

/// An exact weight, stored as a count of half-units.
///
/// `Weight::from_units(3)` and `"3.5".parse::<Weight>()` are 6 and 7
/// half-units respectively. Serializes as the raw half-unit integer.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Weight(i64);

impl Weight {
    pub const ZERO: Weight = Weight(0);

    /// Builds a weight from a whole number of units.
    pub fn from_units(units: i64) -> Weight {
        Weight(units * 2)
    }

    /// Builds a weight from a raw half-unit count.
    pub fn from_half_units(half_units: i64) -> Weight {
        Weight(half_units)
    }

    /// The raw half-unit count.
    pub fn half_units(self) -> i64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    /// True when the weight is an odd number of half-units (a ".5" value).
    pub fn is_odd_half(self) -> bool {
        self.0 % 2 != 0
    }

    /// Exact half of this weight.
    ///
    /// Panics when the half-unit count is odd: the serial solver only ever
    /// halves quantities that are provably even, so an odd operand is a
    /// logic error, not an input condition.
    pub fn halve(self) -> Weight {
        assert!(
            self.0 % 2 == 0,
            "attempted to halve {} half-units exactly",
            self.0
        );
        Weight(self.0 / 2)
    }

    /// Half of this weight, rounded toward negative infinity.
    ///
    /// Current-state slacks between jointly moving duals are always even,
    /// but a message answered against a newer state than it was built from
    /// can present an odd one. Rounding down keeps such a stale cap safe
    /// (never overshoots, never flips sign) until it is discarded.
    pub fn halve_down(self) -> Weight {
        Weight(self.0.div_euclid(2))
    }

    pub fn double(self) -> Weight {
        Weight(self.0 * 2)
    }
}

impl Add for Weight {
    type Output = Weight;
    fn add(self, rhs: Weight) -> Weight {
        Weight(self.0 + rhs.0)
    }
}

impl Sub for Weight {
    type Output = Weight;
    fn sub(self, rhs: Weight) -> Weight {
        Weight(self.0 - rhs.0)
    }
}

impl Neg for Weight {
    type Output = Weight;
    fn neg(self) -> Weight {
        Weight(-self.0)
    }
}

impl AddAssign for Weight {
    fn add_assign(&mut self, rhs: Weight) {
        self.0 += rhs.0;
    }
}

impl SubAssign for Weight {
    fn sub_assign(&mut self, rhs: Weight) {
        self.0 -= rhs.0;
    }
}

impl Sum for Weight {
    fn sum<I: Iterator<Item = Weight>>(iter: I) -> Weight {
        Weight(iter.map(|w| w.0).sum())
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        if abs % 2 == 0 {
            write!(f, "{}{}", sign, abs / 2)
        } else {
            write!(f, "{}{}.5", sign, abs / 2)
        }
    }
}

// Weights read better in debug dumps as "3.5" than as a tuple struct.
impl fmt::Debug for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Error produced when a textual weight is malformed.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid weight '{0}': expected an integer or a .5 fraction")]
pub struct WeightParseError(pub String);

impl FromStr for Weight {
    type Err = WeightParseError;

    /// Parses "3", "-3", "3.5", "3.0". Only .0 and .5 fractions are
    /// representable, anything else is rejected.
    fn from_str(s: &str) -> Result<Weight, WeightParseError> {
        let bad = || WeightParseError(s.to_string());
        let (sign, body) = match s.strip_prefix('-') {
            Some(rest) => (-1i64, rest),
            None => (1i64, s),
        };
        let (whole, frac) = match body.split_once('.') {
            Some((w, f)) => (w, Some(f)),
            None => (body, None),
        };
        if whole.is_empty() || !whole.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let whole: i64 = whole.parse().map_err(|_| bad())?;
        let halves = match frac {
            None | Some("0") => 0,
            Some("5") => 1,
            Some(_) => return Err(bad()),
        };
        Ok(Weight(sign * (whole * 2 + halves)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn display_whole_and_half() {
        assert_eq!(Weight::from_units(3).to_string(), "3");
        assert_eq!(Weight::from_half_units(7).to_string(), "3.5");
        assert_eq!(Weight::from_half_units(-7).to_string(), "-3.5");
        assert_eq!(Weight::ZERO.to_string(), "0");
        assert_eq!(Weight::from_half_units(1).to_string(), "0.5");
        assert_eq!(Weight::from_half_units(-1).to_string(), "-0.5");
    }

    #[test]
    fn parse_accepts_integers_and_halves() {
        assert_eq!("3".parse::<Weight>().unwrap(), Weight::from_units(3));
        assert_eq!("3.5".parse::<Weight>().unwrap(), Weight::from_half_units(7));
        assert_eq!("3.0".parse::<Weight>().unwrap(), Weight::from_units(3));
        assert_eq!("0".parse::<Weight>().unwrap(), Weight::ZERO);
        assert_eq!(
            "-2.5".parse::<Weight>().unwrap(),
            Weight::from_half_units(-5)
        );
    }

    #[test]
    fn parse_rejects_junk() {
        for s in ["", "-", "3.25", "3.", ".5", "1e3", "a", "3 ", "--3", "3.50"] {
            assert!(s.parse::<Weight>().is_err(), "accepted {s:?}");
        }
    }

    #[test]
    fn halve_splits_even_values() {
        assert_eq!(Weight::from_units(3).halve(), Weight::from_half_units(3));
        assert_eq!(Weight::from_units(-4).halve(), Weight::from_units(-2));
    }

    #[test]
    #[should_panic(expected = "halve")]
    fn halve_panics_on_odd_half_units() {
        let _ = Weight::from_half_units(3).halve();
    }

    #[test]
    fn arithmetic() {
        let a = Weight::from_units(2);
        let b = Weight::from_half_units(1);
        assert_eq!((a + b).to_string(), "2.5");
        assert_eq!((a - b).to_string(), "1.5");
        assert_eq!((-b).to_string(), "-0.5");
        assert_eq!(vec![a, b, b].into_iter().sum::<Weight>().to_string(), "3");
    }

    #[test]
    fn serde_uses_raw_half_units() {
        let w = Weight::from_half_units(7);
        assert_eq!(serde_json::to_string(&w).unwrap(), "7");
        assert_eq!(serde_json::from_str::<Weight>("7").unwrap(), w);
    }

    proptest! {
        #[test]
        fn display_parse_round_trip(h in -100_000i64..100_000) {
            let w = Weight::from_half_units(h);
            prop_assert_eq!(w.to_string().parse::<Weight>().unwrap(), w);
        }
    }
}
