//! Exact dyadic rationals `num / 2^log2_den`, kept reduced.

use std::cmp::Ordering;
use std::ops::{Add, Mul, Neg, Sub};
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dyadic {
    pub num: i64,
    pub log2_den: u32,
}

impl Dyadic {
    pub const ZERO: Dyadic = Dyadic { num: 0, log2_den: 0 };
    pub const ONE: Dyadic = Dyadic { num: 1, log2_den: 0 };

    pub fn new(num: i64, log2_den: u32) -> Self {
        Self { num, log2_den }.reduced()
    }

    /// `2^{-e}`.
    pub fn pow2_neg(e: u32) -> Self {
        Self { num: 1, log2_den: e }
    }

    fn reduced(mut self) -> Self {
        if self.num == 0 {
            self.log2_den = 0;
            return self;
        }
        let tz = self.num.trailing_zeros().min(self.log2_den);
        self.num >>= tz;
        self.log2_den -= tz;
        self
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / 2f64.powi(self.log2_den as i32)
    }

    pub fn is_zero(self) -> bool {
        self.num == 0
    }

    /// `num · 2^{shift}` as a 128-bit integer, for exact comparison.
    fn scaled(self, den: u32) -> i128 {
        (self.num as i128) << (den - self.log2_den)
    }

    /// `self^{2^e}`, exact. Panics on overflow of the 64-bit numerator.
    pub fn pow2_power(self, e: u32) -> Self {
        (0..e).fold(self, |acc, _| acc * acc)
    }
}

impl Add for Dyadic {
    type Output = Self;

    fn add(self, other: Self) -> Self {
        let den = self.log2_den.max(other.log2_den);
        let s = self.scaled(den) + other.scaled(den);
        Self::new(i64::try_from(s).expect("dyadic overflow"), den)
    }
}

impl Neg for Dyadic {
    type Output = Self;

    fn neg(self) -> Self {
        Self { num: -self.num, log2_den: self.log2_den }
    }
}

impl Sub for Dyadic {
    type Output = Self;

    fn sub(self, other: Self) -> Self {
        self + -other
    }
}

impl Mul for Dyadic {
    type Output = Self;

    fn mul(self, other: Self) -> Self {
        let num = (self.num as i128) * (other.num as i128);
        Self::new(i64::try_from(num).expect("dyadic overflow"), self.log2_den + other.log2_den)
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let den = self.log2_den.max(other.log2_den);
        self.scaled(den).cmp(&other.scaled(den))
    }
}

impl fmt::Debug for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/2^{}", self.num, self.log2_den)
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduce_and_compare() {
        assert_eq!(Dyadic::new(4, 3), Dyadic::new(1, 1));
        assert_eq!(Dyadic::new(0, 9), Dyadic::ZERO);
        assert!(Dyadic::new(1, 3) < Dyadic::new(1, 2));
        assert!(Dyadic::new(-1, 0) < Dyadic::ZERO);
        assert_eq!(Dyadic::new(1, 2) + Dyadic::new(1, 2), Dyadic::new(1, 1));
        assert_eq!(Dyadic::new(3, 2) * Dyadic::new(1, 1), Dyadic::new(3, 3));
        assert_eq!(Dyadic::new(1, 1).pow2_power(3), Dyadic::pow2_neg(8));
    }
}
