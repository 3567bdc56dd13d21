//! Exact rational compression ratios.
//!
//! The candidate set is small and made of simple fractions (`1/48`, `7/48`,
//! ...), so ratios are stored exactly and only converted to `f64` at the
//! point of use.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RatioParseError {
    #[error("malformed compression ratio `{0}` (expected `num/den`)")]
    Malformed(String),
    #[error("compression ratio `{0}` must lie in (0, 1]")]
    OutOfRange(String),
}

/// Fraction of transmitted channel symbols to source symbols, in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CompressionRatio {
    num: u32,
    den: u32,
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl CompressionRatio {
    pub fn new(num: u32, den: u32) -> Result<Self, RatioParseError> {
        if den == 0 || num == 0 || num > den {
            return Err(RatioParseError::OutOfRange(format!("{num}/{den}")));
        }
        let g = gcd(num, den);
        Ok(Self {
            num: num / g,
            den: den / g,
        })
    }

    pub fn numerator(self) -> u32 {
        self.num
    }

    pub fn denominator(self) -> u32 {
        self.den
    }

    pub fn value(self) -> f64 {
        f64::from(self.num) / f64::from(self.den)
    }

    /// The eight ratios used in the reference simulation setup, ascending.
    pub fn default_set() -> Vec<CompressionRatio> {
        [
            (1, 48),
            (1, 24),
            (1, 16),
            (1, 12),
            (5, 48),
            (1, 8),
            (7, 48),
            (1, 6),
        ]
        .into_iter()
        .map(|(n, d)| CompressionRatio::new(n, d).expect("static ratio"))
        .collect()
    }
}

impl Ord for CompressionRatio {
    fn cmp(&self, other: &Self) -> Ordering {
        let lhs = u64::from(self.num) * u64::from(other.den);
        let rhs = u64::from(other.num) * u64::from(self.den);
        lhs.cmp(&rhs)
    }
}

impl PartialOrd for CompressionRatio {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for CompressionRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for CompressionRatio {
    type Err = RatioParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (num, den) = match s.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (s, "1"),
        };
        let num: u32 = num
            .parse()
            .map_err(|_| RatioParseError::Malformed(s.to_string()))?;
        let den: u32 = den
            .parse()
            .map_err(|_| RatioParseError::Malformed(s.to_string()))?;
        CompressionRatio::new(num, den).map_err(|_| RatioParseError::OutOfRange(s.to_string()))
    }
}

impl Serialize for CompressionRatio {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CompressionRatio {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
