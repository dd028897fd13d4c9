//! Exact value types shared across the crate.
//!
//! Money is carried as integer cents and ratios as integer basis points so
//! that every eligibility comparison is reproducible bit for bit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseValueError {
    #[error("invalid money amount {0:?}")]
    Money(String),
    #[error("invalid ratio {0:?}")]
    Ratio(String),
    #[error("invalid date {0:?} (expected YYYY-MM-DD)")]
    Date(String),
    #[error("invalid fraction {0:?} (expected N/D)")]
    Fraction(String),
}

/// Parses a non-exponent decimal string into an integer scaled by
/// `10^places`. Rejects more fractional digits than `places`.
fn parse_fixed(s: &str, places: u32) -> Option<i64> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    if body.is_empty() {
        return None;
    }
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    if frac_part.len() > places as usize {
        return None;
    }
    let scale = 10_i64.pow(places);
    let int_val: i64 = if int_part.is_empty() { 0 } else { int_part.parse().ok()? };
    let mut frac_val: i64 = if frac_part.is_empty() { 0 } else { frac_part.parse().ok()? };
    frac_val *= 10_i64.pow(places - frac_part.len() as u32);
    let v = int_val.checked_mul(scale)?.checked_add(frac_val)?;
    Some(if neg { -v } else { v })
}

/// Money in integer cents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Cents(pub i64);

impl Cents {
    pub const ZERO: Cents = Cents(0);

    pub fn from_dollars(d: i64) -> Cents {
        Cents(d * 100)
    }

    /// Rounds a floating dollar amount to the nearest cent.
    pub fn from_dollars_f64(d: f64) -> Cents {
        Cents((d * 100.0).round() as i64)
    }

    pub fn as_dollars(self) -> f64 {
        self.0 as f64 / 100.0
    }

    pub fn max0(self) -> Cents {
        Cents(self.0.max(0))
    }
}

impl std::ops::Add for Cents {
    type Output = Cents;
    fn add(self, rhs: Cents) -> Cents {
        Cents(self.0 + rhs.0)
    }
}

impl std::ops::Sub for Cents {
    type Output = Cents;
    fn sub(self, rhs: Cents) -> Cents {
        Cents(self.0 - rhs.0)
    }
}

impl std::iter::Sum for Cents {
    fn sum<I: Iterator<Item = Cents>>(iter: I) -> Cents {
        Cents(iter.map(|c| c.0).sum())
    }
}

impl fmt::Display for Cents {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let a = self.0.unsigned_abs();
        write!(f, "{}{}.{:02}", sign, a / 100, a % 100)
    }
}

impl FromStr for Cents {
    type Err = ParseValueError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_fixed(s, 2).map(Cents).ok_or_else(|| ParseValueError::Money(s.to_string()))
    }
}

impl Serialize for Cents {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Cents {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A non-negative ratio in basis points (1.33 is stored as 13300).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Ratio(pub u32);

impl Ratio {
    pub const SCALE: i64 = 10_000;

    pub fn from_bp(bp: u32) -> Ratio {
        Ratio(bp)
    }

    pub fn bp(self) -> i64 {
        self.0 as i64
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / Self::SCALE as f64
    }

    /// `amount < self × base`, evaluated exactly.
    pub fn amount_below(self, amount: Cents, base: Cents) -> bool {
        (amount.0 as i128) * (Self::SCALE as i128) < (self.0 as i128) * (base.0 as i128)
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let int = self.0 / 10_000;
        let frac = self.0 % 10_000;
        if frac == 0 {
            write!(f, "{int}")
        } else {
            let digits = format!("{frac:04}");
            write!(f, "{}.{}", int, digits.trim_end_matches('0'))
        }
    }
}

impl FromStr for Ratio {
    type Err = ParseValueError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match parse_fixed(s, 4) {
            Some(v) if (0..=u32::MAX as i64).contains(&v) => Ok(Ratio(v as u32)),
            _ => Err(ParseValueError::Ratio(s.to_string())),
        }
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Exact rational fraction used for earnings disregards ("one third").
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fraction {
    pub num: u32,
    pub den: u32,
}

impl Fraction {
    pub const ZERO: Fraction = Fraction { num: 0, den: 1 };

    /// `floor(amount × num / den)` for non-negative amounts.
    pub fn of(self, amount: Cents) -> Cents {
        Cents(((amount.0 as i128) * self.num as i128 / self.den as i128) as i64)
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.num == 0 {
            write!(f, "0")
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for Fraction {
    type Err = ParseValueError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseValueError::Fraction(s.to_string());
        let t = s.trim();
        let (n, d) = match t.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (t, "1"),
        };
        let num: u32 = n.parse().map_err(|_| err())?;
        let den: u32 = d.parse().map_err(|_| err())?;
        if den == 0 || num > den {
            return Err(err());
        }
        Ok(Fraction { num, den })
    }
}

/// Calendar date, used for birthdate cutoffs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CalDate {
    pub year: i32,
    pub month: u8,
    pub day: u8,
}

impl fmt::Display for CalDate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}-{:02}", self.year, self.month, self.day)
    }
}

impl FromStr for CalDate {
    type Err = ParseValueError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseValueError::Date(s.to_string());
        let mut it = s.trim().split('-');
        let y: i32 = it.next().ok_or_else(err)?.parse().map_err(|_| err())?;
        let m: u8 = it.next().ok_or_else(err)?.parse().map_err(|_| err())?;
        let d: u8 = it.next().ok_or_else(err)?.parse().map_err(|_| err())?;
        if it.next().is_some() || !(1..=12).contains(&m) || !(1..=31).contains(&d) {
            return Err(err());
        }
        Ok(CalDate { year: y, month: m, day: d })
    }
}

/// A calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    pub month: u8,
}

impl YearMonth {
    pub fn new(year: i32, month: u8) -> YearMonth {
        debug_assert!((1..=12).contains(&month));
        YearMonth { year, month }
    }

    fn index(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    /// Completed years between `birth` and this month, or `None` when the
    /// person is not yet born.
    pub fn age_since(self, birth: YearMonth) -> Option<u32> {
        let months = self.index() - birth.index();
        if months < 0 {
            None
        } else {
            Some((months / 12) as u32)
        }
    }

    /// First day of the month.
    pub fn first_day(self) -> CalDate {
        CalDate { year: self.year, month: self.month, day: 1 }
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

/// Jurisdiction code such as `ST_A` or `CA`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub String);

impl StateId {
    pub fn new(s: impl Into<String>) -> StateId {
        StateId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for StateId {
    fn from(s: &str) -> Self {
        StateId(s.to_string())
    }
}
