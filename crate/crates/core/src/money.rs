//! Exact USD amounts stored as integer cents.
//!
//! Prices and profits round-trip through text without floating-point drift;
//! model code converts to `f64` dollars at the boundary.

use std::fmt;
use std::ops::{Add, AddAssign, Neg, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A USD amount in integer cents. Negative values are valid (profits can be
/// losses); parsing of sale prices rejects negatives at the call site.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Usd(i64);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UsdParseError {
    #[error("empty amount")]
    Empty,
    #[error("invalid character in amount {0:?}")]
    InvalidChar(String),
    #[error("more than 2 fraction digits in {0:?}")]
    TooManyFractionDigits(String),
    #[error("amount out of range: {0:?}")]
    OutOfRange(String),
}

impl Usd {
    pub const ZERO: Usd = Usd(0);

    pub fn from_cents(cents: i64) -> Usd {
        Usd(cents)
    }

    /// Whole dollars, exact.
    pub fn from_dollars_i64(dollars: i64) -> Usd {
        Usd(dollars * 100)
    }

    /// Rounds to the nearest cent (ties away from zero).
    pub fn from_dollars_f64(dollars: f64) -> Usd {
        Usd((dollars * 100.0).round() as i64)
    }

    pub fn cents(self) -> i64 {
        self.0
    }

    pub fn to_dollars(self) -> f64 {
        self.0 as f64 / 100.0
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    /// Parses a decimal amount with an optional sign and up to two fraction
    /// digits, e.g. `"45"`, `"45.5"`, `"-3.07"`.
    pub fn parse(s: &str) -> Result<Usd, UsdParseError> {
        let t = s.trim();
        if t.is_empty() {
            return Err(UsdParseError::Empty);
        }
        let (sign, rest) = match t.strip_prefix('-') {
            Some(r) => (-1i64, r),
            None => (1i64, t.strip_prefix('+').unwrap_or(t)),
        };
        let (int_part, frac_part) = match rest.split_once('.') {
            Some((i, f)) => (i, f),
            None => (rest, ""),
        };
        if int_part.is_empty() || !int_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(UsdParseError::InvalidChar(s.to_string()));
        }
        if frac_part.len() > 2 {
            return Err(UsdParseError::TooManyFractionDigits(s.to_string()));
        }
        if !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(UsdParseError::InvalidChar(s.to_string()));
        }
        if rest.contains('.') && frac_part.is_empty() {
            return Err(UsdParseError::InvalidChar(s.to_string()));
        }
        let dollars: i64 = int_part
            .parse()
            .map_err(|_| UsdParseError::OutOfRange(s.to_string()))?;
        let mut frac: i64 = if frac_part.is_empty() {
            0
        } else {
            frac_part
                .parse()
                .map_err(|_| UsdParseError::OutOfRange(s.to_string()))?
        };
        if frac_part.len() == 1 {
            frac *= 10;
        }
        let cents = dollars
            .checked_mul(100)
            .and_then(|c| c.checked_add(frac))
            .ok_or_else(|| UsdParseError::OutOfRange(s.to_string()))?;
        Ok(Usd(sign * cents))
    }
}

impl fmt::Display for Usd {
    /// Canonical form: always two fraction digits, e.g. `45.00`, `-3.07`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cents = self.0 as i128;
        let sign = if cents < 0 { "-" } else { "" };
        let abs = cents.unsigned_abs();
        write!(f, "{}{}.{:02}", sign, abs / 100, abs % 100)
    }
}

impl FromStr for Usd {
    type Err = UsdParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Usd::parse(s)
    }
}

impl Add for Usd {
    type Output = Usd;
    fn add(self, rhs: Usd) -> Usd {
        Usd(self.0 + rhs.0)
    }
}

impl AddAssign for Usd {
    fn add_assign(&mut self, rhs: Usd) {
        self.0 += rhs.0;
    }
}

impl Sub for Usd {
    type Output = Usd;
    fn sub(self, rhs: Usd) -> Usd {
        Usd(self.0 - rhs.0)
    }
}

impl Neg for Usd {
    type Output = Usd;
    fn neg(self) -> Usd {
        Usd(-self.0)
    }
}
