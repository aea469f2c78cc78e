//! Calendar periods used to index score panels and macro series.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Quarter {
    pub year: i32,
    pub quarter: u8,
}

impl Quarter {
    pub fn new(year: i32, quarter: u8) -> Result<Self> {
        if !(1..=4).contains(&quarter) {
            return Err(Error::invalid(format!("quarter {quarter} outside 1..=4")));
        }
        Ok(Self { year, quarter })
    }

    /// Quarters since year 0, used for offset arithmetic.
    pub fn index(self) -> i64 {
        i64::from(self.year) * 4 + i64::from(self.quarter) - 1
    }

    pub fn from_index(index: i64) -> Self {
        Self { year: index.div_euclid(4) as i32, quarter: (index.rem_euclid(4) + 1) as u8 }
    }

    pub fn offset(self, by: i64) -> Self {
        Self::from_index(self.index() + by)
    }

    /// Calendar quarter containing an ISO `YYYY-MM-DD` date.
    pub fn of_date(date: &str) -> Result<Self> {
        let (year, month, _) = parse_iso_date(date)?;
        Self::new(year, (month - 1) / 3 + 1)
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year, self.quarter)
    }
}

/// Validates an ISO calendar date and returns `(year, month, day)`.
pub fn parse_iso_date(date: &str) -> Result<(i32, u8, u8)> {
    let bad = || Error::invalid(format!("`{date}` is not an ISO date (YYYY-MM-DD)"));
    let mut parts = date.trim().splitn(3, '-');
    let (y, m, d) = match (parts.next(), parts.next(), parts.next()) {
        (Some(y), Some(m), Some(d)) if y.len() == 4 && m.len() == 2 && d.len() == 2 => (y, m, d),
        _ => return Err(bad()),
    };
    let year: i32 = y.parse().map_err(|_| bad())?;
    let month: u8 = m.parse().map_err(|_| bad())?;
    let day: u8 = d.parse().map_err(|_| bad())?;
    let leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
    let days_in_month = match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if leap => 29,
        2 => 28,
        _ => return Err(bad()),
    };
    if day == 0 || day > days_in_month {
        return Err(bad());
    }
    Ok((year, month, day))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frequency {
    Quarterly,
    Annual,
}

/// A quarter or a calendar year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Period {
    Quarter(Quarter),
    Year(i32),
}

impl Period {
    pub fn frequency(self) -> Frequency {
        match self {
            Period::Quarter(_) => Frequency::Quarterly,
            Period::Year(_) => Frequency::Annual,
        }
    }

    pub fn offset(self, by: i64) -> Self {
        match self {
            Period::Quarter(q) => Period::Quarter(q.offset(by)),
            Period::Year(y) => Period::Year(y + by as i32),
        }
    }

    pub fn year(self) -> i32 {
        match self {
            Period::Quarter(q) => q.year,
            Period::Year(y) => y,
        }
    }

    /// Signed number of periods from `self` to `other`; both must share a frequency.
    pub fn distance(self, other: Period) -> Option<i64> {
        match (self, other) {
            (Period::Quarter(a), Period::Quarter(b)) => Some(b.index() - a.index()),
            (Period::Year(a), Period::Year(b)) => Some(i64::from(b) - i64::from(a)),
            _ => None,
        }
    }
}

impl From<Quarter> for Period {
    fn from(q: Quarter) -> Self {
        Period::Quarter(q)
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Period::Quarter(q) => q.fmt(f),
            Period::Year(y) => write!(f, "{y}"),
        }
    }
}

impl FromStr for Period {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::invalid(format!("`{s}` is not a period (YYYYQn or YYYY)"));
        if let Some((y, q)) = s.split_once(['Q', 'q']) {
            let year: i32 = y.parse().map_err(|_| bad())?;
            let quarter: u8 = q.parse().map_err(|_| bad())?;
            Ok(Period::Quarter(Quarter::new(year, quarter).map_err(|_| bad())?))
        } else {
            s.parse().map(Period::Year).map_err(|_| bad())
        }
    }
}

impl Serialize for Period {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Period {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
