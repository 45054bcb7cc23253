//! Calendar arithmetic on Unix timestamps (seconds, UTC).

use core::fmt;
use core::str::FromStr;

use crate::{Error, Result};

pub const SECONDS_PER_HOUR: i64 = 3_600;
pub const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    pub month: u8,
}

impl YearMonth {
    pub fn new(year: i32, month: u8) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::InvalidParameter { name: "month", reason: "must be in 1..=12" });
        }
        Ok(YearMonth { year, month })
    }

    /// Month containing the given instant, after shifting by `offset_secs`.
    pub fn of_timestamp(ts: i64, offset_secs: i64) -> Self {
        let (y, m, _) = civil_from_days(day_index(ts, offset_secs));
        YearMonth { year: y, month: m }
    }

    pub fn days(self) -> u32 {
        match self.month {
            1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
            4 | 6 | 9 | 11 => 30,
            _ if is_leap(self.year) => 29,
            _ => 28,
        }
    }

    pub fn hours(self) -> u32 {
        self.days() * 24
    }

    /// Unix timestamp of the first instant of the month (UTC).
    pub fn start_timestamp(self) -> i64 {
        days_from_civil(self.year, self.month, 1) * SECONDS_PER_DAY
    }

    pub fn succ(self) -> Self {
        if self.month == 12 {
            YearMonth { year: self.year + 1, month: 1 }
        } else {
            YearMonth { year: self.year, month: self.month + 1 }
        }
    }

    /// Months elapsed since January of year 0; handy for seasonal indexing.
    pub fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = Error::InvalidParameter { name: "year-month", reason: "expected YYYY-MM" };
        let (y, m) = s.trim().split_once('-').ok_or(bad.clone())?;
        let year: i32 = y.parse().map_err(|_| bad.clone())?;
        let month: u8 = m.parse().map_err(|_| bad)?;
        YearMonth::new(year, month)
    }
}

pub fn is_leap(year: i32) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

/// Day number (days since 1970-01-01) of an instant shifted by `offset_secs`.
pub fn day_index(ts: i64, offset_secs: i64) -> i64 {
    (ts + offset_secs).div_euclid(SECONDS_PER_DAY)
}

/// Days since 1970-01-01 for a proleptic Gregorian date.
pub fn days_from_civil(year: i32, month: u8, day: u8) -> i64 {
    let y = year as i64 - i64::from(month <= 2);
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let m = month as i64;
    let doy = (153 * (if m > 2 { m - 3 } else { m + 9 }) + 2) / 5 + day as i64 - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

/// Inverse of [`days_from_civil`].
pub fn civil_from_days(days: i64) -> (i32, u8, u8) {
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u8;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u8;
    let y = yoe + era * 400 + i64::from(m <= 2);
    (y as i32, m, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn civil_round_trip() {
        assert_eq!(days_from_civil(1970, 1, 1), 0);
        assert_eq!(days_from_civil(2000, 3, 1), 11_017);
        for d in -800_000..800_000i64 {
            if d % 997 != 0 {
                continue;
            }
            let (y, m, dd) = civil_from_days(d);
            assert_eq!(days_from_civil(y, m, dd), d);
        }
    }

    #[test]
    fn month_lengths_and_parse() {
        assert_eq!(YearMonth::new(2020, 2).unwrap().days(), 29);
        assert_eq!(YearMonth::new(2019, 2).unwrap().days(), 28);
        assert_eq!(YearMonth::new(1900, 2).unwrap().days(), 28);
        let ym: YearMonth = "2019-07".parse().unwrap();
        assert_eq!(ym, YearMonth { year: 2019, month: 7 });
        assert_eq!(alloc::format!("{ym}"), "2019-07");
        assert!("2019-13".parse::<YearMonth>().is_err());
        assert_eq!(YearMonth::new(2019, 12).unwrap().succ(), YearMonth::new(2020, 1).unwrap());
    }

    #[test]
    fn timestamps_to_months() {
        // 2019-03-01T00:00:00Z
        let ts = 1_551_398_400;
        assert_eq!(YearMonth::of_timestamp(ts, 0), YearMonth::new(2019, 3).unwrap());
        assert_eq!(YearMonth::of_timestamp(ts - 1, 0), YearMonth::new(2019, 2).unwrap());
        // five hours west of UTC keeps the instant in February
        assert_eq!(YearMonth::of_timestamp(ts, -5 * 3600), YearMonth::new(2019, 2).unwrap());
        assert_eq!(YearMonth::new(2019, 3).unwrap().start_timestamp(), ts);
    }
}
