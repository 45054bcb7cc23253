//! Monthly climate features from hourly reanalysis series: heating and
//! cooling degree days plus per-variable monthly reductions.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::geo::Polygon;
use crate::raster::{RasterGrid, ZonalWeights};
use crate::time::{day_index, YearMonth, SECONDS_PER_HOUR};
use crate::{Error, Result};

/// 65 °F.
pub const DEFAULT_DEGREE_DAY_BASE_C: f64 = 18.3;
pub const DEFAULT_MIN_VALID_HOURS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct HourlySeries {
    pub variable: String,
    pub cell_ref: String,
    timestamps: Vec<i64>,
    values: Vec<Option<f64>>,
}

impl HourlySeries {
    /// Timestamps must be whole hours and strictly increasing; gaps are allowed.
    pub fn new(
        variable: String,
        cell_ref: String,
        timestamps: Vec<i64>,
        values: Vec<Option<f64>>,
    ) -> Result<Self> {
        if timestamps.len() != values.len() {
            return Err(Error::DimensionMismatch { expected: timestamps.len(), found: values.len() });
        }
        if timestamps.iter().any(|t| t.rem_euclid(SECONDS_PER_HOUR) != 0) {
            return Err(Error::InvalidParameter { name: "timestamps", reason: "must fall on whole hours" });
        }
        if timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter {
                name: "timestamps",
                reason: "must be strictly increasing",
            });
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "hourly series" });
        }
        Ok(HourlySeries { variable, cell_ref, timestamps, values })
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, Option<f64>)> + '_ {
        self.timestamps.iter().copied().zip(self.values.iter().copied())
    }

    /// Hours absent between the first and last timestamp.
    pub fn gap_hours(&self) -> usize {
        self.timestamps.windows(2).map(|w| ((w[1] - w[0]) / SECONDS_PER_HOUR - 1) as usize).sum()
    }

    /// Splits into per-month series (month boundaries shifted by `offset_secs`).
    pub fn split_by_month(&self, offset_secs: i64) -> BTreeMap<YearMonth, HourlySeries> {
        let mut out: BTreeMap<YearMonth, HourlySeries> = BTreeMap::new();
        for (t, v) in self.iter() {
            let m = YearMonth::of_timestamp(t, offset_secs);
            let entry = out.entry(m).or_insert_with(|| HourlySeries {
                variable: self.variable.clone(),
                cell_ref: self.cell_ref.clone(),
                timestamps: Vec::new(),
                values: Vec::new(),
            });
            entry.timestamps.push(t);
            entry.values.push(v);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeDayConfig {
    pub base_c: f64,
    /// Days with fewer valid hours are excluded from the sums.
    pub min_valid_hours: usize,
    /// Offset added to UTC before grouping hours into days.
    pub utc_offset_secs: i64,
    /// Report the mean per valid day instead of the monthly sum.
    pub per_day: bool,
}

impl Default for DegreeDayConfig {
    fn default() -> Self {
        DegreeDayConfig {
            base_c: DEFAULT_DEGREE_DAY_BASE_C,
            min_valid_hours: DEFAULT_MIN_VALID_HOURS,
            utc_offset_secs: 0,
            per_day: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeDays {
    pub hdd: f64,
    pub cdd: f64,
    pub days_used: usize,
    pub days_excluded: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissingReason {
    /// No hourly values at all.
    NoData,
    /// Every day fell below the valid-hour threshold.
    NoValidDays,
}

/// Daily-mean degree days: `hdd = Σ max(0, base − T̄_d)`, `cdd = Σ max(0, T̄_d − base)`.
pub fn degree_days(
    temps: &HourlySeries,
    config: &DegreeDayConfig,
) -> core::result::Result<DegreeDays, MissingReason> {
    // (sum of deviations from base, valid count) per day
    let mut days: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    for (t, v) in temps.iter() {
        let entry = days.entry(day_index(t, config.utc_offset_secs)).or_insert((0.0, 0));
        if let Some(v) = v {
            entry.0 += v - config.base_c;
            entry.1 += 1;
        }
    }
    if days.values().all(|&(_, n)| n == 0) {
        return Err(MissingReason::NoData);
    }
    let (mut hdd, mut cdd) = (0.0, 0.0);
    let (mut used, mut excluded) = (0usize, 0usize);
    for &(sum, n) in days.values() {
        if n < config.min_valid_hours.max(1) {
            excluded += 1;
            continue;
        }
        let excess = sum / n as f64;
        hdd += (-excess).max(0.0);
        cdd += excess.max(0.0);
        used += 1;
    }
    if used == 0 {
        return Err(MissingReason::NoValidDays);
    }
    if config.per_day {
        hdd /= used as f64;
        cdd /= used as f64;
    }
    Ok(DegreeDays { hdd, cdd, days_used: used, days_excluded: excluded })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reducer {
    Mean,
    Sum,
}

impl Reducer {
    /// Fixed reducer per climate variable: wind and cloud cover average,
    /// precipitation accumulates.
    pub fn for_variable(name: &str) -> Option<Reducer> {
        match name {
            "WIND" | "TCDC" => Some(Reducer::Mean),
            "ACPC01" => Some(Reducer::Sum),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonthlyValue {
    pub value: Option<f64>,
    /// Valid hours over expected hours.
    pub coverage: f64,
}

/// Reduces the valid hours of a series. `expected_hours` is the number of
/// hours the period should contain (for a calendar month, `YearMonth::hours`).
pub fn monthly_aggregate(series: &HourlySeries, reducer: Reducer, expected_hours: usize) -> MonthlyValue {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in series.values().iter().flatten() {
        sum += v;
        n += 1;
    }
    let coverage = if expected_hours > 0 { n as f64 / expected_hours as f64 } else { 0.0 };
    let value = match (n, reducer) {
        (0, _) => None,
        (_, Reducer::Mean) => Some(sum / n as f64),
        (_, Reducer::Sum) => Some(sum),
    };
    MonthlyValue { value, coverage }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MonthlyClimate {
    pub hdd: Option<f64>,
    pub cdd: Option<f64>,
    pub wind: Option<f64>,
    pub tcdc: Option<f64>,
    pub acpc01: Option<f64>,
}

/// Zonal mean of each grid in a time stack over a region. Every grid must
/// share the first grid's geometry; hours with no valid coverage are kept
/// as missing values.
pub fn sample_cell(variable: &str, stack: &[(i64, &RasterGrid)], region: &Polygon) -> Result<HourlySeries> {
    let Some((_, first)) = stack.first() else {
        return HourlySeries::new(variable.into(), String::new(), Vec::new(), Vec::new());
    };
    let weights = ZonalWeights::new(&first.geometry, region)?;
    let mut timestamps = Vec::with_capacity(stack.len());
    let mut values = Vec::with_capacity(stack.len());
    for (t, grid) in stack {
        timestamps.push(*t);
        values.push(weights.reduce(grid)?.value);
    }
    let cell_ref = match weights.cells() {
        [(i, _)] => alloc::format!("cell:{i}"),
        cells => alloc::format!("zonal:{}-cells", cells.len()),
    };
    HourlySeries::new(variable.into(), cell_ref, timestamps, values)
}
