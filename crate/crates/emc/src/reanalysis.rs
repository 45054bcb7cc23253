//! Hourly reanalysis inputs: a directory of ASCII grids with a JSON index,
//! or a long-format CSV of pre-sampled cell series.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use emc_core::climate::{
    degree_days, monthly_aggregate, sample_cell, DegreeDayConfig, HourlySeries, MonthlyClimate, Reducer,
};
use emc_core::geo::{LocalProjection, Point, Polygon};
use emc_core::raster::{CrsTag, RasterGrid};
use emc_core::time::YearMonth;
use serde::Deserialize;

use crate::asc::load_grid;
use crate::error::{Error, Result};
use crate::manifest::parse_timestamp;

pub const TEMPERATURE: &str = "TMP";
pub const WIND: &str = "WIND";
pub const CLOUD_COVER: &str = "TCDC";
pub const PRECIPITATION: &str = "ACPC01";
pub const VARIABLES: [&str; 4] = [TEMPERATURE, WIND, CLOUD_COVER, PRECIPITATION];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexEntry {
    pub variable: String,
    pub timestamp: String,
    pub path: PathBuf,
}

/// JSON index of a grid directory. With no `files`, the directory is
/// scanned for `<variable>_<ISO8601-hour>.asc`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReanalysisIndex {
    #[serde(default)]
    pub crs: Option<String>,
    #[serde(default)]
    pub projection_origin: Option<[f64; 2]>,
    #[serde(default)]
    pub files: Vec<IndexEntry>,
}

#[derive(Debug, Clone)]
pub enum Reanalysis {
    Grids {
        stacks: BTreeMap<String, Vec<(i64, RasterGrid)>>,
        frame: Option<LocalProjection>,
    },
    Cells {
        /// Cell centers with their per-variable series, in (x, y) order.
        cells: Vec<(Point, BTreeMap<String, HourlySeries>)>,
    },
}

/// Splits `TMP_2019-01-01T05.asc` into ("TMP", timestamp).
fn parse_grid_name(name: &str) -> Option<(String, i64)> {
    let stem = name.strip_suffix(".asc")?;
    let (var, ts) = stem.split_once('_')?;
    Some((var.to_string(), parse_timestamp(ts)?))
}

impl Reanalysis {
    pub fn load_index(path: &Path) -> Result<Self> {
        let text = fs::read(path).map_err(|e| Error::io(path, e))?;
        let index: ReanalysisIndex = serde_json::from_slice(&text).map_err(|e| Error::parse(path, e))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let crs = match &index.crs {
            None => CrsTag::Wgs84,
            Some(n) => CrsTag::from_name(n)?,
        };
        let frame = match (crs, index.projection_origin) {
            (CrsTag::Wgs84, _) => None,
            (CrsTag::LocalMetric, Some([lon, lat])) => Some(LocalProjection::new(Point::new(lon, lat))?),
            (CrsTag::LocalMetric, None) => {
                return Err(Error::parse(path, "local-metric reanalysis needs `projection_origin`"))
            }
        };
        let mut entries: Vec<(String, i64, PathBuf)> = Vec::new();
        if index.files.is_empty() {
            let listing = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
            for item in listing {
                let item = item.map_err(|e| Error::io(dir, e))?;
                let name = item.file_name().to_string_lossy().into_owned();
                if let Some((var, ts)) = parse_grid_name(&name) {
                    entries.push((var, ts, item.path()));
                }
            }
        } else {
            for e in index.files {
                let ts = parse_timestamp(&e.timestamp)
                    .ok_or_else(|| Error::parse(path, format!("bad timestamp `{}`", e.timestamp)))?;
                entries.push((e.variable, ts, dir.join(e.path)));
            }
        }
        entries.sort();
        let mut stacks: BTreeMap<String, Vec<(i64, RasterGrid)>> = BTreeMap::new();
        for (var, ts, p) in entries {
            let grid = load_grid(&p, crs)?;
            let stack = stacks.entry(var.clone()).or_default();
            if let Some((_, first)) = stack.first() {
                if !first.geometry.aligned_with(&grid.geometry) {
                    return Err(Error::parse(&p, "grid not aligned with the rest of its stack"));
                }
            }
            if stack.last().is_some_and(|(t, _)| *t == ts) {
                return Err(Error::parse(&p, format!("duplicate {var} grid for the same hour")));
            }
            stack.push((ts, grid));
        }
        Ok(Reanalysis::Grids { stacks, frame })
    }

    /// Reads `timestamp,variable,cell_x,cell_y,value`; an empty value is a
    /// missing hour.
    pub fn load_table(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
        let headers = reader.headers().map_err(|e| Error::parse(path, e))?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::parse(path, format!("missing column `{name}`")))
        };
        let (ct, cv, cx, cy, cval) =
            (col("timestamp")?, col("variable")?, col("cell_x")?, col("cell_y")?, col("value")?);
        type Key = (u64, u64);
        type Column = Vec<(i64, Option<f64>)>;
        let mut raw: BTreeMap<Key, BTreeMap<String, Column>> = BTreeMap::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse(path, e))?;
            let bad = |what: &str| Error::parse(path, format!("row {}: bad {what}", line + 2));
            let ts = parse_timestamp(rec[ct].trim()).ok_or_else(|| bad("timestamp"))?;
            let x: f64 = rec[cx].trim().parse().map_err(|_| bad("cell_x"))?;
            let y: f64 = rec[cy].trim().parse().map_err(|_| bad("cell_y"))?;
            let value = match rec[cval].trim() {
                "" => None,
                v => Some(v.parse::<f64>().map_err(|_| bad("value"))?),
            };
            raw.entry((order_bits(x), order_bits(y)))
                .or_default()
                .entry(rec[cv].trim().to_string())
                .or_default()
                .push((ts, value));
        }
        let mut cells = Vec::with_capacity(raw.len());
        for ((xb, yb), vars) in raw {
            let center = Point::new(from_order_bits(xb), from_order_bits(yb));
            let mut series = BTreeMap::new();
            for (var, mut obs) in vars {
                obs.sort_by_key(|o| o.0);
                let (ts, vals) = obs.into_iter().unzip();
                let cell_ref = format!("{},{}", center.x, center.y);
                let s = HourlySeries::new(var.clone(), cell_ref.clone(), ts, vals)
                    .map_err(|e| Error::parse(path, format!("{var} at cell {cell_ref}: {e}")))?;
                series.insert(var, s);
            }
            cells.push((center, series));
        }
        Ok(Reanalysis::Cells { cells })
    }

    /// Hourly series per variable for one capture region (lon/lat).
    pub fn sample(
        &self,
        region: &Polygon,
        projection: &LocalProjection,
    ) -> Result<BTreeMap<String, HourlySeries>> {
        match self {
            Reanalysis::Grids { stacks, frame } => {
                let region = match frame {
                    None => region.clone(),
                    Some(f) => f.project_polygon(region)?,
                };
                let mut out = BTreeMap::new();
                for (var, stack) in stacks {
                    let refs: Vec<(i64, &RasterGrid)> = stack.iter().map(|(t, g)| (*t, g)).collect();
                    match sample_cell(var, &refs, &region) {
                        Ok(s) => {
                            out.insert(var.clone(), s);
                        }
                        // A region off the grid has no data for this variable.
                        Err(emc_core::Error::OutOfExtent) => {}
                        Err(e) => return Err(Error::from(e).stage("reanalysis")),
                    }
                }
                Ok(out)
            }
            Reanalysis::Cells { cells } => {
                let mut best: Option<(f64, &BTreeMap<String, HourlySeries>)> = None;
                for (center, series) in cells {
                    let p = projection.project(*center);
                    let d = p.x * p.x + p.y * p.y;
                    if best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, series));
                    }
                }
                Ok(best.map(|(_, s)| s.clone()).unwrap_or_default())
            }
        }
    }
}

// Total order on f64 bit patterns so cell keys sort numerically.
fn order_bits(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

fn from_order_bits(b: u64) -> f64 {
    if b >> 63 == 1 {
        f64::from_bits(b & !(1 << 63))
    } else {
        f64::from_bits(!b)
    }
}

/// Monthly climate features for the requested months from hourly series.
pub fn monthly_climate(
    series: &BTreeMap<String, HourlySeries>,
    months: &[YearMonth],
    dd: &DegreeDayConfig,
) -> BTreeMap<YearMonth, MonthlyClimate> {
    let split: BTreeMap<&str, BTreeMap<YearMonth, HourlySeries>> =
        series.iter().map(|(var, s)| (var.as_str(), s.split_by_month(dd.utc_offset_secs))).collect();
    let mut out = BTreeMap::new();
    for &month in months {
        let get = |var: &str| split.get(var).and_then(|m| m.get(&month));
        let mut mc = MonthlyClimate::default();
        if let Some(t) = get(TEMPERATURE) {
            if let Ok(d) = degree_days(t, dd) {
                mc.hdd = Some(d.hdd);
                mc.cdd = Some(d.cdd);
            }
        }
        let reduce = |var: &str| {
            let reducer = Reducer::for_variable(var).expect("known variable");
            get(var).and_then(|s| monthly_aggregate(s, reducer, month.hours() as usize).value)
        };
        mc.wind = reduce(WIND);
        mc.tcdc = reduce(CLOUD_COVER);
        mc.acpc01 = reduce(PRECIPITATION);
        out.insert(month, mc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_names() {
        assert_eq!(parse_grid_name("TMP_2019-01-01T05.asc"), Some(("TMP".into(), 1_546_318_800)));
        assert_eq!(parse_grid_name("ACPC01_2019-01-01T00:00:00Z.asc").unwrap().0, "ACPC01");
        assert_eq!(parse_grid_name("index.json"), None);
    }

    #[test]
    fn order_bits_round_trip_and_sort() {
        let xs = [-3.5, -0.0, 0.0, 1e-300, 2.0, 40.7];
        for w in xs.windows(2) {
            assert!(order_bits(w[0]) <= order_bits(w[1]));
        }
        for x in xs {
            assert_eq!(from_order_bits(order_bits(x)).to_bits(), x.to_bits());
        }
    }

    #[test]
    fn nearest_cell_and_monthly_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let mut text = String::from("timestamp,variable,cell_x,cell_y,value\n");
        for h in 0..48 {
            let ts = format!("2019-01-{:02}T{:02}:00:00Z", 1 + h / 24, h % 24);
            text += &format!("{ts},TMP,-74.0,40.7,17.3\n{ts},TMP,-73.9,40.7,30\n");
            text += &format!("{ts},WIND,-74.0,40.7,{}\n", if h % 2 == 0 { "3" } else { "" });
            text += &format!("{ts},ACPC01,-74.0,40.7,0.5\n");
        }
        fs::write(&path, text).unwrap();
        let r = Reanalysis::load_table(&path).unwrap();
        let proj = LocalProjection::new(Point::new(-73.99, 40.7)).unwrap();
        let s = r
            .sample(
                &Polygon::new(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)])
                    .unwrap(),
                &proj,
            )
            .unwrap();
        assert_eq!(s[TEMPERATURE].values()[0], Some(17.3));
        let jan = YearMonth::new(2019, 1).unwrap();
        let m = monthly_climate(&s, &[jan], &DegreeDayConfig::default())[&jan];
        assert!((m.hdd.unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(m.cdd, Some(0.0));
        assert_eq!(m.wind, Some(3.0));
        assert_eq!(m.acpc01, Some(24.0));
        assert_eq!(m.tcdc, None);
    }
}
