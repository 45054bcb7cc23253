//! `map`: join per-building assignments or deviations to footprints as GeoJSON.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use emc_core::dataset::{BuildingKey, KeyNormalization};
use emc_core::geo::Polygon;
use emc_core::time::YearMonth;
use serde_json::{json, Map, Value};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::geojson::{feature, feature_collection, parse_footprints, polygon_geometry};
use crate::report::{Recorder, RunReport};

pub const MAP_GEOJSON: &str = "map.geojson";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonthSelection {
    All,
    Month(YearMonth),
}

impl FromStr for MonthSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(MonthSelection::All);
        }
        s.parse()
            .map(MonthSelection::Month)
            .map_err(|_| Error::config(format!("month must be YYYY-MM or `all`, got `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapValue {
    Label,
    Deviation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapOutcome {
    pub geojson: Value,
    pub kind: Option<MapValue>,
    pub unmatched: Vec<BuildingKey>,
    pub warnings: Vec<String>,
    pub report: RunReport,
}

/// Per-building values read from an assignments or deviations file.
type Values = BTreeMap<BuildingKey, Vec<(YearMonth, f64)>>;

fn read_values(path: &Path, norm: &KeyNormalization) -> Result<(Option<MapValue>, Values)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok((None, Values::new()));
    }
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let headers = reader.headers().map_err(|e| Error::parse(path, e))?.clone();
    let col = |n: &str| headers.iter().position(|h| h.trim() == n);
    let (kind, value_col) = match (col("label"), col("pct_deviation")) {
        (Some(i), _) => (MapValue::Label, i),
        (None, Some(i)) => (MapValue::Deviation, i),
        _ => return Err(Error::parse(path, "expected a `label` or `pct_deviation` column")),
    };
    let need = |n: &str| col(n).ok_or_else(|| Error::parse(path, format!("missing column `{n}`")));
    let (cb, cn, cm) = (need("bbl")?, need("bin")?, need("month")?);
    let mut out = Values::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |what: &str| Error::parse(path, format!("line {line}: bad {what}"));
        let month: YearMonth = rec[cm].trim().parse().map_err(|_| bad("month"))?;
        let v: f64 = rec[value_col].trim().parse().map_err(|_| bad("value"))?;
        out.entry(BuildingKey::new(&rec[cb], &rec[cn], norm)).or_default().push((month, v));
    }
    Ok((Some(kind), out))
}

/// Most frequent label; ties go to the smallest.
fn modal_label(values: &[(YearMonth, f64)]) -> f64 {
    let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
    for (_, v) in values {
        *counts.entry(*v as u64).or_default() += 1;
    }
    let best = counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).expect("non-empty");
    *best.0 as f64
}

/// `100·(exp(mean ln(1 + d/100)) − 1)`: the deviation implied by the mean
/// log contribution over the months.
fn mean_deviation(values: &[(YearMonth, f64)]) -> f64 {
    let mean_log = values.iter().map(|(_, d)| (d / 100.0).ln_1p()).sum::<f64>() / values.len() as f64;
    100.0 * mean_log.exp_m1()
}

/// Builds the FeatureCollection for one month (or all months) and writes
/// it with its report.
pub fn run_map(
    cfg: &RunConfig,
    input: &Path,
    month: MonthSelection,
    output_name: &str,
) -> Result<MapOutcome> {
    cfg.validate()?;
    cfg.require(&[("footprints", &cfg.footprints)])?;
    let norm: KeyNormalization = cfg.key_normalization.into();
    let mut rec = Recorder::new("map", cfg.seed);
    let (kind, values) = rec.time("ingest", || read_values(input, &norm))?;
    let footprints: BTreeMap<BuildingKey, Polygon> = rec.time("ingest", || {
        let path = cfg.footprints.as_deref().expect("required");
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let (records, _) = parse_footprints(&bytes)?;
        let mut map = BTreeMap::new();
        for r in records {
            map.entry(BuildingKey::new(&r.bbl, &r.bin, &norm)).or_insert(r.footprint);
        }
        Ok(map)
    })?;

    let mut warnings = Vec::new();
    if values.is_empty() {
        warnings.push(format!("{} contains no rows", input.display()));
    }
    let mut features = Vec::new();
    let mut unmatched = Vec::new();
    for (key, series) in &values {
        let chosen: Vec<(YearMonth, f64)> = match month {
            MonthSelection::All => series.clone(),
            MonthSelection::Month(m) => series.iter().filter(|(mm, _)| *mm == m).copied().collect(),
        };
        if chosen.is_empty() {
            continue;
        }
        let Some(poly) = footprints.get(key) else {
            unmatched.push(key.clone());
            continue;
        };
        let mut props = Map::new();
        props.insert("bbl".into(), json!(key.bbl));
        props.insert("bin".into(), json!(key.bin));
        let (month_label, value) = match (month, kind) {
            (MonthSelection::Month(m), _) => (m.to_string(), chosen[0].1),
            (MonthSelection::All, Some(MapValue::Label)) => ("all".into(), modal_label(&chosen)),
            (MonthSelection::All, _) => ("all".into(), mean_deviation(&chosen)),
        };
        props.insert("month".into(), json!(month_label));
        match kind.expect("non-empty input has a kind") {
            MapValue::Label => props.insert("label".into(), json!(value as u64)),
            MapValue::Deviation => props.insert("pct_deviation".into(), json!(value)),
        };
        features.push(feature(polygon_geometry(poly), props));
    }
    if !unmatched.is_empty() {
        warnings.push(format!("{} building(s) have no footprint and were omitted", unmatched.len()));
    }
    let geojson = feature_collection(features);
    let mut text = serde_json::to_string(&geojson).expect("GeoJSON serializes");
    text.push('\n');
    rec.write(&cfg.output_dir, output_name, text.as_bytes())?;
    for w in &warnings {
        eprintln!("{}", json!({"warning": w}));
    }
    let details = json!({
        "input": input.display().to_string(),
        "value": kind.map(|k| match k { MapValue::Label => "label", MapValue::Deviation => "pct_deviation" }),
        "month": match month { MonthSelection::All => "all".to_string(), MonthSelection::Month(m) => m.to_string() },
        "unmatched": unmatched.iter().map(|k| json!({"bbl": k.bbl, "bin": k.bin})).collect::<Vec<_>>(),
        "warnings": warnings,
    });
    let report = rec.finish(&cfg.output_dir, details)?;
    Ok(MapOutcome { geojson, kind, unmatched, warnings, report })
}
