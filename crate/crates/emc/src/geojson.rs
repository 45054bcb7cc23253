//! GeoJSON footprint ingestion and FeatureCollection output.

use emc_core::geo::{largest_part, FootprintRecord, Point, Polygon};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedFeature {
    pub index: usize,
    pub bbl: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestionReport {
    pub features_in: usize,
    pub records: usize,
    pub skipped: Vec<SkippedFeature>,
}

impl IngestionReport {
    pub fn skipped_fraction(&self) -> f64 {
        if self.features_in == 0 {
            0.0
        } else {
            self.skipped.len() as f64 / self.features_in as f64
        }
    }
}

fn byte_offset(text: &[u8], line: usize, column: usize) -> u64 {
    let mut offset = 0usize;
    let mut current = 1usize;
    for (i, &b) in text.iter().enumerate() {
        if current == line {
            offset = i;
            break;
        }
        if b == b'\n' {
            current += 1;
            offset = i + 1;
        }
    }
    (offset + column.saturating_sub(1)) as u64
}

fn id_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) if !s.trim().is_empty() => Some(s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn ring(value: &Value) -> std::result::Result<Polygon, String> {
    let coords = value.as_array().ok_or("ring is not an array")?;
    let mut points = Vec::with_capacity(coords.len());
    for c in coords {
        let pair = c.as_array().filter(|p| p.len() >= 2).ok_or("position needs 2 numbers")?;
        let (Some(x), Some(y)) = (pair[0].as_f64(), pair[1].as_f64()) else {
            return Err("position needs 2 numbers".into());
        };
        points.push(Point::new(x, y));
    }
    Polygon::new(points).map_err(|e| e.to_string())
}

fn exterior(rings: &Value) -> std::result::Result<Polygon, String> {
    let first = rings.as_array().and_then(|r| r.first()).ok_or("polygon has no rings")?;
    ring(first)
}

/// Footprint geometry from a GeoJSON geometry object; holes are ignored
/// (only the hull matters downstream) and MultiPolygons keep their largest part.
pub fn footprint_geometry(geometry: &Value) -> std::result::Result<Polygon, String> {
    let kind = geometry.get("type").and_then(Value::as_str).ok_or("geometry without type")?;
    let coords = geometry.get("coordinates").ok_or("geometry without coordinates")?;
    match kind {
        "Polygon" => exterior(coords),
        "MultiPolygon" => {
            let parts = coords
                .as_array()
                .ok_or("MultiPolygon coordinates are not an array")?
                .iter()
                .map(exterior)
                .collect::<std::result::Result<Vec<_>, _>>()?;
            largest_part(parts).ok_or_else(|| "empty MultiPolygon".into())
        }
        other => Err(format!("unsupported geometry type {other}")),
    }
}

/// Reads a FeatureCollection of building footprints with `bbl` and `bin`
/// properties. Malformed JSON is fatal; bad features are skipped and listed.
pub fn parse_footprints(bytes: &[u8]) -> Result<(Vec<FootprintRecord>, IngestionReport)> {
    let doc: Value = serde_json::from_slice(bytes).map_err(|e| {
        let offset = byte_offset(bytes, e.line(), e.column());
        Error::data(format!("malformed GeoJSON at byte {offset}: {e}")).at_offset(offset)
    })?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(Error::data("GeoJSON root is not a FeatureCollection"));
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::data("FeatureCollection has no features array"))?;
    let mut report = IngestionReport { features_in: features.len(), ..Default::default() };
    let mut records = Vec::with_capacity(features.len());
    for (index, f) in features.iter().enumerate() {
        let props = f.get("properties");
        let bbl = props.and_then(|p| p.get("bbl")).and_then(id_string);
        let bin = props.and_then(|p| p.get("bin")).and_then(id_string);
        let skip = |reason: String| SkippedFeature { index, bbl: bbl.clone(), reason };
        let (Some(b), Some(n)) = (&bbl, &bin) else {
            let missing = if bbl.is_none() { "bbl" } else { "bin" };
            report.skipped.push(skip(format!("missing `{missing}` property")));
            continue;
        };
        match f.get("geometry").map(footprint_geometry) {
            Some(Ok(poly)) => records.push(FootprintRecord::new(b.clone(), n.clone(), poly)),
            Some(Err(reason)) => report.skipped.push(skip(reason)),
            None => report.skipped.push(skip("missing geometry".into())),
        }
    }
    report.records = records.len();
    Ok((records, report))
}

pub fn polygon_geometry(polygon: &Polygon) -> Value {
    let ring: Vec<[f64; 2]> = polygon.closed_ring().iter().map(|p| [p.x, p.y]).collect();
    json!({ "type": "Polygon", "coordinates": [ring] })
}

pub fn feature(geometry: Value, properties: Map<String, Value>) -> Value {
    json!({ "type": "Feature", "properties": properties, "geometry": geometry })
}

pub fn feature_collection(features: Vec<Value>) -> Value {
    json!({ "type": "FeatureCollection", "features": features })
}
