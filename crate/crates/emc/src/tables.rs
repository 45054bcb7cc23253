//! Energy, attribute and feature-table CSV files.

use std::fs;
use std::path::{Path, PathBuf};

use emc_core::dataset::{AttributeRecord, BuildingKey, EnergyRecord, Feature, FeatureRow, KeyNormalization};
use emc_core::time::YearMonth;
use serde_json::json;

use crate::error::{Error, Result};
use crate::numfmt::g17_opt;

pub const SCHEMA_VERSION: u32 = 1;

/// Header lookup that reports the missing column by name.
struct Columns {
    headers: csv::StringRecord,
    path: PathBuf,
}

impl Columns {
    fn index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::parse(&self.path, format!("missing column `{name}`")))
    }
}

fn open(path: &Path) -> Result<(csv::Reader<fs::File>, Columns)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
    let headers = reader.headers().map_err(|e| Error::parse(path, e))?.clone();
    Ok((reader, Columns { headers, path: path.to_path_buf() }))
}

fn row_error(path: &Path, rec: &csv::StringRecord, msg: impl std::fmt::Display) -> Error {
    let (line, offset) = rec.position().map_or((0, 0), |p| (p.line(), p.byte()));
    Error::parse(path, format!("line {line}: {msg}")).at_offset(offset)
}

/// Empty cells are missing values; anything else must parse as a finite number.
fn opt_f64(path: &Path, rec: &csv::StringRecord, i: usize, name: &str) -> Result<Option<f64>> {
    match rec[i].trim() {
        "" => Ok(None),
        s => match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Some(v)),
            _ => Err(row_error(path, rec, format!("`{name}` is not a finite number: `{s}`"))),
        },
    }
}

fn parse_month(path: &Path, rec: &csv::StringRecord, year: &str, month: &str) -> Result<YearMonth> {
    let y: i32 = year.trim().parse().map_err(|_| row_error(path, rec, format!("bad year `{year}`")))?;
    let m: u8 = month.trim().parse().map_err(|_| row_error(path, rec, format!("bad month `{month}`")))?;
    YearMonth::new(y, m).map_err(|e| row_error(path, rec, e))
}

/// `bbl,bin,year,month,electricity_mwh,gas_mwh`.
pub fn read_energy(path: &Path, norm: &KeyNormalization) -> Result<Vec<EnergyRecord>> {
    let (mut reader, cols) = open(path)?;
    let idx = ["bbl", "bin", "year", "month", "electricity_mwh", "gas_mwh"]
        .map(|c| cols.index(c))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let month = parse_month(path, &rec, &rec[idx[2]], &rec[idx[3]])?;
        let electricity_mwh = opt_f64(path, &rec, idx[4], "electricity_mwh")?;
        let gas_mwh = opt_f64(path, &rec, idx[5], "gas_mwh")?;
        if electricity_mwh.into_iter().chain(gas_mwh).any(|v| v < 0.0) {
            return Err(row_error(path, &rec, "negative energy"));
        }
        out.push(EnergyRecord {
            key: BuildingKey::new(&rec[idx[0]], &rec[idx[1]], norm),
            month,
            electricity_mwh,
            gas_mwh,
        });
    }
    Ok(out)
}

/// `bbl,bin,bldgarea_sqft,assesstot_usd,yearbuilt`.
pub fn read_attributes(path: &Path, norm: &KeyNormalization) -> Result<Vec<AttributeRecord>> {
    let (mut reader, cols) = open(path)?;
    let idx = ["bbl", "bin", "bldgarea_sqft", "assesstot_usd", "yearbuilt"]
        .map(|c| cols.index(c))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        out.push(AttributeRecord {
            key: BuildingKey::new(&rec[idx[0]], &rec[idx[1]], norm),
            floor_area_sqft: opt_f64(path, &rec, idx[2], "bldgarea_sqft")?,
            assess_total: opt_f64(path, &rec, idx[3], "assesstot_usd")?,
            year_built: opt_f64(path, &rec, idx[4], "yearbuilt")?,
        });
    }
    Ok(out)
}

pub fn feature_table_header() -> Vec<&'static str> {
    let mut h = vec!["bbl", "bin", "month"];
    h.extend(Feature::ALL.iter().map(|f| f.name()));
    h.extend(["y_electric", "y_gas"]);
    h
}

/// Feature table as CSV bytes: 17 significant digits, missing as empty.
pub fn format_feature_table(rows: &[FeatureRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(feature_table_header()).expect("in-memory write");
    for r in rows {
        let mut rec = vec![r.key.bbl.clone(), r.key.bin.clone(), r.month.to_string()];
        rec.extend(r.features.iter().map(|v| g17_opt(*v)));
        rec.push(g17_opt(r.y_electric));
        rec.push(g17_opt(r.y_gas));
        w.write_record(&rec).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// `features.csv` → `features.schema.json`.
pub fn schema_path(table: &Path) -> PathBuf {
    table.with_extension("schema.json")
}

pub fn feature_table_schema() -> serde_json::Value {
    let mut columns = vec![
        json!({"name": "bbl", "type": "string", "source": "footprints"}),
        json!({"name": "bin", "type": "string", "source": "footprints"}),
        json!({"name": "month", "type": "year-month", "format": "YYYY-MM"}),
    ];
    for f in Feature::ALL {
        columns.push(json!({"name": f.name(), "type": "float", "unit": f.unit(), "source": f.source()}));
    }
    for t in ["y_electric", "y_gas"] {
        columns.push(json!({"name": t, "type": "float", "unit": "ln(MWh/m²)", "source": "energy"}));
    }
    json!({
        "schema_version": SCHEMA_VERSION,
        "missing": "",
        "float_format": "%.17g",
        "row_order": ["bbl", "bin", "month"],
        "columns": columns,
    })
}

pub fn read_feature_table(path: &Path) -> Result<Vec<FeatureRow>> {
    let (mut reader, cols) = open(path)?;
    let key = [cols.index("bbl")?, cols.index("bin")?, cols.index("month")?];
    let feats = Feature::ALL.map(|f| cols.index(f.name()));
    let feats = feats.into_iter().collect::<Result<Vec<_>>>()?;
    let (ye, yg) = (cols.index("y_electric")?, cols.index("y_gas")?);
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let month: YearMonth = rec[key[2]]
            .trim()
            .parse()
            .map_err(|_| row_error(path, &rec, format!("bad month `{}`", &rec[key[2]])))?;
        let mut features = [None; 12];
        for (slot, (&i, f)) in features.iter_mut().zip(feats.iter().zip(Feature::ALL)) {
            *slot = opt_f64(path, &rec, i, f.name())?;
        }
        out.push(FeatureRow {
            key: BuildingKey { bbl: rec[key[0]].trim().into(), bin: rec[key[1]].trim().into() },
            month,
            features,
            y_electric: opt_f64(path, &rec, ye, "y_electric")?,
            y_gas: opt_f64(path, &rec, yg, "y_gas")?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_table_round_trips_bit_exactly() {
        let mut features = [None; 12];
        features[0] = Some(0.1 + 0.2);
        features[3] = Some(-0.754);
        features[11] = Some(1931.0);
        let row = FeatureRow {
            key: BuildingKey { bbl: "1000010001".into(), bin: "1000001".into() },
            month: YearMonth::new(2019, 7).unwrap(),
            features,
            y_electric: Some(-4.605170185988091),
            y_gas: None,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("features.csv");
        fs::write(&p, format_feature_table(std::slice::from_ref(&row))).unwrap();
        let back = read_feature_table(&p).unwrap();
        assert_eq!(back, vec![row]);
        assert_eq!(schema_path(&p), dir.path().join("features.schema.json"));
    }

    #[test]
    fn energy_rows_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        fs::write(&p, "bbl,bin,year,month,electricity_mwh,gas_mwh\n 12,7,2019,1,10,\n").unwrap();
        let norm = KeyNormalization { bbl_width: Some(4), bin_width: None };
        let e = read_energy(&p, &norm).unwrap();
        assert_eq!(e[0].key.bbl, "0012");
        assert_eq!(e[0].gas_mwh, None);
        fs::write(&p, "bbl,bin,year,month,electricity_mwh,gas_mwh\n1,2,2019,13,1,1\n").unwrap();
        assert_eq!(read_energy(&p, &norm).unwrap_err().exit_code(), 3);
        fs::write(&p, "bbl,bin,year,month,electricity_mwh,gas_mwh\n1,2,2019,1,-1,1\n").unwrap();
        assert!(read_energy(&p, &norm).unwrap_err().message.contains("negative"));
        fs::write(&p, "bbl,bin,year,electricity_mwh,gas_mwh\n").unwrap();
        assert!(read_energy(&p, &norm).unwrap_err().message.contains("`month`"));
    }
}
