//! ESRI ASCII grid (`.asc`) reading and writing.
//!
//! Files list rows top first; [`RasterGrid`] stores row 0 at the bottom.

use std::fs;
use std::path::Path;

use emc_core::raster::{CrsTag, GridGeometry, RasterGrid};

use crate::error::{Error, Result};
use crate::numfmt::g17;

pub const DEFAULT_NODATA: f64 = -9999.0;

#[derive(Debug, Clone, PartialEq)]
pub enum AscError {
    MissingKey(&'static str),
    BadValue { key: String, value: String },
    UnknownKey(String),
    CountMismatch { expected: usize, found: usize },
    BadNumber { index: usize, token: String },
    Grid(emc_core::Error),
}

impl std::fmt::Display for AscError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AscError::MissingKey(k) => write!(f, "missing header key `{k}`"),
            AscError::BadValue { key, value } => write!(f, "header key `{key}` has invalid value `{value}`"),
            AscError::UnknownKey(k) => write!(f, "unknown header key `{k}`"),
            AscError::CountMismatch { expected, found } => {
                write!(f, "value count mismatch: expected {expected}, found {found}")
            }
            AscError::BadNumber { index, token } => write!(f, "value {index} is not a number: `{token}`"),
            AscError::Grid(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Default)]
struct Header {
    ncols: Option<usize>,
    nrows: Option<usize>,
    xll: Option<(f64, bool)>,
    yll: Option<(f64, bool)>,
    cellsize: Option<f64>,
    nodata: Option<f64>,
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, AscError> {
    value.parse().map_err(|_| AscError::BadValue { key: key.into(), value: value.into() })
}

/// Parses grid text. `xllcenter`/`yllcenter` are accepted and shifted to
/// corners; `NODATA_value` defaults to −9999 when absent.
pub fn parse_grid(text: &str, crs: CrsTag) -> Result<RasterGrid, AscError> {
    let mut header = Header::default();
    let mut body_start = text.len();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let mut tokens = line.split_whitespace();
        let Some(key) = tokens.next() else {
            offset += line.len();
            continue;
        };
        if !key.starts_with(|c: char| c.is_ascii_alphabetic()) {
            body_start = offset;
            break;
        }
        let value = tokens.next().unwrap_or("");
        match key.to_ascii_lowercase().as_str() {
            "ncols" => header.ncols = Some(number(key, value)?),
            "nrows" => header.nrows = Some(number(key, value)?),
            "xllcorner" => header.xll = Some((number(key, value)?, false)),
            "xllcenter" => header.xll = Some((number(key, value)?, true)),
            "yllcorner" => header.yll = Some((number(key, value)?, false)),
            "yllcenter" => header.yll = Some((number(key, value)?, true)),
            "cellsize" => header.cellsize = Some(number(key, value)?),
            "nodata_value" => header.nodata = Some(number(key, value)?),
            _ => return Err(AscError::UnknownKey(key.into())),
        }
        offset += line.len();
    }
    let ncols = header.ncols.ok_or(AscError::MissingKey("ncols"))?;
    let nrows = header.nrows.ok_or(AscError::MissingKey("nrows"))?;
    let (xll, x_center) = header.xll.ok_or(AscError::MissingKey("xllcorner"))?;
    let (yll, y_center) = header.yll.ok_or(AscError::MissingKey("yllcorner"))?;
    let cs = header.cellsize.ok_or(AscError::MissingKey("cellsize"))?;
    let nodata = header.nodata.unwrap_or(DEFAULT_NODATA);
    let origin_x = if x_center { xll - cs / 2.0 } else { xll };
    let origin_y = if y_center { yll - cs / 2.0 } else { yll };
    let geometry = GridGeometry::new(ncols, nrows, origin_x, origin_y, cs, crs).map_err(AscError::Grid)?;

    let expected = ncols * nrows;
    let tokens: Vec<&str> = text[body_start..].split_whitespace().collect();
    if tokens.len() != expected {
        return Err(AscError::CountMismatch { expected, found: tokens.len() });
    }
    let mut values = vec![0.0; expected];
    for (i, tok) in tokens.iter().enumerate() {
        let v: f64 = tok.parse().map_err(|_| AscError::BadNumber { index: i, token: (*tok).into() })?;
        let (file_row, col) = (i / ncols, i % ncols);
        values[(nrows - 1 - file_row) * ncols + col] = v;
    }
    RasterGrid::new(geometry, nodata, values).map_err(AscError::Grid)
}

pub fn load_grid(path: &Path, crs: CrsTag) -> Result<RasterGrid> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_grid(&text, crs).map_err(|e| Error::parse(path, e))
}

/// Serializes with corner-registered header keys and 17 significant digits.
pub fn format_grid(grid: &RasterGrid) -> String {
    let g = &grid.geometry;
    let mut out = format!(
        "ncols {}\nnrows {}\nxllcorner {}\nyllcorner {}\ncellsize {}\nNODATA_value {}\n",
        g.ncols,
        g.nrows,
        g17(g.origin_x),
        g17(g.origin_y),
        g17(g.cell_size),
        g17(grid.nodata)
    );
    for row in (0..g.nrows).rev() {
        let line: Vec<String> = (0..g.ncols).map(|c| g17(grid.get(c, row))).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_grid(grid: &RasterGrid, path: &Path) -> Result<()> {
    fs::write(path, format_grid(grid)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str =
        "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 10\nNODATA_value -9999\n1 2\n3 -9999\n";

    #[test]
    fn bottom_origin_and_nodata() {
        let g = parse_grid(SMALL, CrsTag::LocalMetric).unwrap();
        assert_eq!(g.get(0, 0), 3.0);
        assert_eq!(g.get(0, 1), 1.0);
        assert_eq!(g.get(1, 1), 2.0);
        assert_eq!(g.value(1, 0), None);
        assert_eq!(g.valid_count(), 3);
    }

    #[test]
    fn errors_name_the_problem() {
        let missing = SMALL.replace("cellsize 10\n", "");
        assert_eq!(parse_grid(&missing, CrsTag::Wgs84).unwrap_err(), AscError::MissingKey("cellsize"));
        let short = SMALL.replace("3 -9999\n", "3\n");
        assert_eq!(
            parse_grid(&short, CrsTag::Wgs84).unwrap_err(),
            AscError::CountMismatch { expected: 4, found: 3 }
        );
        let msg = parse_grid(&short, CrsTag::Wgs84).unwrap_err().to_string();
        assert!(msg.contains("expected 4") && msg.contains("found 3"));
    }

    #[test]
    fn centers_and_case() {
        let text = "NCOLS 1\nNROWS 1\nXLLCENTER 5\nYLLCENTER 5\nCELLSIZE 10\n7\n";
        let g = parse_grid(text, CrsTag::LocalMetric).unwrap();
        assert_eq!((g.geometry.origin_x, g.geometry.origin_y), (0.0, 0.0));
        assert_eq!(g.nodata, DEFAULT_NODATA);
    }

    #[test]
    fn round_trip() {
        let g = parse_grid(SMALL, CrsTag::LocalMetric).unwrap();
        let again = parse_grid(&format_grid(&g), CrsTag::LocalMetric).unwrap();
        assert_eq!(g, again);
    }
}
