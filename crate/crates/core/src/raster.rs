//! Raster grids, quality masks, band math and area-weighted zonal reduction.
//!
//! Grids use a bottom-origin, row-major layout: index `row * ncols + col`
//! with row 0 along the southern edge.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::geo::{Point, Polygon};
use crate::time::YearMonth;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrsTag {
    /// Meters in a local frame shared with the regions being reduced.
    LocalMetric,
    /// Longitude/latitude degrees.
    Wgs84,
}

impl CrsTag {
    pub fn name(self) -> &'static str {
        match self {
            CrsTag::LocalMetric => "local-metric",
            CrsTag::Wgs84 => "wgs84",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "local-metric" => Ok(CrsTag::LocalMetric),
            "wgs84" => Ok(CrsTag::Wgs84),
            other => Err(Error::UnknownName(other.into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry {
    pub ncols: usize,
    pub nrows: usize,
    /// Lower-left corner.
    pub origin_x: f64,
    pub origin_y: f64,
    pub cell_size: f64,
    pub crs: CrsTag,
}

impl GridGeometry {
    pub fn new(
        ncols: usize,
        nrows: usize,
        origin_x: f64,
        origin_y: f64,
        cell_size: f64,
        crs: CrsTag,
    ) -> Result<Self> {
        if ncols == 0 || nrows == 0 {
            return Err(Error::InvalidParameter { name: "grid shape", reason: "must be non-empty" });
        }
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(Error::InvalidParameter { name: "cell_size", reason: "must be positive" });
        }
        if !(origin_x.is_finite() && origin_y.is_finite()) {
            return Err(Error::NonFinite { what: "grid origin" });
        }
        Ok(GridGeometry { ncols, nrows, origin_x, origin_y, cell_size, crs })
    }

    pub fn len(&self) -> usize {
        self.ncols * self.nrows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.ncols, self.nrows)
    }

    pub fn max_x(&self) -> f64 {
        self.origin_x + self.ncols as f64 * self.cell_size
    }

    pub fn max_y(&self) -> f64 {
        self.origin_y + self.nrows as f64 * self.cell_size
    }

    /// Cell containing `p`, if any (half-open cells).
    pub fn cell_at(&self, p: Point) -> Option<(usize, usize)> {
        let c = libm::floor((p.x - self.origin_x) / self.cell_size);
        let r = libm::floor((p.y - self.origin_y) / self.cell_size);
        if c < 0.0 || r < 0.0 || c >= self.ncols as f64 || r >= self.nrows as f64 {
            return None;
        }
        Some((c as usize, r as usize))
    }

    pub fn aligned_with(&self, other: &GridGeometry) -> bool {
        self == other
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid {
    pub geometry: GridGeometry,
    pub nodata: f64,
    values: Vec<f64>,
}

impl RasterGrid {
    pub fn new(geometry: GridGeometry, nodata: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() != geometry.len() {
            return Err(Error::DimensionMismatch { expected: geometry.len(), found: values.len() });
        }
        Ok(RasterGrid { geometry, nodata, values })
    }

    pub fn filled(geometry: GridGeometry, nodata: f64, value: f64) -> Self {
        RasterGrid { geometry, nodata, values: alloc::vec![value; geometry.len()] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.geometry.ncols + col
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[self.index(col, row)]
    }

    pub fn set(&mut self, col: usize, row: usize, v: f64) {
        let i = self.index(col, row);
        self.values[i] = v;
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        v.is_nan() || v == self.nodata
    }

    /// Value at `(col, row)` or `None` when the cell is nodata.
    pub fn value(&self, col: usize, row: usize) -> Option<f64> {
        let v = self.get(col, row);
        (!self.is_nodata(v)).then_some(v)
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|&&v| !self.is_nodata(v)).count()
    }

    fn check_aligned(&self, other: &GridGeometry) -> Result<()> {
        if self.geometry.shape() != other.shape() {
            return Err(Error::ShapeMismatch { expected: self.geometry.shape(), found: other.shape() });
        }
        Ok(())
    }
}

/// Named bit layout of a quality band.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskScheme {
    pub name: &'static str,
    pub cloud_bit: u8,
    pub cirrus_bit: u8,
}

impl MaskScheme {
    /// Sentinel-2 Level-1C QA60: bit 10 opaque clouds, bit 11 cirrus.
    pub const S2_L1C_QA60: MaskScheme = MaskScheme { name: "S2-L1C-QA60", cloud_bit: 10, cirrus_bit: 11 };

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "S2-L1C-QA60" => Ok(Self::S2_L1C_QA60),
            other => Err(Error::UnknownName(other.into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityMask {
    pub ncols: usize,
    pub nrows: usize,
    pub bits: Vec<u32>,
    pub cloud_bit: u8,
    pub cirrus_bit: u8,
}

impl QualityMask {
    pub fn new(ncols: usize, nrows: usize, bits: Vec<u32>, scheme: MaskScheme) -> Result<Self> {
        if bits.len() != ncols * nrows {
            return Err(Error::DimensionMismatch { expected: ncols * nrows, found: bits.len() });
        }
        Ok(QualityMask { ncols, nrows, bits, cloud_bit: scheme.cloud_bit, cirrus_bit: scheme.cirrus_bit })
    }

    /// Builds a mask from an integer-valued grid. Nodata or negative cells
    /// are treated as fully flagged since their quality is unknown.
    pub fn from_grid(grid: &RasterGrid, scheme: MaskScheme) -> Self {
        let bits = grid
            .values()
            .iter()
            .map(|&v| if grid.is_nodata(v) || v < 0.0 { u32::MAX } else { v as u32 })
            .collect();
        QualityMask {
            ncols: grid.geometry.ncols,
            nrows: grid.geometry.nrows,
            bits,
            cloud_bit: scheme.cloud_bit,
            cirrus_bit: scheme.cirrus_bit,
        }
    }

    fn flag(&self) -> u32 {
        (1u32 << self.cloud_bit) | (1u32 << self.cirrus_bit)
    }

    pub fn is_masked(&self, index: usize) -> bool {
        self.bits[index] & self.flag() != 0
    }
}

/// Sets every cell flagged as cloud or cirrus to nodata.
pub fn apply_bitmask(band: &RasterGrid, mask: &QualityMask) -> Result<RasterGrid> {
    if band.geometry.shape() != (mask.ncols, mask.nrows) {
        return Err(Error::ShapeMismatch {
            expected: band.geometry.shape(),
            found: (mask.ncols, mask.nrows),
        });
    }
    let mut out = band.clone();
    let nodata = out.nodata;
    for (i, v) in out.values.iter_mut().enumerate() {
        if mask.is_masked(i) {
            *v = nodata;
        }
    }
    Ok(out)
}

/// `(nir − red) / (nir + red)` per cell; nodata where either input is nodata
/// or the denominator is zero. Output uses the NIR band's nodata sentinel.
pub fn ndvi(nir: &RasterGrid, red: &RasterGrid) -> Result<RasterGrid> {
    nir.check_aligned(&red.geometry)?;
    let nodata = nir.nodata;
    let values = nir
        .values
        .iter()
        .zip(&red.values)
        .map(|(&n, &r)| {
            if nir.is_nodata(n) || red.is_nodata(r) {
                return nodata;
            }
            let denom = n + r;
            if denom == 0.0 {
                return nodata;
            }
            ((n - r) / denom).clamp(-1.0, 1.0)
        })
        .collect();
    Ok(RasterGrid { geometry: nir.geometry, nodata, values })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZonalStatistic {
    /// Area-weighted mean over valid cells; `None` when nothing valid overlaps.
    pub value: Option<f64>,
    /// Area of the region covered by valid cells.
    pub covered_area: f64,
    /// `covered_area / area(region)`.
    pub valid_fraction: f64,
}

impl ZonalStatistic {
    pub const MISSING: ZonalStatistic =
        ZonalStatistic { value: None, covered_area: 0.0, valid_fraction: 0.0 };
}

/// Cell weights (intersection areas) of one region against one grid
/// geometry. Computed once and reused for every grid sharing the geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct ZonalWeights {
    geometry: GridGeometry,
    cells: Vec<(usize, f64)>,
    region_area: f64,
}

impl ZonalWeights {
    /// Clips the region against each overlapped cell. The region must be in
    /// the grid's coordinate frame.
    pub fn new(geometry: &GridGeometry, region: &Polygon) -> Result<Self> {
        let bb = region.bbox();
        let cs = geometry.cell_size;
        if bb.max_x <= geometry.origin_x
            || bb.min_x >= geometry.max_x()
            || bb.max_y <= geometry.origin_y
            || bb.min_y >= geometry.max_y()
        {
            return Err(Error::OutOfExtent);
        }
        let col_range = cell_span(bb.min_x, bb.max_x, geometry.origin_x, cs, geometry.ncols);
        let row_range = cell_span(bb.min_y, bb.max_y, geometry.origin_y, cs, geometry.nrows);
        let mut cells = Vec::new();
        let mut strip = Vec::new();
        let mut tmp = Vec::new();
        let mut cell_poly = Vec::new();
        for row in row_range.0..row_range.1 {
            let y0 = geometry.origin_y + row as f64 * cs;
            let y1 = y0 + cs;
            strip.clear();
            strip.extend_from_slice(region.vertices());
            clip_half_plane(&strip, &mut tmp, |p| p.y - y0, Axis::Y(y0));
            clip_half_plane(&tmp, &mut strip, |p| y1 - p.y, Axis::Y(y1));
            if strip.len() < 3 {
                continue;
            }
            for col in col_range.0..col_range.1 {
                let x0 = geometry.origin_x + col as f64 * cs;
                let x1 = x0 + cs;
                clip_half_plane(&strip, &mut tmp, |p| p.x - x0, Axis::X(x0));
                clip_half_plane(&tmp, &mut cell_poly, |p| x1 - p.x, Axis::X(x1));
                let w = crate::geo::signed_area(&cell_poly).abs();
                if w > 0.0 {
                    cells.push((row * geometry.ncols + col, w));
                }
            }
        }
        Ok(ZonalWeights { geometry: *geometry, cells, region_area: region.area() })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn region_area(&self) -> f64 {
        self.region_area
    }

    /// `(cell index, intersection area)` pairs in row-major order.
    pub fn cells(&self) -> &[(usize, f64)] {
        &self.cells
    }

    /// Area-weighted mean of the grid's valid cells over the region.
    pub fn reduce(&self, grid: &RasterGrid) -> Result<ZonalStatistic> {
        if !grid.geometry.aligned_with(&self.geometry) {
            return Err(Error::ShapeMismatch {
                expected: self.geometry.shape(),
                found: grid.geometry.shape(),
            });
        }
        let (mut num, mut den) = (0.0, 0.0);
        for &(i, w) in &self.cells {
            let v = grid.values[i];
            if !grid.is_nodata(v) {
                num += v * w;
                den += w;
            }
        }
        let valid_fraction = if self.region_area > 0.0 { den / self.region_area } else { 0.0 };
        Ok(ZonalStatistic { value: (den > 0.0).then(|| num / den), covered_area: den, valid_fraction })
    }
}

fn cell_span(lo: f64, hi: f64, origin: f64, cs: f64, n: usize) -> (usize, usize) {
    let a = libm::floor((lo - origin) / cs).max(0.0) as usize;
    let b = (libm::ceil((hi - origin) / cs).max(0.0) as usize).min(n);
    (a.min(n), b)
}

#[derive(Clone, Copy)]
enum Axis {
    X(f64),
    Y(f64),
}

// One Sutherland-Hodgman pass against the half-plane `inside(p) >= 0`.
// Intersection points are snapped exactly onto the clip line.
fn clip_half_plane(input: &[Point], out: &mut Vec<Point>, inside: impl Fn(Point) -> f64, axis: Axis) {
    out.clear();
    let n = input.len();
    if n == 0 {
        return;
    }
    for i in 0..n {
        let cur = input[i];
        let prev = input[(i + n - 1) % n];
        let dc = inside(cur);
        let dp = inside(prev);
        if dc >= 0.0 {
            if dp < 0.0 {
                out.push(intersect(prev, cur, dp, dc, axis));
            }
            out.push(cur);
        } else if dp >= 0.0 {
            out.push(intersect(prev, cur, dp, dc, axis));
        }
    }
}

fn intersect(a: Point, b: Point, da: f64, db: f64, axis: Axis) -> Point {
    let t = da / (da - db);
    match axis {
        Axis::X(x) => Point::new(x, a.y + t * (b.y - a.y)),
        Axis::Y(y) => Point::new(a.x + t * (b.x - a.x), y),
    }
}

/// Area-weighted mean of `grid` over `region` (same coordinate frame).
pub fn zonal_reduce(grid: &RasterGrid, region: &Polygon) -> Result<ZonalStatistic> {
    ZonalWeights::new(&grid.geometry, region)?.reduce(grid)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonthlyComposite {
    pub value: Option<f64>,
    pub scenes_used: usize,
    pub scenes_total: usize,
}

/// Unweighted mean over the scenes of one month with any valid coverage.
pub fn monthly_composite(scenes: &[ZonalStatistic]) -> MonthlyComposite {
    let mut sum = 0.0;
    let mut used = 0usize;
    for s in scenes {
        if let (Some(v), true) = (s.value, s.valid_fraction > 0.0) {
            sum += v;
            used += 1;
        }
    }
    MonthlyComposite {
        value: (used > 0).then(|| sum / used as f64),
        scenes_used: used,
        scenes_total: scenes.len(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceComparison {
    pub mean_percent_difference: f64,
    pub per_month: Vec<(YearMonth, f64)>,
}

/// Symmetric percent difference `200·|a − b| / (|a| + |b|)`.
pub fn percent_difference(a: f64, b: f64) -> Option<f64> {
    let denom = a.abs() + b.abs();
    (denom != 0.0).then(|| 200.0 * (a - b).abs() / denom)
}

/// Mean symmetric percent difference over the months both series report.
pub fn compare_sources(
    series_a: &BTreeMap<YearMonth, Option<f64>>,
    series_b: &BTreeMap<YearMonth, Option<f64>>,
) -> Result<SourceComparison> {
    let mut per_month = Vec::new();
    for (month, a) in series_a {
        let (Some(a), Some(Some(b))) = (a, series_b.get(month)) else { continue };
        if let Some(d) = percent_difference(*a, *b) {
            per_month.push((*month, d));
        }
    }
    if per_month.is_empty() {
        return Err(Error::EmptyOverlap);
    }
    let mean = per_month.iter().map(|(_, d)| d).sum::<f64>() / per_month.len() as f64;
    Ok(SourceComparison { mean_percent_difference: mean, per_month })
}
