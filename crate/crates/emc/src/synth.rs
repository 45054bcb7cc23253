//! Seeded synthetic inputs with known coefficients.
//!
//! [`write_city`] lays out a small city on a regular lon/lat grid: one raster
//! cell per building, so every capture region falls inside a single cell and
//! the true feature values are known exactly. Energy is generated from those
//! values through a log-linear model, and the expected join outcome is
//! computed independently of the pipeline.
//!
//! [`regime_table`] builds a feature table directly, with environmental
//! features driven by a small set of regimes (optionally cycling by month).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use emc_core::climate::{degree_days, monthly_aggregate, DegreeDayConfig, HourlySeries, Reducer};
use emc_core::dataset::{AttritionCause, BuildingKey, Feature, FeatureRow, FeatureValues, SQFT_TO_M2};
use emc_core::geo::{LocalProjection, Point};
use emc_core::raster::{CrsTag, GridGeometry, RasterGrid};
use emc_core::rng::SeededRng;
use emc_core::time::{YearMonth, SECONDS_PER_DAY, SECONDS_PER_HOUR};
use serde_json::{json, Value};

use crate::asc::{write_grid, DEFAULT_NODATA};
use crate::error::{Error, Result};
use crate::numfmt::{g17, g17_opt};

/// True electricity coefficients in [`Feature::ALL`] order.
pub const BETA_ELECTRIC: [f64; 12] =
    [0.004, -0.003, 0.004, -0.754, -0.02, 0.001, -0.0008, 0.0003, 0.0008, -0.001, 2e-9, 0.0015];
pub const BETA_GAS: [f64; 12] =
    [-0.002, 0.002, -0.003, -0.3, 0.03, -0.002, 0.001, 0.0012, -0.0005, 0.002, -1e-9, -0.002];
/// Mean log energy intensities, ln(MWh/m²) per month.
pub const MEAN_Y_ELECTRIC: f64 = -5.3;
pub const MEAN_Y_GAS: f64 = -4.9;

/// Nominal (mean, sd) per feature, used for scales and intercepts.
pub const FEATURE_SCALE: [(f64, f64); 12] = [
    (30.0, 10.0),
    (80.0, 10.0),
    (40.0, 8.0),
    (0.25, 0.08),
    (5.0, 1.5),
    (50.0, 15.0),
    (90.0, 30.0),
    (200.0, 150.0),
    (60.0, 50.0),
    (30.0, 15.0),
    (2e7, 8e6),
    (1955.0, 30.0),
];

/// Intercept that puts the mean response at `mean_y` for nominal feature means.
pub fn intercept(beta: &[f64; 12], mean_y: f64) -> f64 {
    mean_y - beta.iter().zip(FEATURE_SCALE).map(|(b, (m, _))| b * m).sum::<f64>()
}

fn linear(beta: &[f64; 12], mean_y: f64, x: &FeatureValues) -> f64 {
    intercept(beta, mean_y) + beta.iter().zip(x).map(|(b, v)| b * v.expect("complete row")).sum::<f64>()
}

const CELL_DEG: f64 = 0.005;
const LON0: f64 = -74.05;
const LAT0: f64 = 40.65;

#[derive(Debug, Clone)]
pub struct CityConfig {
    pub buildings: usize,
    pub months: usize,
    pub start: YearMonth,
    pub seed: u64,
    /// Residual sd of both log-energy responses.
    pub noise_sd: f64,
    /// Reanalysis cells per side of the city.
    pub reanalysis_cells: usize,
    /// Chance that a building is cloudy in one Sentinel scene.
    pub cloud_probability: f64,
    /// Energy rows written twice.
    pub duplicate_rows: usize,
    /// Rows with zero electricity and gas.
    pub zero_energy_rows: usize,
    /// Buildings left out of the attributes file.
    pub missing_attributes: usize,
    /// Sentinel bands to write; `false` leaves out B1/B11 (NDVI and night lights remain).
    pub all_bands: bool,
}

impl CityConfig {
    pub fn new(buildings: usize, months: usize, seed: u64) -> Self {
        CityConfig {
            buildings,
            months,
            start: YearMonth { year: 2018, month: 1 },
            seed,
            noise_sd: 0.05,
            reanalysis_cells: 2,
            cloud_probability: 0.12,
            duplicate_rows: (buildings * months) / 200,
            zero_energy_rows: (buildings * months) / 200,
            missing_attributes: buildings / 100,
            all_bands: true,
        }
    }
}

/// Features plus electric and gas responses of one row.
pub type TruthRow = (FeatureValues, Option<f64>, Option<f64>);

/// What the pipeline should produce for a generated city.
#[derive(Debug, Clone, Default)]
pub struct Truth {
    /// Surviving rows with their exact features and responses.
    pub rows: BTreeMap<(BuildingKey, YearMonth), TruthRow>,
    /// Energy rows written, and drops per cause in the join's fixed order.
    pub rows_in: usize,
    pub dropped: BTreeMap<&'static str, usize>,
    pub beta_electric: [f64; 12],
    pub beta_gas: [f64; 12],
}

#[derive(Debug, Clone)]
pub struct City {
    pub dir: PathBuf,
    pub config_path: PathBuf,
    pub truth: Truth,
    pub keys: Vec<BuildingKey>,
}

fn months_from(start: YearMonth, n: usize) -> Vec<YearMonth> {
    let mut out = Vec::with_capacity(n);
    let mut m = start;
    for _ in 0..n {
        out.push(m);
        m = m.succ();
    }
    out
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// L-shaped outline around `center`, rotated, in lon/lat.
fn footprint_ring(rng: &mut SeededRng, center: Point) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
    let w = rng.uniform_range(15.0, 40.0);
    let h = rng.uniform_range(15.0, 40.0);
    let (nw, nh) = (w * rng.uniform_range(0.3, 0.7), h * rng.uniform_range(0.3, 0.7));
    let theta = rng.uniform_range(0.0, std::f64::consts::PI);
    let (s, c) = theta.sin_cos();
    let proj = LocalProjection::new(center).expect("city lies within projection limits");
    let to_lonlat = |pts: &[(f64, f64)]| -> Vec<[f64; 2]> {
        let mut ring: Vec<[f64; 2]> = pts
            .iter()
            .map(|&(x, y)| {
                let (x, y) = (x - w / 2.0, y - h / 2.0);
                let p = proj.unproject(Point::new(c * x - s * y, s * x + c * y));
                [p.x, p.y]
            })
            .collect();
        ring.push(ring[0]);
        ring
    };
    let main = to_lonlat(&[(0.0, 0.0), (w, 0.0), (w, nh), (nw, nh), (nw, h), (0.0, h)]);
    let shed = to_lonlat(&[(w + 8.0, 0.0), (w + 13.0, 0.0), (w + 13.0, 5.0), (w + 8.0, 5.0)]);
    (main, shed)
}

struct Layout {
    side: usize,
    geometry: GridGeometry,
}

impl Layout {
    fn new(buildings: usize) -> Result<Self> {
        let side = (buildings as f64).sqrt().ceil() as usize;
        let geometry = GridGeometry::new(side + 2, side + 2, LON0, LAT0, CELL_DEG, CrsTag::Wgs84)?;
        Ok(Layout { side, geometry })
    }

    fn cell(&self, b: usize) -> (usize, usize) {
        (b % self.side + 1, b / self.side + 1)
    }

    fn center(&self, b: usize) -> Point {
        let (c, r) = self.cell(b);
        Point::new(LON0 + (c as f64 + 0.5) * CELL_DEG, LAT0 + (r as f64 + 0.5) * CELL_DEG)
    }

    /// Reanalysis cell nearest to the building, measured in its local frame.
    fn climate_cell(&self, b: usize, n: usize) -> (usize, usize) {
        let proj = LocalProjection::new(self.center(b)).expect("city lies within projection limits");
        let mut best = (f64::INFINITY, (0, 0));
        for iy in 0..n {
            for ix in 0..n {
                let p = proj.project(self.climate_center(ix, iy, n));
                let d = p.x * p.x + p.y * p.y;
                if d < best.0 {
                    best = (d, (ix, iy));
                }
            }
        }
        best.1
    }

    /// `n × n` centers over the city, shifted a quarter cell so that no
    /// building sits halfway between two of them.
    fn climate_center(&self, ix: usize, iy: usize, n: usize) -> Point {
        let span = (self.side + 2) as f64 * CELL_DEG / n as f64;
        let shift = 0.25 * CELL_DEG;
        Point::new(LON0 + shift + (ix as f64 + 0.5) * span, LAT0 + shift + (iy as f64 + 0.5) * span)
    }
}

/// Hourly series for one reanalysis cell over all months.
struct CellClimate {
    timestamps: Vec<i64>,
    tmp: Vec<Option<f64>>,
    wind: Vec<Option<f64>>,
    tcdc: Vec<Option<f64>>,
    acpc: Vec<Option<f64>>,
}

fn cell_climate(rng: &mut SeededRng, months: &[YearMonth]) -> CellClimate {
    let mut out = CellClimate {
        timestamps: Vec::new(),
        tmp: Vec::new(),
        wind: Vec::new(),
        tcdc: Vec::new(),
        acpc: Vec::new(),
    };
    for m in months {
        let mu = rng.uniform_range(-2.0, 28.0);
        let sigma = rng.uniform_range(1.0, 7.0);
        let wind = rng.uniform_range(2.0, 8.0);
        let cloud = rng.uniform_range(20.0, 80.0);
        let rain = rng.uniform_range(0.05, 0.25);
        let start = m.start_timestamp();
        for d in 0..i64::from(m.days()) {
            let day_mean = mu + sigma * rng.normal();
            for h in 0..24 {
                let t = start + d * SECONDS_PER_DAY + h * SECONDS_PER_HOUR;
                let phase = std::f64::consts::TAU * (h as f64 + 0.5) / 24.0;
                out.timestamps.push(t);
                // A few gaps to exercise missing-hour handling.
                let gap = rng.uniform() < 0.002;
                out.tmp.push((!gap).then(|| day_mean + 4.0 * phase.sin()));
                out.wind.push(Some((wind * (1.0 + 0.3 * phase.cos()) + 0.5 * rng.normal()).max(0.0)));
                out.tcdc.push(Some((cloud + 15.0 * rng.normal()).clamp(0.0, 100.0)));
                let p = if rng.uniform() < rain { rng.uniform_range(0.0, 2.0) } else { 0.0 };
                out.acpc.push(Some(p));
            }
        }
    }
    out
}

/// Monthly climate features computed directly from the generated hours.
fn climate_truth(c: &CellClimate, months: &[YearMonth]) -> Result<BTreeMap<YearMonth, [f64; 5]>> {
    let series = |name: &str, v: &[Option<f64>]| {
        HourlySeries::new(name.into(), String::new(), c.timestamps.clone(), v.to_vec())
    };
    let tmp = series("TMP", &c.tmp)?.split_by_month(0);
    let wind = series("WIND", &c.wind)?.split_by_month(0);
    let tcdc = series("TCDC", &c.tcdc)?.split_by_month(0);
    let acpc = series("ACPC01", &c.acpc)?.split_by_month(0);
    let mut out = BTreeMap::new();
    for m in months {
        let dd = degree_days(&tmp[m], &DegreeDayConfig::default()).expect("every day has hours");
        let hours = m.hours() as usize;
        let agg = |s: &BTreeMap<YearMonth, HourlySeries>, r| {
            monthly_aggregate(&s[m], r, hours).value.expect("hours")
        };
        out.insert(
            *m,
            [agg(&wind, Reducer::Mean), agg(&tcdc, Reducer::Mean), agg(&acpc, Reducer::Sum), dd.hdd, dd.cdd],
        );
    }
    Ok(out)
}

/// Writes a complete input set plus `config.json` into `dir`.
pub fn write_city(dir: &Path, cfg: &CityConfig) -> Result<City> {
    fs::create_dir_all(dir.join("scenes")).map_err(|e| Error::io(dir, e))?;
    let mut rng = SeededRng::new(cfg.seed);
    let layout = Layout::new(cfg.buildings)?;
    let months = months_from(cfg.start, cfg.months);
    let nb = cfg.buildings;
    let keys: Vec<BuildingKey> = (0..nb)
        .map(|b| BuildingKey {
            bbl: format!("1{:05}{:04}", 100 + b, 1 + b % 7),
            bin: format!("1{:06}", 1000 + b),
        })
        .collect();

    // Footprints, plus one feature without a bbl that ingestion must skip.
    let mut features = Vec::new();
    for (b, key) in keys.iter().enumerate() {
        let (main, shed) = footprint_ring(&mut rng, layout.center(b));
        let geometry = if b % 10 == 3 {
            json!({"type": "MultiPolygon", "coordinates": [[shed], [main]]})
        } else {
            json!({"type": "Polygon", "coordinates": [main]})
        };
        features.push(
            json!({"type": "Feature", "properties": {"bbl": key.bbl, "bin": key.bin}, "geometry": geometry}),
        );
    }
    let (stray, _) = footprint_ring(&mut rng, layout.center(0));
    features.push(json!({"type": "Feature", "properties": {"bin": "9999999"}, "geometry": {"type": "Polygon", "coordinates": [stray]}}));
    write(
        &dir.join("footprints.geojson"),
        serde_json::to_vec(&json!({"type": "FeatureCollection", "features": features})).expect("json"),
    )?;

    // Static attributes.
    let area_m2: Vec<f64> = (0..nb).map(|_| rng.uniform_range(1000.0, 20000.0)).collect();
    let elevation: Vec<f64> = (0..nb).map(|_| rng.uniform_range(2.0, 60.0)).collect();
    let assess: Vec<f64> = (0..nb).map(|_| (rng.gaussian(2e7, 8e6)).max(1e6).round()).collect();
    let year_built: Vec<f64> = (0..nb).map(|_| (1900 + rng.below(116)) as f64).collect();
    let mut no_attributes = BTreeSet::new();
    while no_attributes.len() < cfg.missing_attributes.min(nb) {
        no_attributes.insert(rng.below(nb));
    }
    let attr_rows: Vec<Vec<String>> = (0..nb)
        .filter(|b| !no_attributes.contains(b))
        .map(|b| {
            vec![
                keys[b].bbl.clone(),
                keys[b].bin.clone(),
                g17(area_m2[b] / SQFT_TO_M2),
                g17(assess[b]),
                g17(year_built[b]),
            ]
        })
        .collect();
    write(
        &dir.join("attributes.csv"),
        csv_text(&["bbl", "bin", "bldgarea_sqft", "assesstot_usd", "yearbuilt"], &attr_rows),
    )?;

    let mut dem = RasterGrid::filled(layout.geometry, DEFAULT_NODATA, 10.0);
    for (b, &z) in elevation.iter().enumerate() {
        let (c, r) = layout.cell(b);
        dem.set(c, r, z);
    }
    write_grid(&dem, &dir.join("dem.asc"))?;

    // Scenes: two Sentinel-2 passes and one night-lights composite per month.
    let mut x: BTreeMap<(usize, YearMonth), FeatureValues> = BTreeMap::new();
    let mut s2 = Vec::new();
    let mut viirs = Vec::new();
    for m in &months {
        let mut sums = vec![[0.0f64; 3]; nb];
        let mut clear = vec![0usize; nb];
        for (pass, day) in [(0, 5), (1, 20)] {
            let id = format!("S2_{m}_{pass}");
            let mut grids: BTreeMap<&str, RasterGrid> = ["B1", "B11", "B4", "B8", "QA60"]
                .into_iter()
                .map(|n| {
                    (
                        n,
                        RasterGrid::filled(
                            layout.geometry,
                            DEFAULT_NODATA,
                            if n == "QA60" { 0.0 } else { 100.0 },
                        ),
                    )
                })
                .collect();
            for b in 0..nb {
                let (c, r) = layout.cell(b);
                let b1 = rng.gaussian(FEATURE_SCALE[1].0, FEATURE_SCALE[1].1);
                let b11 = rng.gaussian(FEATURE_SCALE[2].0, FEATURE_SCALE[2].1);
                let n = rng.gaussian(FEATURE_SCALE[3].0, FEATURE_SCALE[3].1).clamp(-0.8, 0.8);
                let red = rng.uniform_range(200.0, 2000.0);
                let nir = red * (1.0 + n) / (1.0 - n);
                let cloudy = rng.uniform() < cfg.cloud_probability;
                // Bit 3 is not a cloud bit and must not mask anything.
                let qa = match (cloudy, rng.below(3)) {
                    (true, 0) => 2048.0,
                    (true, _) => 1024.0,
                    (false, 0) => 8.0,
                    (false, _) => 0.0,
                };
                for (name, v) in [("B1", b1), ("B11", b11), ("B4", red), ("B8", nir), ("QA60", qa)] {
                    grids.get_mut(name).expect("band").set(c, r, v);
                }
                if !cloudy {
                    clear[b] += 1;
                    sums[b][0] += b1;
                    sums[b][1] += b11;
                    // The index as the pipeline computes it from the written bands.
                    sums[b][2] += (nir - red) / (nir + red);
                }
            }
            let mut bands = serde_json::Map::new();
            for (name, grid) in &grids {
                if *name == "QA60" || (!cfg.all_bands && (*name == "B1" || *name == "B11")) {
                    continue;
                }
                let rel = format!("scenes/{id}_{name}.asc");
                write_grid(grid, &dir.join(&rel))?;
                bands.insert(name.to_string(), json!(rel));
            }
            let mask = format!("scenes/{id}_QA60.asc");
            write_grid(&grids["QA60"], &dir.join(&mask))?;
            s2.push(json!({
                "scene_id": id,
                "timestamp": format!("{}-{:02}-{:02}T15:40:00Z", m.year, m.month, day),
                "bands": bands,
                "mask": mask,
            }));
        }
        let mut lights = RasterGrid::filled(layout.geometry, DEFAULT_NODATA, 5.0);
        for b in 0..nb {
            let (c, r) = layout.cell(b);
            let v = rng.gaussian(FEATURE_SCALE[0].0, FEATURE_SCALE[0].1).max(0.5);
            lights.set(c, r, v);
            let mut f: FeatureValues = [None; 12];
            f[Feature::AvgRad.index()] = Some(v);
            if clear[b] > 0 && cfg.all_bands {
                let k = clear[b] as f64;
                f[Feature::B1.index()] = Some(sums[b][0] / k);
                f[Feature::B11.index()] = Some(sums[b][1] / k);
            }
            if clear[b] > 0 {
                f[Feature::Ndvi.index()] = Some(sums[b][2] / clear[b] as f64);
            }
            f[Feature::Elevation.index()] = Some(elevation[b]);
            f[Feature::AssessTot.index()] = Some(assess[b]);
            f[Feature::YearBuilt.index()] = Some(year_built[b]);
            x.insert((b, *m), f);
        }
        let id = format!("VIIRS_{m}");
        let rel = format!("scenes/{id}_avg_rad.asc");
        write_grid(&lights, &dir.join(&rel))?;
        viirs.push(json!({
            "scene_id": id,
            "timestamp": format!("{}-{:02}-15T00:00:00Z", m.year, m.month),
            "bands": {"avg_rad": rel},
        }));
    }
    write(&dir.join("sentinel2.json"), serde_json::to_vec_pretty(&Value::Array(s2)).expect("json"))?;
    write(&dir.join("viirs.json"), serde_json::to_vec_pretty(&Value::Array(viirs)).expect("json"))?;

    // Reanalysis as a long table of pre-sampled cell series.
    let n = cfg.reanalysis_cells.max(1);
    let mut table = String::from("timestamp,variable,cell_x,cell_y,value\n");
    let mut climate = BTreeMap::new();
    for iy in 0..n {
        for ix in 0..n {
            let cc = cell_climate(&mut rng, &months);
            let center = layout.climate_center(ix, iy, n);
            let (cx, cy) = (g17(center.x), g17(center.y));
            for (var, values) in
                [("TMP", &cc.tmp), ("WIND", &cc.wind), ("TCDC", &cc.tcdc), ("ACPC01", &cc.acpc)]
            {
                for (t, v) in cc.timestamps.iter().zip(values.iter()) {
                    let ts = chrono::DateTime::from_timestamp(*t, 0)
                        .expect("in range")
                        .format("%Y-%m-%dT%H:%M:%SZ");
                    table.push_str(&format!("{ts},{var},{cx},{cy},{}\n", g17_opt(*v)));
                }
            }
            climate.insert((ix, iy), climate_truth(&cc, &months)?);
        }
    }
    write(&dir.join("reanalysis.csv"), table)?;
    for ((b, m), f) in x.iter_mut() {
        let c = climate[&layout.climate_cell(*b, n)][m];
        for (feat, v) in
            [Feature::Wind, Feature::Tcdc, Feature::Acpc01, Feature::Hdd, Feature::Cdd].into_iter().zip(c)
        {
            f[feat.index()] = Some(v);
        }
    }

    // Energy with seeded attrition.
    let beta_e = BETA_ELECTRIC;
    let beta_g = BETA_GAS;
    let mut cells: Vec<(usize, YearMonth)> = x.keys().copied().collect();
    cells.sort();
    let mut duplicated = BTreeSet::new();
    while duplicated.len() < cfg.duplicate_rows.min(cells.len()) {
        duplicated.insert(rng.below(cells.len()));
    }
    let mut zero = BTreeSet::new();
    while zero.len() < cfg.zero_energy_rows.min(cells.len()) {
        let i = rng.below(cells.len());
        if !duplicated.contains(&i) {
            zero.insert(i);
        }
    }
    let mut energy_rows = Vec::new();
    let mut truth = Truth { beta_electric: beta_e, beta_gas: beta_g, ..Truth::default() };
    let record =
        |cause: AttritionCause, t: &mut Truth, k: usize| *t.dropped.entry(cause.name()).or_default() += k;
    for (i, &(b, m)) in cells.iter().enumerate() {
        let f = x[&(b, m)];
        let complete = f.iter().all(Option::is_some);
        let eps_e = cfg.noise_sd * rng.normal();
        let eps_g = cfg.noise_sd * rng.normal();
        let gas_missing = rng.uniform() < 0.03;
        let (ye, yg) = if complete {
            (linear(&beta_e, MEAN_Y_ELECTRIC, &f) + eps_e, linear(&beta_g, MEAN_Y_GAS, &f) + eps_g)
        } else {
            (MEAN_Y_ELECTRIC + eps_e, MEAN_Y_GAS + eps_g)
        };
        let (elec, gas) = if zero.contains(&i) {
            (Some(0.0), Some(0.0))
        } else {
            (Some(ye.exp() * area_m2[b]), (!gas_missing).then(|| yg.exp() * area_m2[b]))
        };
        let row = vec![
            keys[b].bbl.clone(),
            keys[b].bin.clone(),
            m.year.to_string(),
            m.month.to_string(),
            g17_opt(elec),
            g17_opt(gas),
        ];
        let copies = if duplicated.contains(&i) { 2 } else { 1 };
        for _ in 0..copies {
            energy_rows.push(row.clone());
        }
        truth.rows_in += copies;
        // Independent replay of the join's first-match attrition order.
        if copies > 1 {
            record(AttritionCause::DuplicateId, &mut truth, copies);
        } else if no_attributes.contains(&b) {
            record(AttritionCause::JoinFailure, &mut truth, 1);
        } else if !complete {
            record(AttritionCause::MissingRemoteData, &mut truth, 1);
        } else if zero.contains(&i) {
            record(AttritionCause::ZeroEnergy, &mut truth, 1);
        } else {
            truth.rows.insert((keys[b].clone(), m), (f, Some(ye), (!gas_missing).then_some(yg)));
        }
    }
    // Energy for a building that has no footprint.
    for m in months.iter().take(3) {
        energy_rows.push(vec![
            "1999990001".into(),
            "1999999".into(),
            m.year.to_string(),
            m.month.to_string(),
            "1.5".into(),
            "".into(),
        ]);
        truth.rows_in += 1;
        record(AttritionCause::JoinFailure, &mut truth, 1);
    }
    write(
        &dir.join("energy.csv"),
        csv_text(&["bbl", "bin", "year", "month", "electricity_mwh", "gas_mwh"], &energy_rows),
    )?;

    let config = json!({
        "footprints": "footprints.geojson",
        "attributes": "attributes.csv",
        "energy": "energy.csv",
        "scenes": ["sentinel2.json", "viirs.json"],
        "reanalysis": "reanalysis.csv",
        "static_layers": {"elevation": "dem.asc"},
        "output_dir": "out",
        "seed": cfg.seed,
    });
    let config_path = dir.join("config.json");
    write(&config_path, serde_json::to_vec_pretty(&config).expect("json"))?;
    Ok(City { dir: dir.to_path_buf(), config_path, truth, keys })
}

/// Sylvester Hadamard matrix of order `n` (a power of two).
fn hadamard(n: usize) -> Vec<Vec<f64>> {
    let mut h = vec![vec![1.0]];
    while h.len() < n {
        let m = h.len();
        let mut next = vec![vec![0.0; 2 * m]; 2 * m];
        for i in 0..m {
            for j in 0..m {
                next[i][j] = h[i][j];
                next[i][j + m] = h[i][j];
                next[i + m][j] = h[i][j];
                next[i + m][j + m] = -h[i][j];
            }
        }
        h = next;
    }
    h
}

/// Features whose values follow the regime.
pub const REGIME_FEATURES: [Feature; 7] =
    [Feature::B1, Feature::B11, Feature::Ndvi, Feature::Wind, Feature::Tcdc, Feature::Acpc01, Feature::Hdd];

#[derive(Debug, Clone)]
pub struct RegimeConfig {
    pub buildings: usize,
    pub months: usize,
    /// A power of two no larger than eight.
    pub regimes: usize,
    /// `true`: each building steps through the regimes month by month from
    /// a random phase. `false`: each building keeps one regime.
    pub cycle: bool,
    /// Within-regime spread relative to the distance between regime centers.
    pub within_sd: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl RegimeConfig {
    pub fn new(buildings: usize, months: usize, regimes: usize, seed: u64) -> Self {
        RegimeConfig { buildings, months, regimes, cycle: true, within_sd: 0.1, noise_sd: 0.05, seed }
    }
}

#[derive(Debug, Clone)]
pub struct RegimeTable {
    pub rows: Vec<FeatureRow>,
    /// Generator regime of each row.
    pub regimes: Vec<usize>,
}

/// A feature table in which regime-driven features sit at orthogonal ±1
/// patterns (Hadamard columns), so the regimes are equally far apart and
/// the driven features are uncorrelated across regimes.
pub fn regime_table(cfg: &RegimeConfig) -> Result<RegimeTable> {
    if !(cfg.regimes.is_power_of_two() && (2..=8).contains(&cfg.regimes)) {
        return Err(Error::config("regimes must be 2, 4 or 8"));
    }
    let mut rng = SeededRng::new(cfg.seed);
    let h = hadamard(cfg.regimes);
    let months = months_from(YearMonth { year: 2018, month: 1 }, cfg.months);
    let mut rows = Vec::new();
    let mut regimes = Vec::new();
    for b in 0..cfg.buildings {
        let key = BuildingKey { bbl: format!("2{:05}{:04}", b, 1), bin: format!("2{:06}", b) };
        let phase = rng.below(cfg.regimes);
        let static_vals: Vec<f64> = [Feature::Elevation, Feature::AssessTot, Feature::YearBuilt]
            .iter()
            .map(|f| rng.gaussian(FEATURE_SCALE[f.index()].0, FEATURE_SCALE[f.index()].1))
            .collect();
        for (mi, m) in months.iter().enumerate() {
            let regime = if cfg.cycle { (phase + mi) % cfg.regimes } else { phase };
            let mut f: FeatureValues = [None; 12];
            for (j, feat) in REGIME_FEATURES.iter().enumerate() {
                let (mean, sd) = FEATURE_SCALE[feat.index()];
                let pattern = h[regime][1 + j % (cfg.regimes - 1)];
                f[feat.index()] = Some(mean + sd * (pattern + cfg.within_sd * rng.normal()));
            }
            for feat in [Feature::AvgRad, Feature::Cdd] {
                let (mean, sd) = FEATURE_SCALE[feat.index()];
                f[feat.index()] = Some(rng.gaussian(mean, sd));
            }
            f[Feature::Elevation.index()] = Some(static_vals[0]);
            f[Feature::AssessTot.index()] = Some(static_vals[1]);
            f[Feature::YearBuilt.index()] = Some(static_vals[2]);
            let ye = linear(&BETA_ELECTRIC, MEAN_Y_ELECTRIC, &f) + cfg.noise_sd * rng.normal();
            let yg = linear(&BETA_GAS, MEAN_Y_GAS, &f) + cfg.noise_sd * rng.normal();
            rows.push(FeatureRow {
                key: key.clone(),
                month: *m,
                features: f,
                y_electric: Some(ye),
                y_gas: Some(yg),
            });
            regimes.push(regime);
        }
    }
    Ok(RegimeTable { rows, regimes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hadamard_columns_are_orthogonal() {
        let h = hadamard(8);
        for a in 0..8 {
            for b in 0..8 {
                let dot: f64 = (0..8).map(|i| h[i][a] * h[i][b]).sum();
                assert_eq!(dot, if a == b { 8.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn regimes_cycle_through_every_state() {
        let t = regime_table(&RegimeConfig::new(3, 16, 8, 1)).unwrap();
        for b in 0..3 {
            let seen: BTreeSet<usize> = t.regimes[b * 16..(b + 1) * 16].iter().copied().collect();
            assert_eq!(seen.len(), 8);
        }
        assert!(regime_table(&RegimeConfig::new(3, 16, 3, 1)).is_err());
    }

    #[test]
    fn layout_keeps_regions_inside_one_cell() {
        let l = Layout::new(100).unwrap();
        assert_eq!(l.side, 10);
        assert_eq!(l.climate_cell(0, 2), (0, 0));
        assert_eq!(l.climate_cell(99, 2), (1, 1));
        let c = l.center(0);
        assert!((c.x - (LON0 + 1.5 * CELL_DEG)).abs() < 1e-12);
    }
}
