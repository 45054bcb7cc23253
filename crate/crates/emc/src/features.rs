//! `features`: footprints → capture regions → raster and climate sampling → joined table.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use emc_core::climate::MonthlyClimate;
use emc_core::dataset::{assemble, Assembly, BuildingKey, EnvironmentTable, Feature, FeatureValues};
use emc_core::geo::{capture_region, CaptureRegion, LocalProjection, Polygon};
use emc_core::raster::{monthly_composite, CrsTag, GridGeometry, RasterGrid, ZonalStatistic, ZonalWeights};
use emc_core::time::YearMonth;
use rayon::prelude::*;
use serde_json::json;

use crate::asc::load_grid;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::geojson::{feature, feature_collection, parse_footprints, polygon_geometry, IngestionReport};
use crate::manifest::load_scenes;
use crate::reanalysis::{monthly_climate, Reanalysis};
use crate::report::{Recorder, RunReport};
use crate::tables::{feature_table_schema, format_feature_table, read_attributes, read_energy};

pub const FEATURE_TABLE: &str = "features.csv";
pub const FEATURE_SCHEMA: &str = "features.schema.json";
pub const CAPTURE_GEOJSON: &str = "capture_regions.geojson";

/// A scene's rasters, loaded once and shared by every building.
struct SceneLayers {
    month: YearMonth,
    frame: Option<LocalProjection>,
    layers: Vec<(Feature, RasterGrid)>,
}

/// Static (month-invariant) rasters.
struct StaticLayer {
    feature: Feature,
    grid: RasterGrid,
}

/// Zonal weights per grid geometry and frame, reused across scenes that
/// share them.
type FrameKey = Option<(u64, u64)>;

#[derive(Default)]
struct WeightCache {
    entries: Vec<(FrameKey, GridGeometry, Option<ZonalWeights>)>,
}

fn frame_key(frame: &Option<LocalProjection>) -> FrameKey {
    frame.as_ref().map(|f| (f.origin().x.to_bits(), f.origin().y.to_bits()))
}

impl WeightCache {
    /// `None` when the region lies outside the grid: a missing value, not an error.
    fn get(
        &mut self,
        frame: &Option<LocalProjection>,
        geometry: &GridGeometry,
        region_lonlat: &Polygon,
    ) -> Result<Option<&ZonalWeights>> {
        let key = frame_key(frame);
        let pos = self.entries.iter().position(|(k, g, _)| *k == key && g == geometry);
        let pos = match pos {
            Some(p) => p,
            None => {
                let region = match frame {
                    None => region_lonlat.clone(),
                    Some(f) => f.project_polygon(region_lonlat)?,
                };
                let w = match ZonalWeights::new(geometry, &region) {
                    Ok(w) => Some(w),
                    Err(emc_core::Error::OutOfExtent) => None,
                    Err(e) => return Err(e.into()),
                };
                self.entries.push((key, *geometry, w));
                self.entries.len() - 1
            }
        };
        Ok(self.entries[pos].2.as_ref())
    }
}

/// Everything the environment extraction needs, loaded up front.
struct Sources {
    scenes: Vec<SceneLayers>,
    statics: Vec<StaticLayer>,
    reanalysis: Option<Reanalysis>,
}

fn load_sources(cfg: &RunConfig) -> Result<Sources> {
    let scheme = cfg.mask()?;
    let mut all = Vec::new();
    for path in &cfg.scenes {
        all.extend(load_scenes(path, scheme)?);
    }
    all.sort_by(|a, b| (a.timestamp, a.id()).cmp(&(b.timestamp, b.id())));
    let band_features: Vec<(Feature, &str)> = cfg
        .bands
        .iter()
        .map(|(f, b)| (Feature::from_name(f).expect("validated feature name"), b.as_str()))
        .collect();
    let scenes = all
        .par_iter()
        .map(|scene| -> Result<SceneLayers> {
            let mut layers = Vec::new();
            for &(feature, band) in &band_features {
                if scene.has_band(band) {
                    layers.push((feature, scene.load_band(band)?));
                }
            }
            if scene.has_band(&cfg.ndvi.nir) && scene.has_band(&cfg.ndvi.red) {
                layers.push((Feature::Ndvi, scene.load_ndvi(&cfg.ndvi.nir, &cfg.ndvi.red)?));
            }
            Ok(SceneLayers { month: YearMonth::of_timestamp(scene.timestamp, 0), frame: scene.frame, layers })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.stage("raster"))?;
    let statics = cfg
        .static_layers
        .iter()
        .map(|(name, path)| {
            let feature = Feature::from_name(name).expect("validated feature name");
            Ok(StaticLayer { feature, grid: load_grid(path, CrsTag::Wgs84)? })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.stage("raster"))?;
    let reanalysis = match &cfg.reanalysis {
        None => None,
        Some(p) if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) => {
            Some(Reanalysis::load_table(p).map_err(|e| e.stage("climate"))?)
        }
        Some(p) => Some(Reanalysis::load_index(p).map_err(|e| e.stage("climate"))?),
    };
    Ok(Sources { scenes, statics, reanalysis })
}

fn raster_features(
    region_lonlat: &Polygon,
    sources: &Sources,
    months: &[YearMonth],
) -> Result<BTreeMap<YearMonth, FeatureValues>> {
    let mut cache = WeightCache::default();
    let mut per_month: BTreeMap<(YearMonth, Feature), Vec<ZonalStatistic>> = BTreeMap::new();
    let wanted: BTreeSet<YearMonth> = months.iter().copied().collect();
    for scene in sources.scenes.iter().filter(|s| wanted.contains(&s.month)) {
        for (feature, grid) in &scene.layers {
            let stat = match cache.get(&scene.frame, &grid.geometry, region_lonlat)? {
                Some(w) => w.reduce(grid)?,
                None => ZonalStatistic::MISSING,
            };
            per_month.entry((scene.month, *feature)).or_default().push(stat);
        }
    }
    let mut statics = [None; 12];
    for layer in &sources.statics {
        statics[layer.feature.index()] = match cache.get(&None, &layer.grid.geometry, region_lonlat)? {
            Some(w) => w.reduce(&layer.grid)?.value,
            None => None,
        };
    }
    let mut out = BTreeMap::new();
    for &m in months {
        let mut values = statics;
        for ((month, feature), stats) in per_month.range((m, Feature::ALL[0])..=(m, Feature::ALL[11])) {
            debug_assert_eq!(*month, m);
            values[feature.index()] = monthly_composite(stats).value;
        }
        out.insert(m, values);
    }
    Ok(out)
}

fn apply_climate(values: &mut FeatureValues, c: &MonthlyClimate) {
    values[Feature::Hdd.index()] = c.hdd;
    values[Feature::Cdd.index()] = c.cdd;
    values[Feature::Wind.index()] = c.wind;
    values[Feature::Tcdc.index()] = c.tcdc;
    values[Feature::Acpc01.index()] = c.acpc01;
}

/// Monthly environmental features for every capture region.
fn environment(
    captures: &[(BuildingKey, CaptureRegion)],
    sources: &Sources,
    months: &[YearMonth],
    cfg: &RunConfig,
) -> Result<EnvironmentTable> {
    let dd = cfg.degree_day_config();
    let per_building = captures
        .par_iter()
        .map(|(key, region)| -> Result<Vec<((BuildingKey, YearMonth), FeatureValues)>> {
            let lonlat = region.buffered_lonlat();
            let mut table = raster_features(&lonlat, sources, months)
                .map_err(|e| e.stage("raster").entity(key.to_string()))?;
            if let Some(r) = &sources.reanalysis {
                let series = r
                    .sample(&lonlat, &region.projection)
                    .map_err(|e| e.stage("climate").entity(key.to_string()))?;
                for (m, c) in monthly_climate(&series, months, &dd) {
                    if let Some(v) = table.get_mut(&m) {
                        apply_climate(v, &c);
                    }
                }
            }
            Ok(table.into_iter().map(|(m, v)| ((key.clone(), m), v)).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_building.into_iter().flatten().collect())
}

#[derive(Debug, Clone)]
pub struct FeaturesOutcome {
    pub assembly: Assembly,
    pub ingestion: IngestionReport,
    pub report: RunReport,
}

/// Runs the whole extraction and writes the feature table, its schema and
/// `report_features.json` into the output directory.
pub fn run_features(cfg: &RunConfig) -> Result<FeaturesOutcome> {
    cfg.validate()?;
    cfg.require(&[
        ("footprints", &cfg.footprints),
        ("attributes", &cfg.attributes),
        ("energy", &cfg.energy),
    ])?;
    if let Some(r) = &cfg.reanalysis {
        if !r.exists() {
            return Err(Error::config(format!("reanalysis: {} does not exist", r.display())).stage("config"));
        }
    }
    let norm = cfg.key_normalization.into();
    let mut rec = Recorder::new("features", cfg.seed);

    let (footprints, ingestion) = rec.time("ingest", || {
        let path = cfg.footprints.as_deref().expect("required");
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        parse_footprints(&bytes)
    })?;
    let captures = rec.time("geo", || {
        footprints
            .par_iter()
            .map(|f| {
                let key = BuildingKey::new(&f.bbl, &f.bin, &norm);
                capture_region(f, cfg.buffer_radius_m, cfg.arc_segments)
                    .map(|c| (key.clone(), c))
                    .map_err(|e| Error::from(e).entity(key.to_string()))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let (energy, attributes) = rec.time("ingest", || {
        Ok((
            read_energy(cfg.energy.as_deref().expect("required"), &norm)?,
            read_attributes(cfg.attributes.as_deref().expect("required"), &norm)?,
        ))
    })?;
    let months: Vec<YearMonth> =
        energy.iter().map(|e| e.month).collect::<BTreeSet<_>>().into_iter().collect();
    let sources = rec.time("raster", || load_sources(cfg))?;

    // Duplicated footprints are dropped at assembly; sample each key once.
    let mut seen = BTreeSet::new();
    let unique: Vec<(BuildingKey, CaptureRegion)> =
        captures.iter().filter(|(k, _)| seen.insert(k.clone())).cloned().collect();
    let env = rec.time("climate", || environment(&unique, &sources, &months, cfg))?;

    let keys: Vec<BuildingKey> = captures.into_iter().map(|(k, _)| k).collect();
    let assembly = rec.time("dataset", || Ok(assemble(&keys, &energy, &attributes, &env)?))?;

    let dir = &cfg.output_dir;
    rec.write(dir, FEATURE_TABLE, &format_feature_table(&assembly.rows))?;
    let mut schema = serde_json::to_string_pretty(&feature_table_schema()).expect("schema serializes");
    schema.push('\n');
    rec.write(dir, FEATURE_SCHEMA, schema.as_bytes())?;
    rec.write(dir, CAPTURE_GEOJSON, &capture_geojson(&unique))?;

    let details = json!({
        "buildings": keys.len(),
        "months": months.iter().map(|m| m.to_string()).collect::<Vec<_>>(),
        "ingestion": {
            "features_in": ingestion.features_in,
            "records": ingestion.records,
            "skipped": ingestion.skipped.iter().map(|s| json!({"index": s.index, "bbl": s.bbl, "reason": s.reason})).collect::<Vec<_>>(),
        },
        "attrition": attrition_json(&assembly),
    });
    let report = rec.finish(dir, details)?;
    Ok(FeaturesOutcome { assembly, ingestion, report })
}

/// Buffered capture regions in lon/lat, one feature per building.
pub fn capture_geojson(captures: &[(BuildingKey, CaptureRegion)]) -> Vec<u8> {
    let features = captures
        .iter()
        .map(|(key, c)| {
            let mut props = serde_json::Map::new();
            props.insert("bbl".into(), json!(key.bbl));
            props.insert("bin".into(), json!(key.bin));
            props.insert("buffer_radius_m".into(), json!(c.buffer_radius));
            feature(polygon_geometry(&c.buffered_lonlat()), props)
        })
        .collect();
    let mut text = serde_json::to_string(&feature_collection(features)).expect("GeoJSON serializes");
    text.push('\n');
    text.into_bytes()
}

pub fn attrition_json(a: &Assembly) -> serde_json::Value {
    let r = &a.attrition;
    let causes: serde_json::Map<String, serde_json::Value> = emc_core::dataset::AttritionCause::ORDER
        .iter()
        .map(|&c| (c.name().to_string(), json!({"count": r.count(c), "fraction": r.fraction(c)})))
        .collect();
    json!({
        "rows_in": r.rows_in,
        "survivors": r.survivors,
        "survivor_fraction": r.survivor_fraction(),
        "dropped": causes,
    })
}

/// Feature table location inside an output directory.
pub fn feature_table_path(dir: &Path) -> std::path::PathBuf {
    dir.join(FEATURE_TABLE)
}
