//! Scene manifests: one JSON object per delivered scene, or an array of them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use emc_core::geo::{LocalProjection, Point, Polygon};
use emc_core::raster::{apply_bitmask, ndvi, CrsTag, MaskScheme, QualityMask, RasterGrid};
use serde::{Deserialize, Serialize};

use crate::asc::load_grid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneManifest {
    pub scene_id: String,
    /// ISO-8601 instant; a missing offset means UTC.
    pub timestamp: String,
    pub bands: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub mask: Option<PathBuf>,
    /// Falls back to the run's configured scheme when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_scheme: Option<String>,
    /// `"wgs84"` (default) or `"local-metric"`.
    #[serde(default)]
    pub crs: Option<String>,
    /// (lon, lat) origin of a local-metric grid frame.
    #[serde(default)]
    pub projection_origin: Option<[f64; 2]>,
}

/// A manifest with its timestamp parsed and paths resolved.
#[derive(Debug, Clone)]
pub struct Scene {
    pub manifest: SceneManifest,
    pub timestamp: i64,
    pub crs: CrsTag,
    pub frame: Option<LocalProjection>,
    pub mask_scheme: MaskScheme,
    base_dir: PathBuf,
}

/// Parses an ISO-8601 timestamp to Unix seconds. Accepts RFC 3339, naive
/// date-times (taken as UTC) down to hour precision, and plain dates.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.timestamp());
    }
    let trimmed = s.trim_end_matches('Z');
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(trimmed, fmt) {
            return Some(t.and_utc().timestamp());
        }
    }
    if let Ok(t) = NaiveDateTime::parse_from_str(&format!("{trimmed}:00"), "%Y-%m-%dT%H:%M") {
        return Some(t.and_utc().timestamp());
    }
    NaiveDate::parse_from_str(trimmed, "%Y-%m-%d")
        .ok()
        .map(|d| d.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp())
}

impl Scene {
    fn resolve(manifest: SceneManifest, base_dir: &Path, default_scheme: MaskScheme) -> Result<Self> {
        let id = manifest.scene_id.clone();
        let timestamp = parse_timestamp(&manifest.timestamp).ok_or_else(|| {
            Error::data(format!("timestamp `{}` is not ISO-8601", manifest.timestamp)).entity(&id)
        })?;
        let crs = match &manifest.crs {
            None => CrsTag::Wgs84,
            Some(name) => CrsTag::from_name(name).map_err(|e| Error::from(e).entity(&id))?,
        };
        let frame = match (crs, manifest.projection_origin) {
            (CrsTag::Wgs84, _) => None,
            (CrsTag::LocalMetric, Some([lon, lat])) => Some(LocalProjection::new(Point::new(lon, lat))?),
            (CrsTag::LocalMetric, None) => {
                return Err(Error::data("local-metric scene needs `projection_origin`").entity(&id))
            }
        };
        let mask_scheme = match &manifest.mask_scheme {
            None => default_scheme,
            Some(name) => MaskScheme::from_name(name).map_err(|e| Error::from(e).entity(&id))?,
        };
        Ok(Scene { manifest, timestamp, crs, frame, mask_scheme, base_dir: base_dir.to_path_buf() })
    }

    pub fn id(&self) -> &str {
        &self.manifest.scene_id
    }

    pub fn has_band(&self, name: &str) -> bool {
        self.manifest.bands.contains_key(name)
    }

    fn path(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    /// Loads a band with the scene's quality mask applied.
    pub fn load_band(&self, name: &str) -> Result<RasterGrid> {
        let rel = self
            .manifest
            .bands
            .get(name)
            .ok_or_else(|| Error::data(format!("scene has no band `{name}`")).entity(self.id()))?;
        let grid = load_grid(&self.path(rel), self.crs)?;
        match &self.manifest.mask {
            None => Ok(grid),
            Some(mask_path) => {
                let bits = load_grid(&self.path(mask_path), self.crs)?;
                if !bits.geometry.aligned_with(&grid.geometry) {
                    return Err(
                        Error::data(format!("mask is not aligned with band `{name}`")).entity(self.id())
                    );
                }
                let mask = QualityMask::from_grid(&bits, self.mask_scheme);
                Ok(apply_bitmask(&grid, &mask)?)
            }
        }
    }

    /// Masked NDVI from the named near-infrared and red bands.
    pub fn load_ndvi(&self, nir: &str, red: &str) -> Result<RasterGrid> {
        let (n, r) = (self.load_band(nir)?, self.load_band(red)?);
        ndvi(&n, &r).map_err(|e| Error::from(e).entity(self.id()))
    }

    /// The capture region expressed in this scene's grid frame.
    pub fn region_in_frame(&self, buffered_lonlat: &Polygon) -> Result<Polygon> {
        match &self.frame {
            None => Ok(buffered_lonlat.clone()),
            Some(p) => Ok(p.project_polygon(buffered_lonlat)?),
        }
    }
}

/// Loads a manifest file holding a scene object or an array of scenes.
/// Band and mask paths are resolved against the manifest's directory.
pub fn load_scenes(path: &Path, default_scheme: MaskScheme) -> Result<Vec<Scene>> {
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_slice(&text).map_err(|e| Error::parse(path, e))?;
    let manifests: Vec<SceneManifest> = if value.is_array() {
        serde_json::from_value(value)
    } else {
        serde_json::from_value(value).map(|m| vec![m])
    }
    .map_err(|e| Error::parse(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut scenes =
        manifests.into_iter().map(|m| Scene::resolve(m, base, default_scheme)).collect::<Result<Vec<_>>>()?;
    scenes.sort_by(|a, b| (a.timestamp, a.id()).cmp(&(b.timestamp, b.id())));
    Ok(scenes)
}
