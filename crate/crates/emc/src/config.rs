//! Run configuration: one JSON document, paths relative to its directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use emc_core::climate::{DegreeDayConfig, DEFAULT_DEGREE_DAY_BASE_C, DEFAULT_MIN_VALID_HOURS};
use emc_core::dataset::{Feature, KeyNormalization, Target};
use emc_core::emc::{CovarianceKind, GmmConfig, DEFAULT_COVARIANCE_FLOOR, DEFAULT_MAX_ITER, DEFAULT_TOL};
use emc_core::geo::{DEFAULT_ARC_SEGMENTS, DEFAULT_BUFFER_RADIUS_M};
use emc_core::raster::MaskScheme;
use emc_core::stats::{ColumnTransform, DEFAULT_VIF_THRESHOLD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DegreeDaySettings {
    pub base_c: f64,
    pub min_valid_hours: usize,
    /// Day boundaries in local time at this UTC offset.
    pub utc_offset_hours: i32,
    pub per_day: bool,
}

impl Default for DegreeDaySettings {
    fn default() -> Self {
        DegreeDaySettings {
            base_c: DEFAULT_DEGREE_DAY_BASE_C,
            min_valid_hours: DEFAULT_MIN_VALID_HOURS,
            utc_offset_hours: 0,
            per_day: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NdviBands {
    pub nir: String,
    pub red: String,
}

impl Default for NdviBands {
    fn default() -> Self {
        NdviBands { nir: "B8".into(), red: "B4".into() }
    }
}

/// Zero-padding widths applied to identifiers before joining.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KeySettings {
    pub bbl_width: Option<usize>,
    pub bin_width: Option<usize>,
}

impl From<KeySettings> for KeyNormalization {
    fn from(k: KeySettings) -> Self {
        KeyNormalization { bbl_width: k.bbl_width, bin_width: k.bin_width }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmcSettings {
    pub k: usize,
    pub covariance: String,
    pub max_iter: usize,
    pub tol: f64,
    pub covariance_floor: f64,
    /// Which regression result the contribution matrix is built from.
    pub target: String,
    pub transform: String,
    /// Columns left out of the contribution matrix.
    pub excluded: Vec<String>,
    /// Also exclude night lights and the two property attributes.
    pub environment_only: bool,
    /// "hard": a row visits its argmax component. "soft": it visits every
    /// component with responsibility at least `min_responsibility`.
    pub assignment: String,
    pub min_responsibility: f64,
}

impl Default for EmcSettings {
    fn default() -> Self {
        EmcSettings {
            k: 10,
            covariance: "diagonal".into(),
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
            covariance_floor: DEFAULT_COVARIANCE_FLOOR,
            target: "electric".into(),
            transform: "center".into(),
            excluded: Vec::new(),
            environment_only: false,
            assignment: "hard".into(),
            min_responsibility: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub footprints: Option<PathBuf>,
    pub attributes: Option<PathBuf>,
    pub energy: Option<PathBuf>,
    /// Scene manifest files (each an object or an array of scenes).
    pub scenes: Vec<PathBuf>,
    /// Grid-directory JSON index or long-format CSV.
    pub reanalysis: Option<PathBuf>,
    /// Time-invariant grids keyed by feature name (e.g. `elevation`).
    pub static_layers: BTreeMap<String, PathBuf>,
    pub output_dir: PathBuf,
    pub buffer_radius_m: f64,
    pub arc_segments: usize,
    pub degree_days: DegreeDaySettings,
    /// Default for manifests that do not name a scheme.
    pub mask_scheme: String,
    /// Feature name → band name for directly sampled scene bands.
    pub bands: BTreeMap<String, String>,
    pub ndvi: NdviBands,
    pub key_normalization: KeySettings,
    pub prune_vif: bool,
    pub vif_threshold: f64,
    pub targets: Vec<String>,
    pub transforms: Vec<String>,
    pub emc: EmcSettings,
    pub seed: u64,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let bands = [Feature::AvgRad, Feature::B1, Feature::B11]
            .into_iter()
            .map(|f| (f.name().to_string(), f.name().to_string()))
            .collect();
        RunConfig {
            footprints: None,
            attributes: None,
            energy: None,
            scenes: Vec::new(),
            reanalysis: None,
            static_layers: BTreeMap::new(),
            output_dir: PathBuf::from("out"),
            buffer_radius_m: DEFAULT_BUFFER_RADIUS_M,
            arc_segments: DEFAULT_ARC_SEGMENTS,
            degree_days: DegreeDaySettings::default(),
            mask_scheme: MaskScheme::S2_L1C_QA60.name.into(),
            bands,
            ndvi: NdviBands::default(),
            key_normalization: KeySettings::default(),
            prune_vif: true,
            vif_threshold: DEFAULT_VIF_THRESHOLD,
            targets: Target::ALL.iter().map(|t| t.name().to_string()).collect(),
            transforms: vec!["center".into(), "standardize".into()],
            emc: EmcSettings::default(),
            seed: 0,
            threads: None,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::config(msg).stage("config")
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_slice(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Makes every relative path relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.footprints, &mut self.attributes, &mut self.energy, &mut self.reanalysis]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        self.scenes.iter_mut().for_each(fix);
        self.static_layers.values_mut().for_each(fix);
        fix(&mut self.output_dir);
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.out {
            self.output_dir = out.clone();
        }
        if o.threads.is_some() {
            self.threads = o.threads;
        }
    }

    /// Range checks on every numeric parameter and name lookups.
    pub fn validate(&self) -> Result<()> {
        if !(self.buffer_radius_m.is_finite() && self.buffer_radius_m > 0.0) {
            return Err(invalid(format!("buffer_radius_m must be positive, got {}", self.buffer_radius_m)));
        }
        if self.arc_segments < 4 {
            return Err(invalid("arc_segments must be at least 4"));
        }
        let dd = &self.degree_days;
        if !dd.base_c.is_finite() {
            return Err(invalid("degree_days.base_c must be finite"));
        }
        if !(1..=24).contains(&dd.min_valid_hours) {
            return Err(invalid("degree_days.min_valid_hours must be in 1..=24"));
        }
        if !(-12..=14).contains(&dd.utc_offset_hours) {
            return Err(invalid("degree_days.utc_offset_hours must be in -12..=14"));
        }
        MaskScheme::from_name(&self.mask_scheme)
            .map_err(|_| invalid(format!("unknown mask_scheme `{}`", self.mask_scheme)))?;
        for feature in self.bands.keys().chain(self.static_layers.keys()) {
            match Feature::from_name(feature) {
                Some(Feature::AssessTot | Feature::YearBuilt | Feature::Ndvi) | None => {
                    return Err(invalid(format!("`{feature}` cannot be sampled from a raster layer")))
                }
                Some(_) => {}
            }
        }
        if !(self.vif_threshold.is_finite() && self.vif_threshold > 1.0) {
            return Err(invalid("vif_threshold must exceed 1"));
        }
        self.target_list()?;
        self.transform_list()?;
        let e = &self.emc;
        if e.k == 0 {
            return Err(invalid("emc.k must be at least 1"));
        }
        if e.max_iter == 0 || !(e.tol.is_finite() && e.tol > 0.0) {
            return Err(invalid("emc.max_iter and emc.tol must be positive"));
        }
        if !(e.covariance_floor.is_finite() && e.covariance_floor > 0.0) {
            return Err(invalid("emc.covariance_floor must be positive"));
        }
        self.covariance()?;
        Target::from_name(&e.target).map_err(|_| invalid(format!("unknown emc.target `{}`", e.target)))?;
        ColumnTransform::from_name(&e.transform)
            .map_err(|_| invalid(format!("unknown emc.transform `{}`", e.transform)))?;
        self.soft_assignment()?;
        if self.threads == Some(0) {
            return Err(invalid("threads must be at least 1"));
        }
        Ok(())
    }

    /// `Some(min_responsibility)` when microclimate visits are counted softly.
    pub fn soft_assignment(&self) -> Result<Option<f64>> {
        let e = &self.emc;
        match e.assignment.as_str() {
            "hard" => Ok(None),
            "soft" if e.min_responsibility > 0.0 && e.min_responsibility <= 1.0 => {
                Ok(Some(e.min_responsibility))
            }
            "soft" => Err(invalid("emc.min_responsibility must be in (0, 1]")),
            other => Err(invalid(format!("emc.assignment must be `hard` or `soft`, got `{other}`"))),
        }
    }

    /// Checks that the given input paths are present and exist.
    pub fn require(&self, inputs: &[(&str, &Option<PathBuf>)]) -> Result<()> {
        for (name, path) in inputs {
            match path {
                None => return Err(invalid(format!("`{name}` is required for this command"))),
                Some(p) if !p.exists() => {
                    return Err(invalid(format!("{name}: {} does not exist", p.display())))
                }
                Some(_) => {}
            }
        }
        for p in self.scenes.iter().chain(self.static_layers.values()) {
            if !p.exists() {
                return Err(invalid(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn degree_day_config(&self) -> DegreeDayConfig {
        DegreeDayConfig {
            base_c: self.degree_days.base_c,
            min_valid_hours: self.degree_days.min_valid_hours,
            utc_offset_secs: i64::from(self.degree_days.utc_offset_hours) * 3600,
            per_day: self.degree_days.per_day,
        }
    }

    pub fn mask(&self) -> Result<MaskScheme> {
        MaskScheme::from_name(&self.mask_scheme)
            .map_err(|_| invalid(format!("unknown mask_scheme `{}`", self.mask_scheme)))
    }

    pub fn target_list(&self) -> Result<Vec<Target>> {
        self.targets
            .iter()
            .map(|t| Target::from_name(t).map_err(|_| invalid(format!("unknown target `{t}`"))))
            .collect()
    }

    pub fn transform_list(&self) -> Result<Vec<ColumnTransform>> {
        let list: Vec<ColumnTransform> = self
            .transforms
            .iter()
            .map(|t| ColumnTransform::from_name(t).map_err(|_| invalid(format!("unknown transform `{t}`"))))
            .collect::<Result<_>>()?;
        if list.is_empty() {
            return Err(invalid("transforms must not be empty"));
        }
        Ok(list)
    }

    pub fn covariance(&self) -> Result<CovarianceKind> {
        CovarianceKind::from_name(&self.emc.covariance)
            .map_err(|_| invalid(format!("unknown emc.covariance `{}`", self.emc.covariance)))
    }

    pub fn gmm_config(&self) -> Result<GmmConfig> {
        Ok(GmmConfig {
            max_iter: self.emc.max_iter,
            tol: self.emc.tol,
            covariance: self.covariance()?,
            floor: self.emc.covariance_floor,
            ..GmmConfig::new(self.emc.k, self.seed)
        })
    }

    /// Columns left out of the contribution matrix.
    pub fn excluded_columns(&self) -> Vec<String> {
        let mut out = self.emc.excluded.clone();
        if self.emc.environment_only {
            out.extend(Feature::NON_ENVIRONMENTAL.iter().map(|f| f.name().to_string()));
        }
        out.sort();
        out.dedup();
        out
    }
}
