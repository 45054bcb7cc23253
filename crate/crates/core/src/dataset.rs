//! Joining energy, attributes and environmental features into regression rows.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::time::YearMonth;
use crate::{Error, Result};

/// Square meters per international square foot.
pub const SQFT_TO_M2: f64 = 0.092_903_04;

pub fn convert_area(sqft: f64) -> Result<f64> {
    if !(sqft.is_finite() && sqft > 0.0) {
        return Err(Error::InvalidArea(sqft));
    }
    Ok(sqft * SQFT_TO_M2)
}

/// `ln(energy / floor_area)`; `Ok(None)` when the energy is zero and the
/// row must be excluded.
pub fn endogenous_transform(energy_mwh: f64, floor_area_m2: f64) -> Result<Option<f64>> {
    if !(floor_area_m2.is_finite() && floor_area_m2 > 0.0) {
        return Err(Error::InvalidArea(floor_area_m2));
    }
    if !(energy_mwh.is_finite() && energy_mwh >= 0.0) {
        return Err(Error::InvalidEnergy(energy_mwh));
    }
    if energy_mwh == 0.0 {
        return Ok(None);
    }
    Ok(Some(libm::log(energy_mwh / floor_area_m2)))
}

/// The twelve exogenous variables, in table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Feature {
    AvgRad,
    B1,
    B11,
    Ndvi,
    Wind,
    Tcdc,
    Acpc01,
    Hdd,
    Cdd,
    Elevation,
    AssessTot,
    YearBuilt,
}

impl Feature {
    pub const ALL: [Feature; 12] = [
        Feature::AvgRad,
        Feature::B1,
        Feature::B11,
        Feature::Ndvi,
        Feature::Wind,
        Feature::Tcdc,
        Feature::Acpc01,
        Feature::Hdd,
        Feature::Cdd,
        Feature::Elevation,
        Feature::AssessTot,
        Feature::YearBuilt,
    ];

    /// Columns dropped when clustering on environmental contributions only
    /// (night lights and the two property attributes).
    pub const NON_ENVIRONMENTAL: [Feature; 3] = [Feature::AvgRad, Feature::AssessTot, Feature::YearBuilt];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::AvgRad => "avg_rad",
            Feature::B1 => "B1",
            Feature::B11 => "B11",
            Feature::Ndvi => "NDVI",
            Feature::Wind => "WIND",
            Feature::Tcdc => "TCDC",
            Feature::Acpc01 => "ACPC01",
            Feature::Hdd => "hdd",
            Feature::Cdd => "cdd",
            Feature::Elevation => "elevation",
            Feature::AssessTot => "assesstot",
            Feature::YearBuilt => "yearbuilt",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Feature::AvgRad => "nW·sr⁻¹·cm⁻²",
            Feature::B1 | Feature::B11 => "W·sr⁻¹·m⁻²",
            Feature::Ndvi => "-",
            Feature::Hdd | Feature::Cdd => "°C·day",
            Feature::Wind => "m·s⁻¹",
            Feature::Tcdc => "%",
            Feature::Acpc01 => "kg·m⁻²",
            Feature::Elevation => "m",
            Feature::AssessTot => "USD",
            Feature::YearBuilt => "year",
        }
    }

    pub fn source(self) -> &'static str {
        match self {
            Feature::AvgRad => "VIIRS DNB",
            Feature::B1 | Feature::B11 | Feature::Ndvi => "Sentinel-2 L1C",
            Feature::Wind | Feature::Tcdc | Feature::Acpc01 | Feature::Hdd | Feature::Cdd => "reanalysis",
            Feature::Elevation => "DEM",
            Feature::AssessTot | Feature::YearBuilt => "attributes",
        }
    }

    pub fn from_name(name: &str) -> Option<Feature> {
        Feature::ALL.into_iter().find(|f| f.name() == name)
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Electric,
    Gas,
}

impl Target {
    pub const ALL: [Target; 2] = [Target::Electric, Target::Gas];

    pub fn name(self) -> &'static str {
        match self {
            Target::Electric => "electric",
            Target::Gas => "gas",
        }
    }

    pub fn from_name(name: &str) -> Result<Target> {
        match name {
            "electric" => Ok(Target::Electric),
            "gas" => Ok(Target::Gas),
            other => Err(Error::UnknownName(other.into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct KeyNormalization {
    /// Left-pad BBLs with zeros to this width.
    pub bbl_width: Option<usize>,
    pub bin_width: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BuildingKey {
    pub bbl: String,
    pub bin: String,
}

impl BuildingKey {
    pub fn new(bbl: &str, bin: &str, norm: &KeyNormalization) -> Self {
        BuildingKey { bbl: normalize_id(bbl, norm.bbl_width), bin: normalize_id(bin, norm.bin_width) }
    }
}

impl fmt::Display for BuildingKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.bbl, self.bin)
    }
}

fn normalize_id(raw: &str, width: Option<usize>) -> String {
    let s = raw.trim();
    match width {
        Some(w) if s.len() < w => {
            let mut out = String::with_capacity(w);
            out.extend(core::iter::repeat_n('0', w - s.len()));
            out.push_str(s);
            out
        }
        _ => s.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyRecord {
    pub key: BuildingKey,
    pub month: YearMonth,
    pub electricity_mwh: Option<f64>,
    pub gas_mwh: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeRecord {
    pub key: BuildingKey,
    pub floor_area_sqft: Option<f64>,
    pub assess_total: Option<f64>,
    pub year_built: Option<f64>,
}

/// Environmental values for one building-month; attribute columns are
/// filled from [`AttributeRecord`] during assembly.
pub type FeatureValues = [Option<f64>; 12];

/// Remote-sensing and climate features per building-month.
pub type EnvironmentTable = BTreeMap<(BuildingKey, YearMonth), FeatureValues>;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub key: BuildingKey,
    pub month: YearMonth,
    pub features: FeatureValues,
    pub y_electric: Option<f64>,
    pub y_gas: Option<f64>,
}

impl FeatureRow {
    pub fn get(&self, f: Feature) -> Option<f64> {
        self.features[f.index()]
    }

    pub fn target(&self, t: Target) -> Option<f64> {
        match t {
            Target::Electric => self.y_electric,
            Target::Gas => self.y_gas,
        }
    }

    pub fn by_name(&self, name: &str) -> Option<f64> {
        Feature::from_name(name).and_then(|f| self.get(f))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AttritionCause {
    DuplicateId,
    JoinFailure,
    MissingRemoteData,
    ZeroEnergy,
}

impl AttritionCause {
    /// Checked in this order; a row is charged to the first cause that applies.
    pub const ORDER: [AttritionCause; 4] = [
        AttritionCause::DuplicateId,
        AttritionCause::JoinFailure,
        AttritionCause::MissingRemoteData,
        AttritionCause::ZeroEnergy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttritionCause::DuplicateId => "duplicate id",
            AttritionCause::JoinFailure => "join failure",
            AttritionCause::MissingRemoteData => "missing remote data",
            AttritionCause::ZeroEnergy => "zero energy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AttritionReport {
    pub rows_in: usize,
    pub survivors: usize,
    counts: [usize; 4],
}

impl AttritionReport {
    pub fn record(&mut self, cause: AttritionCause) {
        self.counts[cause as usize] += 1;
    }

    pub fn count(&self, cause: AttritionCause) -> usize {
        self.counts[cause as usize]
    }

    pub fn dropped(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn fraction(&self, cause: AttritionCause) -> f64 {
        if self.rows_in == 0 {
            0.0
        } else {
            self.count(cause) as f64 / self.rows_in as f64
        }
    }

    pub fn survivor_fraction(&self) -> f64 {
        if self.rows_in == 0 {
            0.0
        } else {
            self.survivors as f64 / self.rows_in as f64
        }
    }

    /// Rows in equals survivors plus every attributed drop.
    pub fn is_conserved(&self) -> bool {
        self.rows_in == self.survivors + self.dropped()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assembly {
    pub rows: Vec<FeatureRow>,
    pub attrition: AttritionReport,
}

/// Inner join of energy records with footprints, attributes and monthly
/// environmental features, one candidate row per energy record.
///
/// Duplicated `(key, month)` energy rows and buildings listed twice in the
/// footprint or attribute sources are dropped entirely. Output rows are
/// sorted by (bbl, bin, month).
pub fn assemble(
    footprints: &[BuildingKey],
    energy: &[EnergyRecord],
    attributes: &[AttributeRecord],
    environment: &EnvironmentTable,
) -> Result<Assembly> {
    let mut report = AttritionReport { rows_in: energy.len(), ..Default::default() };

    let mut footprint_counts: BTreeMap<&BuildingKey, usize> = BTreeMap::new();
    for k in footprints {
        *footprint_counts.entry(k).or_default() += 1;
    }
    let mut attr_by_key: BTreeMap<&BuildingKey, (usize, &AttributeRecord)> = BTreeMap::new();
    for a in attributes {
        attr_by_key.entry(&a.key).and_modify(|e| e.0 += 1).or_insert((1, a));
    }
    let mut energy_counts: BTreeMap<(&BuildingKey, YearMonth), usize> = BTreeMap::new();
    for e in energy {
        *energy_counts.entry((&e.key, e.month)).or_default() += 1;
    }
    let duplicated_buildings: BTreeSet<&BuildingKey> = footprint_counts
        .iter()
        .filter(|(_, &n)| n > 1)
        .map(|(k, _)| *k)
        .chain(attr_by_key.iter().filter(|(_, e)| e.0 > 1).map(|(k, _)| *k))
        .collect();

    let mut rows: BTreeMap<(BuildingKey, YearMonth), FeatureRow> = BTreeMap::new();
    for e in energy {
        if energy_counts[&(&e.key, e.month)] > 1 || duplicated_buildings.contains(&e.key) {
            report.record(AttritionCause::DuplicateId);
            continue;
        }
        let attr = match (footprint_counts.contains_key(&e.key), attr_by_key.get(&e.key)) {
            (true, Some((_, a))) => *a,
            _ => {
                report.record(AttritionCause::JoinFailure);
                continue;
            }
        };
        let area = match attr.floor_area_sqft.map(convert_area) {
            Some(Ok(a)) => a,
            _ => {
                report.record(AttritionCause::JoinFailure);
                continue;
            }
        };
        let Some(env) = environment.get(&(e.key.clone(), e.month)) else {
            report.record(AttritionCause::MissingRemoteData);
            continue;
        };
        let mut features = *env;
        features[Feature::AssessTot.index()] = attr.assess_total;
        features[Feature::YearBuilt.index()] = attr.year_built;
        if features.iter().any(|v| !matches!(v, Some(x) if x.is_finite())) {
            report.record(AttritionCause::MissingRemoteData);
            continue;
        }
        let y = |mwh: Option<f64>| -> Result<Option<f64>> {
            match mwh {
                Some(v) => endogenous_transform(v, area),
                None => Ok(None),
            }
        };
        let y_electric = y(e.electricity_mwh)?;
        let y_gas = y(e.gas_mwh)?;
        if y_electric.is_none() && y_gas.is_none() {
            report.record(AttritionCause::ZeroEnergy);
            continue;
        }
        rows.insert(
            (e.key.clone(), e.month),
            FeatureRow { key: e.key.clone(), month: e.month, features, y_electric, y_gas },
        );
    }
    report.survivors = rows.len();
    debug_assert!(report.is_conserved());
    Ok(Assembly { rows: rows.into_values().collect(), attrition: report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn area_conversion() {
        assert!((convert_area(10_000.0).unwrap() - 929.0304).abs() < 1e-9);
        assert!((convert_area(25_000.0).unwrap() - 2322.576).abs() < 1e-9);
        assert_eq!(convert_area(0.0), Err(Error::InvalidArea(0.0)));
        assert!(convert_area(-3.0).is_err());
    }

    #[test]
    fn transform_examples() {
        assert_eq!(endogenous_transform(1000.0, 1000.0).unwrap(), Some(0.0));
        assert_eq!(endogenous_transform(0.0, 1000.0).unwrap(), None);
        let y = endogenous_transform(10.0, 1000.0).unwrap().unwrap();
        assert!((y - (-4.605_170_185_988_091)).abs() < 1e-15);
        assert_eq!(endogenous_transform(1.0, 0.0), Err(Error::InvalidArea(0.0)));
        assert!(endogenous_transform(-1.0, 10.0).is_err());
    }

    #[test]
    fn key_normalization() {
        let norm = KeyNormalization { bbl_width: Some(10), bin_width: None };
        let k = BuildingKey::new(" 10001 ", "7", &norm);
        assert_eq!(k.bbl, "0000010001");
        assert_eq!(k.bin, "7");
    }

    fn fixture() -> (Vec<BuildingKey>, Vec<AttributeRecord>, EnvironmentTable) {
        let k = BuildingKey::new("1", "1", &KeyNormalization::default());
        let m = YearMonth::new(2019, 1).unwrap();
        let attrs = vec![AttributeRecord {
            key: k.clone(),
            floor_area_sqft: Some(10_000.0),
            assess_total: Some(1e6),
            year_built: Some(1950.0),
        }];
        let mut env = BTreeMap::new();
        env.insert((k.clone(), m), [Some(1.0); 12]);
        (vec![k], attrs, env)
    }

    #[test]
    fn single_row_join() {
        let (fp, attrs, env) = fixture();
        let m = YearMonth::new(2019, 1).unwrap();
        let energy = vec![EnergyRecord {
            key: fp[0].clone(),
            month: m,
            electricity_mwh: Some(929.0304),
            gas_mwh: Some(0.0),
        }];
        let out = assemble(&fp, &energy, &attrs, &env).unwrap();
        assert_eq!(out.rows.len(), 1);
        assert_eq!(out.attrition.dropped(), 0);
        let row = &out.rows[0];
        assert!(row.y_electric.unwrap().abs() < 1e-15);
        assert_eq!(row.y_gas, None);
        assert_eq!(row.get(Feature::AssessTot), Some(1e6));
        assert_eq!(row.get(Feature::YearBuilt), Some(1950.0));
    }

    #[test]
    fn duplicates_drop_every_copy() {
        let (fp, attrs, env) = fixture();
        let m = YearMonth::new(2019, 1).unwrap();
        let rec = EnergyRecord { key: fp[0].clone(), month: m, electricity_mwh: Some(1.0), gas_mwh: None };
        let out = assemble(&fp, &[rec.clone(), rec], &attrs, &env).unwrap();
        assert!(out.rows.is_empty());
        assert_eq!(out.attrition.count(AttritionCause::DuplicateId), 2);
        assert!(out.attrition.is_conserved());
    }

    #[test]
    fn cause_order() {
        let (fp, attrs, env) = fixture();
        let m = YearMonth::new(2019, 1).unwrap();
        let m2 = YearMonth::new(2019, 2).unwrap();
        let stranger = BuildingKey::new("9", "9", &KeyNormalization::default());
        let energy = vec![
            EnergyRecord { key: stranger, month: m, electricity_mwh: Some(1.0), gas_mwh: None },
            EnergyRecord { key: fp[0].clone(), month: m2, electricity_mwh: Some(1.0), gas_mwh: None },
            EnergyRecord { key: fp[0].clone(), month: m, electricity_mwh: Some(0.0), gas_mwh: None },
        ];
        let out = assemble(&fp, &energy, &attrs, &env).unwrap();
        let a = &out.attrition;
        assert_eq!(a.count(AttritionCause::JoinFailure), 1);
        assert_eq!(a.count(AttritionCause::MissingRemoteData), 1);
        assert_eq!(a.count(AttritionCause::ZeroEnergy), 1);
        assert_eq!(a.survivors, 0);
        assert!(a.is_conserved());
        assert!((a.fraction(AttritionCause::JoinFailure) - 1.0 / 3.0).abs() < 1e-15);
    }
}
