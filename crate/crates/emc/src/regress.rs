//! `regress`: VIF-pruned OLS per target and transform, as JSON and as text tables.

use std::fmt::Write as _;
use std::path::Path;

use emc_core::dataset::{Feature, FeatureRow, Target};
use emc_core::stats::{
    fit_ols, prune_by_vif, significance_stars, transform_columns, Coefficient, ColumnTransform, DesignMatrix,
    RegressionResult, VifTable, INTERCEPT_NAME,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::RunConfig;
use crate::error::{Context, Error, Result};
use crate::report::{Recorder, RunReport};
use crate::tables::read_feature_table;

pub const REGRESSION_JSON: &str = "regression.json";
pub const REGRESSION_TEXT: &str = "regression.txt";
pub const REGRESSION_SCHEMA_VERSION: u32 = 1;

/// Non-finite floats are written as `null` and read back as NaN.
mod finite {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        match v.is_finite() {
            true => s.serialize_f64(*v),
            false => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRecord {
    pub name: String,
    pub estimate: f64,
    #[serde(with = "finite")]
    pub std_error: f64,
    #[serde(with = "finite")]
    pub t_value: f64,
    #[serde(with = "finite")]
    pub p_value: f64,
    pub stars: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VifRecord {
    pub column: String,
    #[serde(with = "finite")]
    pub vif: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VifRemovalRecord {
    pub step: usize,
    pub column: String,
    #[serde(with = "finite")]
    pub vif: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VifRecordSet {
    pub threshold: f64,
    pub values: Vec<VifRecord>,
    pub history: Vec<VifRemovalRecord>,
}

impl From<&VifTable> for VifRecordSet {
    fn from(t: &VifTable) -> Self {
        VifRecordSet {
            threshold: t.threshold,
            values: t.values.iter().map(|(c, v)| VifRecord { column: c.clone(), vif: *v }).collect(),
            history: t
                .history
                .iter()
                .map(|h| VifRemovalRecord { step: h.step, column: h.column.clone(), vif: h.vif })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub target: String,
    pub transform: String,
    pub n: usize,
    pub df_model: usize,
    pub df_resid: usize,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub f_statistic: Option<f64>,
    pub f_p_value: Option<f64>,
    pub rss: f64,
    pub tss: f64,
    pub coefficients: Vec<CoefficientRecord>,
    /// Per-slope column means and scales of the fitted design.
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub vif: Option<VifRecordSet>,
}

impl ResultRecord {
    pub fn new(target: Target, r: &RegressionResult, vif: Option<&VifTable>) -> Self {
        ResultRecord {
            target: target.name().into(),
            transform: r.transform.name().into(),
            n: r.n,
            df_model: r.df_model,
            df_resid: r.df_resid,
            r_squared: r.r_squared,
            adj_r_squared: r.adj_r_squared,
            f_statistic: r.f_statistic.filter(|f| f.is_finite()),
            f_p_value: r.f_p_value,
            rss: r.rss,
            tss: r.tss,
            coefficients: r
                .coefficients
                .iter()
                .map(|c| CoefficientRecord {
                    name: c.name.clone(),
                    estimate: c.estimate,
                    std_error: c.std_error,
                    t_value: c.t_value,
                    p_value: c.p_value,
                    stars: significance_stars(c.p_value).into(),
                })
                .collect(),
            means: r.means.clone(),
            scales: r.scales.clone(),
            vif: vif.map(VifRecordSet::from),
        }
    }

    pub fn to_result(&self) -> Result<RegressionResult> {
        let transform = ColumnTransform::from_name(&self.transform)?;
        let coefficients: Vec<Coefficient> = self
            .coefficients
            .iter()
            .map(|c| Coefficient {
                name: c.name.clone(),
                estimate: c.estimate,
                std_error: c.std_error,
                t_value: c.t_value,
                p_value: c.p_value,
            })
            .collect();
        if coefficients.first().is_none_or(|c| c.name != INTERCEPT_NAME)
            || self.means.len() + 1 != coefficients.len()
            || self.scales.len() != self.means.len()
        {
            return Err(Error::data(format!(
                "regression result {}/{} is malformed",
                self.target, self.transform
            )));
        }
        Ok(RegressionResult {
            coefficients,
            r_squared: self.r_squared,
            adj_r_squared: self.adj_r_squared,
            f_statistic: self.f_statistic,
            f_p_value: self.f_p_value,
            df_model: self.df_model,
            df_resid: self.df_resid,
            n: self.n,
            rss: self.rss,
            tss: self.tss,
            transform,
            means: self.means.clone(),
            scales: self.scales.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFile {
    pub schema_version: u32,
    pub results: Vec<ResultRecord>,
}

impl RegressionFile {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let file: RegressionFile = serde_json::from_slice(&bytes).map_err(|e| Error::parse(path, e))?;
        if file.schema_version != REGRESSION_SCHEMA_VERSION {
            return Err(Error::parse(path, format!("unsupported schema_version {}", file.schema_version)));
        }
        Ok(file)
    }

    pub fn find(&self, target: Target, transform: ColumnTransform) -> Option<&ResultRecord> {
        self.results.iter().find(|r| r.target == target.name() && r.transform == transform.name())
    }
}

/// Raw design over the rows that have the target and every named column.
/// Returns the design, the response and the indices of the rows used.
pub fn design_for(
    rows: &[FeatureRow],
    target: Target,
    columns: &[&str],
) -> Result<(DesignMatrix, Vec<f64>, Vec<usize>)> {
    let mut used = Vec::new();
    let mut y = Vec::new();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); columns.len()];
    'rows: for (i, r) in rows.iter().enumerate() {
        let Some(t) = r.target(target) else { continue };
        let mut vals = Vec::with_capacity(columns.len());
        for c in columns {
            match r.by_name(c) {
                Some(v) => vals.push(v),
                None => continue 'rows,
            }
        }
        for (col, v) in cols.iter_mut().zip(vals) {
            col.push(v);
        }
        y.push(t);
        used.push(i);
    }
    let names = columns.iter().map(|c| c.to_string()).collect();
    Ok((DesignMatrix::new(names, cols)?, y, used))
}

/// One target: zero-variance check, optional VIF pruning, then one fit per transform.
pub fn fit_target(
    rows: &[FeatureRow],
    target: Target,
    transforms: &[ColumnTransform],
    prune: Option<f64>,
) -> Result<(Vec<RegressionResult>, Option<VifTable>)> {
    let all: Vec<&str> = Feature::ALL.iter().map(|f| f.name()).collect();
    let (x, y, _) = design_for(rows, target, &all)?;
    // Surfaces a constant column by name before VIF sees an infinite value.
    transform_columns(&x, ColumnTransform::Center)?;
    let (x, vif) = match prune {
        Some(threshold) => {
            let (pruned, table) = prune_by_vif(&x, threshold)?;
            (pruned, Some(table))
        }
        None => (x, None),
    };
    let fits = transforms
        .iter()
        .map(|&t| fit_ols(&transform_columns(&x, t)?, &y))
        .collect::<emc_core::Result<Vec<_>>>()?;
    Ok((fits, vif))
}

fn fmt_num(v: f64) -> String {
    if !v.is_finite() {
        "NA".into()
    } else if v == 0.0 || v.abs() >= 1e-3 {
        format!("{v:.3}")
    } else {
        format!("{v:.3e}")
    }
}

/// Tables in the usual journal layout: one column per fit, estimates with
/// stars and standard errors beneath, fit statistics at the bottom.
fn short_transform(name: &str) -> &str {
    match ColumnTransform::from_name(name) {
        Ok(ColumnTransform::None) => "raw",
        Ok(ColumnTransform::Center) => "centered",
        Ok(ColumnTransform::Standardize) => "standardized",
        Err(_) => name,
    }
}

pub fn format_tables(records: &[ResultRecord]) -> String {
    let mut out = String::new();
    let mut targets: Vec<&str> = Vec::new();
    for r in records {
        if !targets.contains(&r.target.as_str()) {
            targets.push(&r.target);
        }
    }
    for target in targets {
        let fits: Vec<&ResultRecord> = records.iter().filter(|r| r.target == target).collect();
        let mut names: Vec<&str> = Vec::new();
        for f in &fits {
            for c in f.coefficients.iter().skip(1) {
                if !names.contains(&c.name.as_str()) {
                    names.push(&c.name);
                }
            }
        }
        names.push(INTERCEPT_NAME);
        let label_w = 22;
        let col_w = 20;
        let width = label_w + col_w * fits.len();
        let rule = |c: char| c.to_string().repeat(width);
        let cell = |s: &str| format!("{s:>col_w$}");
        let _ = writeln!(out, "{}", rule('='));
        let _ = writeln!(out, "{:<label_w$}{}", "", cell(&format!("Dependent variable: y_{target}")));
        let _ = writeln!(out, "{}", rule('-'));
        let mut header = format!("{:<label_w$}", "");
        for (i, f) in fits.iter().enumerate() {
            header += &cell(&format!("({}) {}", i + 1, short_transform(&f.transform)));
        }
        let _ = writeln!(out, "{header}");
        let _ = writeln!(out, "{}", rule('-'));
        for name in &names {
            let label = if *name == INTERCEPT_NAME { "Constant" } else { name };
            let mut est = format!("{label:<label_w$}");
            let mut se = format!("{:<label_w$}", "");
            for f in &fits {
                match f.coefficients.iter().find(|c| c.name == *name) {
                    Some(c) => {
                        est += &cell(&format!("{}{:<3}", fmt_num(c.estimate), c.stars));
                        se += &cell(&format!("({}){:3}", fmt_num(c.std_error), ""));
                    }
                    None => {
                        est += &cell("");
                        se += &cell("");
                    }
                }
            }
            let _ = writeln!(out, "{est}\n{se}");
        }
        let _ = writeln!(out, "{}", rule('-'));
        let stat_row = |label: &str, f: &dyn Fn(&ResultRecord) -> String| {
            let mut s = format!("{label:<label_w$}");
            for r in &fits {
                s += &cell(&f(r));
            }
            s
        };
        let _ = writeln!(out, "{}", stat_row("Observations", &|r| r.n.to_string()));
        let _ = writeln!(out, "{}", stat_row("R2", &|r| fmt_num(r.r_squared)));
        let _ = writeln!(out, "{}", stat_row("Adjusted R2", &|r| fmt_num(r.adj_r_squared)));
        let _ = writeln!(
            out,
            "{}",
            stat_row("F Statistic", &|r| match (r.f_statistic, r.f_p_value) {
                (Some(f), Some(p)) => format!("{}{:<3}", fmt_num(f), significance_stars(p)),
                _ => "NA".into(),
            })
        );
        let _ = writeln!(out, "{}", stat_row("df", &|r| format!("{}; {}", r.df_model, r.df_resid)));
        let _ = writeln!(out, "{}", rule('='));
        let _ = writeln!(
            out,
            "{:<label_w$}{:>w$}\n",
            "Note:",
            "*p<0.1; **p<0.05; ***p<0.01",
            w = col_w * fits.len()
        );
    }
    out
}

#[derive(Debug, Clone)]
pub struct RegressOutcome {
    pub file: RegressionFile,
    pub report: RunReport,
}

/// Fits every configured target × transform and writes both artifacts.
pub fn run_regress(cfg: &RunConfig, table: &Path) -> Result<RegressOutcome> {
    cfg.validate()?;
    let targets = cfg.target_list()?;
    let transforms = cfg.transform_list()?;
    let mut rec = Recorder::new("regress", cfg.seed);
    let rows = rec.time("ingest", || read_feature_table(table))?;
    let prune = cfg.prune_vif.then_some(cfg.vif_threshold);
    let results = rec.time("stats", || {
        let per_target: Vec<Result<Vec<ResultRecord>>> = rayon_map(&targets, |&t| {
            let (fits, vif) = fit_target(&rows, t, &transforms, prune).entity(t.name())?;
            Ok(fits.iter().map(|f| ResultRecord::new(t, f, vif.as_ref())).collect())
        });
        let mut all = Vec::new();
        for r in per_target {
            all.extend(r?);
        }
        Ok(all)
    })?;
    let file = RegressionFile { schema_version: REGRESSION_SCHEMA_VERSION, results };
    let mut text = serde_json::to_string_pretty(&file).expect("regression serializes");
    text.push('\n');
    rec.write(&cfg.output_dir, REGRESSION_JSON, text.as_bytes())?;
    rec.write(&cfg.output_dir, REGRESSION_TEXT, format_tables(&file.results).as_bytes())?;
    let details = json!({
        "table": table.display().to_string(),
        "fits": file.results.iter().map(|r| json!({"target": r.target, "transform": r.transform, "n": r.n})).collect::<Vec<_>>(),
    });
    let report = rec.finish(&cfg.output_dir, details)?;
    Ok(RegressOutcome { file, report })
}

/// Order-preserving parallel map; targets fit independently.
fn rayon_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}
