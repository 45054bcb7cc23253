//! Column transforms, ordinary least squares with classical inference,
//! variance inflation factors with sequential pruning, and log-linear
//! effect sizes.

use alloc::string::String;
use alloc::vec::Vec;

use crate::dataset::FeatureRow;
use crate::linalg::{Matrix, PivotedQr, RANK_TOL};
use crate::math::{f_upper_p, sqrt, student_t_two_sided_p};
use crate::{Error, Result};

pub const DEFAULT_VIF_THRESHOLD: f64 = 5.0;
pub const INTERCEPT_NAME: &str = "const";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnTransform {
    None,
    /// `x − x̄`
    Center,
    /// `(x − x̄) / s` with the sample (N−1) standard deviation.
    Standardize,
}

impl ColumnTransform {
    pub fn name(self) -> &'static str {
        match self {
            ColumnTransform::None => "none",
            ColumnTransform::Center => "mean-centered",
            ColumnTransform::Standardize => "mean-centered+unit-variance",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "none" => Ok(ColumnTransform::None),
            "mean-centered" | "center" | "centered" => Ok(ColumnTransform::Center),
            "mean-centered+unit-variance" | "standardize" | "normalized" => Ok(ColumnTransform::Standardize),
            other => Err(Error::UnknownName(other.into())),
        }
    }
}

/// Exogenous design (without intercept) stored by column, with the
/// transform that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    nrows: usize,
    transform: ColumnTransform,
    means: Vec<f64>,
    scales: Vec<f64>,
}

impl DesignMatrix {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::DimensionMismatch { expected: names.len(), found: columns.len() });
        }
        let nrows = columns.first().map_or(0, Vec::len);
        for c in &columns {
            if c.len() != nrows {
                return Err(Error::DimensionMismatch { expected: nrows, found: c.len() });
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { what: "design matrix" });
            }
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::InvalidParameter { name: "column names", reason: "must be unique" });
            }
        }
        let m = names.len();
        Ok(DesignMatrix {
            names,
            columns,
            nrows,
            transform: ColumnTransform::None,
            means: alloc::vec![0.0; m],
            scales: alloc::vec![1.0; m],
        })
    }

    /// A design with no columns, for intercept-only fits.
    pub fn intercept_only(nrows: usize) -> Self {
        DesignMatrix {
            names: Vec::new(),
            columns: Vec::new(),
            nrows,
            transform: ColumnTransform::None,
            means: Vec::new(),
            scales: Vec::new(),
        }
    }

    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let m = names.len();
        let mut columns = alloc::vec![Vec::with_capacity(rows.len()); m];
        for r in rows {
            if r.len() != m {
                return Err(Error::DimensionMismatch { expected: m, found: r.len() });
            }
            for (c, &v) in columns.iter_mut().zip(r) {
                c.push(v);
            }
        }
        Self::new(names, columns)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.columns[j][i]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn transform(&self) -> ColumnTransform {
        self.transform
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// Maps a raw value of column `j` into this matrix's transformed units.
    pub fn to_transformed(&self, j: usize, raw: f64) -> f64 {
        (raw - self.means[j]) / self.scales[j]
    }

    /// Undoes the recorded transform.
    pub fn restore(&self) -> DesignMatrix {
        let columns = self
            .columns
            .iter()
            .enumerate()
            .map(|(j, c)| c.iter().map(|v| v * self.scales[j] + self.means[j]).collect())
            .collect();
        DesignMatrix {
            names: self.names.clone(),
            columns,
            nrows: self.nrows,
            transform: ColumnTransform::None,
            means: alloc::vec![0.0; self.ncols()],
            scales: alloc::vec![1.0; self.ncols()],
        }
    }

    /// Applies a transform with given per-column means and scales to raw
    /// columns (e.g. to rebuild a fitted design from stored metadata).
    pub fn with_stored_transform(
        &self,
        transform: ColumnTransform,
        means: &[f64],
        scales: &[f64],
    ) -> Result<DesignMatrix> {
        let m = self.ncols();
        if means.len() != m || scales.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: means.len().min(scales.len()) });
        }
        let raw = self.restore();
        let columns = raw
            .columns
            .iter()
            .enumerate()
            .map(|(j, c)| c.iter().map(|v| (v - means[j]) / scales[j]).collect())
            .collect();
        Ok(DesignMatrix {
            names: raw.names,
            columns,
            nrows: raw.nrows,
            transform,
            means: means.to_vec(),
            scales: scales.to_vec(),
        })
    }

    /// Keeps the named columns, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<DesignMatrix> {
        let mut out = DesignMatrix {
            names: Vec::with_capacity(names.len()),
            columns: Vec::with_capacity(names.len()),
            nrows: self.nrows,
            transform: self.transform,
            means: Vec::with_capacity(names.len()),
            scales: Vec::with_capacity(names.len()),
        };
        for &n in names {
            let j = self.column_index(n).ok_or_else(|| Error::UnknownName(n.into()))?;
            out.names.push(self.names[j].clone());
            out.columns.push(self.columns[j].clone());
            out.means.push(self.means[j]);
            out.scales.push(self.scales[j]);
        }
        Ok(out)
    }

    pub fn without(&self, name: &str) -> Result<DesignMatrix> {
        let keep: Vec<&str> = self.names.iter().map(String::as_str).filter(|n| *n != name).collect();
        if keep.len() == self.ncols() {
            return Err(Error::UnknownName(name.into()));
        }
        self.select(&keep)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Centers (and optionally scales) every column, recording means and scales.
/// Any previous transform is undone first.
pub fn transform_columns(x: &DesignMatrix, mode: ColumnTransform) -> Result<DesignMatrix> {
    let raw = x.restore();
    if raw.nrows < 2 {
        return Err(Error::InsufficientData { needed: 1, found: raw.nrows });
    }
    let m = raw.ncols();
    let mut means = Vec::with_capacity(m);
    let mut scales = Vec::with_capacity(m);
    for (name, c) in raw.names.iter().zip(&raw.columns) {
        let mu = mean(c);
        let ss: f64 = c.iter().map(|v| (v - mu) * (v - mu)).sum();
        let sd = sqrt(ss / (c.len() - 1) as f64);
        if sd == 0.0 || c.iter().all(|&v| v == c[0]) {
            return Err(Error::ZeroVariance { column: name.clone() });
        }
        let (m_j, s_j) = match mode {
            ColumnTransform::None => (0.0, 1.0),
            ColumnTransform::Center => (mu, 1.0),
            ColumnTransform::Standardize => (mu, sd),
        };
        means.push(m_j);
        scales.push(s_j);
    }
    raw.with_stored_transform(mode, &means, &scales)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_value: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionResult {
    /// Intercept first, then one entry per design column.
    pub coefficients: Vec<Coefficient>,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    /// `None` for an intercept-only model.
    pub f_statistic: Option<f64>,
    pub f_p_value: Option<f64>,
    pub df_model: usize,
    pub df_resid: usize,
    pub n: usize,
    pub rss: f64,
    pub tss: f64,
    pub transform: ColumnTransform,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl RegressionResult {
    pub fn intercept(&self) -> f64 {
        self.coefficients[0].estimate
    }

    pub fn slopes(&self) -> &[Coefficient] {
        &self.coefficients[1..]
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.slopes().iter().map(|c| c.name.as_str()).collect()
    }

    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    /// Prediction for one row given in the fitted (transformed) units.
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept() + self.slopes().iter().zip(x).map(|(c, v)| c.estimate * v).sum::<f64>()
    }

    /// Maps a raw feature value into the units the named slope was fitted in.
    pub fn to_fitted_units(&self, name: &str, raw: f64) -> Option<f64> {
        let j = self.slopes().iter().position(|c| c.name == name)?;
        Some((raw - self.means[j]) / self.scales[j])
    }
}

/// OLS of `y` on an intercept plus the design's columns, with classical
/// standard errors, two-sided t-tests, R², adjusted R² and the overall F-test.
pub fn fit_ols(x: &DesignMatrix, y: &[f64]) -> Result<RegressionResult> {
    let n = x.nrows();
    let m = x.ncols();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: y.len() });
    }
    if n <= m + 1 {
        return Err(Error::InsufficientData { needed: m + 1, found: n });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "endogenous vector" });
    }
    let ones = alloc::vec![1.0; n];
    let mut cols: Vec<&[f64]> = Vec::with_capacity(m + 1);
    cols.push(&ones);
    cols.extend(x.columns.iter().map(Vec::as_slice));
    let design = Matrix::from_columns(n, &cols)?;
    let qr = PivotedQr::new(&design, 1);
    if !qr.is_full_rank() {
        let columns = qr
            .dependent_columns()
            .into_iter()
            .map(|j| if j == 0 { INTERCEPT_NAME.into() } else { x.names[j - 1].clone() })
            .collect();
        return Err(Error::RankDeficient { columns });
    }
    let beta = qr.solve_least_squares(y);
    let fitted = design.mul_vec(&beta);
    let rss: f64 = y.iter().zip(&fitted).map(|(a, b)| (a - b) * (a - b)).sum();
    let y_mean = mean(y);
    let tss: f64 = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum();
    let df_resid = n - m - 1;
    let sigma2 = rss / df_resid as f64;
    let inv = qr.normal_inverse()?;

    let coefficients = beta
        .iter()
        .enumerate()
        .map(|(j, &b)| {
            let se = sqrt(sigma2 * inv[(j, j)].max(0.0));
            let t = b / se;
            Coefficient {
                name: if j == 0 { INTERCEPT_NAME.into() } else { x.names[j - 1].clone() },
                estimate: b,
                std_error: se,
                t_value: t,
                p_value: if se > 0.0 { student_t_two_sided_p(t, df_resid as f64) } else { 0.0 },
            }
        })
        .collect();

    let r_squared = if tss > 0.0 { (1.0 - rss / tss).clamp(0.0, 1.0) } else { 0.0 };
    let adj_r_squared = 1.0 - (1.0 - r_squared) * (n - 1) as f64 / df_resid as f64;
    let (f_statistic, f_p_value) = if m == 0 {
        (None, None)
    } else {
        let f = ((tss - rss).max(0.0) / m as f64) / (rss / df_resid as f64);
        let f = if rss == 0.0 { f64::INFINITY } else { f };
        (Some(f), Some(f_upper_p(f, m as f64, df_resid as f64)))
    };
    Ok(RegressionResult {
        coefficients,
        r_squared,
        adj_r_squared: adj_r_squared.min(r_squared),
        f_statistic,
        f_p_value,
        df_model: m,
        df_resid,
        n,
        rss,
        tss,
        transform: x.transform(),
        means: x.means.clone(),
        scales: x.scales.clone(),
    })
}

/// Stars by two-sided p-value: `***` < 0.01, `**` < 0.05, `*` < 0.1.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

/// `1 / (1 − R²_j)` from regressing column `j` on the others plus an
/// intercept; `+∞` when column `j` is (numerically) a linear combination of
/// them.
pub fn vif(x: &DesignMatrix, j: usize) -> Result<f64> {
    let m = x.ncols();
    if m < 2 {
        return Err(Error::InvalidParameter { name: "design", reason: "VIF needs at least 2 columns" });
    }
    if j >= m {
        return Err(Error::DimensionMismatch { expected: m, found: j });
    }
    let n = x.nrows();
    let target = x.column(j);
    let t_mean = mean(target);
    let tss: f64 = target.iter().map(|v| (v - t_mean) * (v - t_mean)).sum();
    if tss == 0.0 {
        return Ok(f64::INFINITY);
    }
    let ones = alloc::vec![1.0; n];
    let mut cols: Vec<&[f64]> = Vec::with_capacity(m);
    cols.push(&ones);
    cols.extend((0..m).filter(|&k| k != j).map(|k| x.column(k)));
    let design = Matrix::from_columns(n, &cols)?;
    let qr = PivotedQr::new(&design, 1);
    let beta = qr.solve_least_squares(target);
    let fitted = design.mul_vec(&beta);
    let rss: f64 = target.iter().zip(&fitted).map(|(a, b)| (a - b) * (a - b)).sum();
    if sqrt(rss / tss) <= RANK_TOL {
        return Ok(f64::INFINITY);
    }
    Ok((tss / rss).max(1.0))
}

pub fn vif_all(x: &DesignMatrix) -> Result<Vec<f64>> {
    (0..x.ncols()).map(|j| vif(x, j)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VifRemoval {
    pub step: usize,
    pub column: String,
    pub vif: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VifTable {
    pub threshold: f64,
    /// Final columns with their VIFs, all below the threshold.
    pub values: Vec<(String, f64)>,
    pub history: Vec<VifRemoval>,
}

// VIFs within this relative distance of the maximum tie.
const VIF_TIE_REL: f64 = 1e-9;

/// Removes the highest-VIF column until every VIF is below `threshold`.
/// Ties (including several infinite VIFs) go to the lexicographically
/// smallest column name.
pub fn prune_by_vif(x: &DesignMatrix, threshold: f64) -> Result<(DesignMatrix, VifTable)> {
    if !(threshold.is_finite() && threshold > 1.0) {
        return Err(Error::InvalidParameter { name: "VIF threshold", reason: "must exceed 1" });
    }
    let mut current = x.clone();
    let mut history = Vec::new();
    loop {
        let vifs = vif_all(&current)?;
        let max = vifs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max < threshold {
            let values = current.names().iter().cloned().zip(vifs).collect();
            return Ok((current, VifTable { threshold, values, history }));
        }
        if current.ncols() <= 2 {
            return Err(Error::OverPruned { remaining: current.names().to_vec() });
        }
        let tied = |v: f64| {
            if max.is_infinite() {
                v.is_infinite()
            } else {
                v >= max * (1.0 - VIF_TIE_REL)
            }
        };
        let (victim, vif_at_removal) = current
            .names()
            .iter()
            .zip(&vifs)
            .filter(|(_, &v)| tied(v))
            .min_by(|a, b| a.0.cmp(b.0))
            .map(|(n, &v)| (n.clone(), v))
            .expect("at least one column attains the maximum");
        history.push(VifRemoval { step: history.len(), column: victim.clone(), vif: vif_at_removal });
        current = current.without(&victim)?;
    }
}

/// `100·(exp(β·x) − 1)`: percent change in energy per area implied by a
/// log-linear coefficient and a feature deviation.
pub fn percent_deviation(beta: f64, x: f64) -> f64 {
    100.0 * libm::expm1(beta * x)
}

/// Percent deviation of several terms acting together: `100·(exp(Σ βₖ·xₖ) − 1)`.
pub fn combined_deviation(terms: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    100.0 * libm::expm1(terms.into_iter().map(|(b, x)| b * x).sum::<f64>())
}

/// Combined deviation of the named coefficients for one feature row, with
/// the row's raw values mapped into the regression's fitted units.
pub fn aggregate_deviation(result: &RegressionResult, row: &FeatureRow, subset: &[&str]) -> Result<f64> {
    let mut terms = Vec::with_capacity(subset.len());
    for &name in subset {
        let coef =
            result.slopes().iter().find(|c| c.name == name).ok_or_else(|| Error::UnknownName(name.into()))?;
        let raw = row.by_name(name).ok_or_else(|| Error::MissingFeature(name.into()))?;
        let x = result.to_fitted_units(name, raw).expect("slope exists");
        terms.push((coef.estimate, x));
    }
    Ok(combined_deviation(terms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{BuildingKey, Feature, KeyNormalization};
    use crate::time::YearMonth;
    use alloc::string::ToString;
    use alloc::vec;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| (*s).into()).collect()
    }

    #[test]
    fn transform_examples() {
        let x = DesignMatrix::new(names(&["a"]), vec![vec![1.0, 2.0, 3.0]]).unwrap();
        let c = transform_columns(&x, ColumnTransform::Center).unwrap();
        assert_eq!(c.column(0), &[-1.0, 0.0, 1.0]);
        let s = transform_columns(&x, ColumnTransform::Standardize).unwrap();
        assert_eq!(s.column(0), &[-1.0, 0.0, 1.0]);
        assert_eq!(s.scales(), &[1.0]);
        assert_eq!(s.restore().column(0), x.column(0));

        let k = DesignMatrix::new(names(&["a", "k"]), vec![vec![1.0, 2.0, 3.0], vec![4.0; 3]]).unwrap();
        assert_eq!(
            transform_columns(&k, ColumnTransform::Standardize),
            Err(Error::ZeroVariance { column: "k".into() })
        );
    }

    #[test]
    fn exact_fit_and_intercept_only() {
        let x = DesignMatrix::new(names(&["a"]), vec![vec![0.0, 1.0, 2.0, 3.0, 4.0]]).unwrap();
        let y: Vec<f64> = x.column(0).iter().map(|v| 2.0 + 3.0 * v).collect();
        let r = fit_ols(&x, &y).unwrap();
        assert!((r.intercept() - 2.0).abs() < 1e-12);
        assert!((r.slopes()[0].estimate - 3.0).abs() < 1e-12);
        assert!(r.rss < 1e-20);
        assert!((r.r_squared - 1.0).abs() < 1e-12);
        assert!(r.f_statistic.unwrap() > 1e20);

        let empty = DesignMatrix::intercept_only(4);
        let y = [1.0, 2.0, 3.0, 6.0];
        let r = fit_ols(&empty, &y).unwrap();
        assert!((r.intercept() - 3.0).abs() < 1e-14);
        assert!(r.r_squared.abs() < 1e-14);
        assert_eq!(r.f_statistic, None);
    }

    #[test]
    fn rank_deficiency_names_column() {
        let a = vec![1.0, 2.0, 3.0, 4.0, 5.0, 7.0];
        let b: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
        let x = DesignMatrix::new(names(&["a", "b"]), vec![a, b]).unwrap();
        let err = fit_ols(&x, &[1.0, 0.0, 2.0, 1.0, 3.0, 2.0]).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { ref columns } if columns.len() == 1));

        let k = DesignMatrix::new(names(&["a", "k"]), vec![vec![1.0, 2.0, 3.0, 5.0], vec![4.0; 4]]).unwrap();
        let err = fit_ols(&k, &[1.0, 0.0, 2.0, 1.0]).unwrap_err();
        assert_eq!(err, Error::RankDeficient { columns: vec!["k".into()] });
    }

    #[test]
    fn stars() {
        assert_eq!(significance_stars(0.001), "***");
        assert_eq!(significance_stars(0.03), "**");
        assert_eq!(significance_stars(0.07), "*");
        assert_eq!(significance_stars(0.5), "");
        assert_eq!(significance_stars(0.01), "**");
    }

    #[test]
    fn vif_examples() {
        let a = vec![1.0, -1.0, 1.0, -1.0];
        let b = vec![1.0, 1.0, -1.0, -1.0];
        let x = DesignMatrix::new(names(&["a", "b"]), vec![a.clone(), b]).unwrap();
        for v in vif_all(&x).unwrap() {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let x = DesignMatrix::new(names(&["a", "dup"]), vec![a.clone(), a]).unwrap();
        assert!(vif(&x, 0).unwrap().is_infinite());
        assert!(vif(&x.select(&["a"]).unwrap(), 0).is_err());
    }

    #[test]
    fn prune_examples() {
        let a = vec![1.0, -1.0, 1.0, -1.0, 0.5, -0.5];
        let b = vec![1.0, 1.0, -1.0, -1.0, 0.0, 0.0];
        let x = DesignMatrix::new(names(&["a", "b"]), vec![a.clone(), b.clone()]).unwrap();
        let (kept, table) = prune_by_vif(&x, 5.0).unwrap();
        assert_eq!(kept.ncols(), 2);
        assert!(table.history.is_empty());

        let dup = DesignMatrix::new(names(&["y", "x"]), vec![a.clone(), a.clone()]).unwrap();
        assert!(matches!(prune_by_vif(&dup, 5.0), Err(Error::OverPruned { .. })));

        let x = DesignMatrix::new(names(&["b", "z", "a"]), vec![a.clone(), b, a]).unwrap();
        let (kept, table) = prune_by_vif(&x, 5.0).unwrap();
        assert_eq!(table.history.len(), 1);
        assert_eq!(table.history[0].column, "a");
        assert!(table.history[0].vif.is_infinite());
        assert_eq!(kept.names(), &["b".to_string(), "z".to_string()]);
    }

    #[test]
    fn deviation_examples() {
        assert!((percent_deviation(-0.754, -0.04) - 3.06).abs() < 0.005);
        assert!((percent_deviation(-0.754, 0.11) + 7.96).abs() < 0.005);
        assert_eq!(percent_deviation(0.0, 123.0), 0.0);
        let ln2 = core::f64::consts::LN_2;
        assert!((combined_deviation([(1.0, ln2), (ln2, 1.0)]) - 300.0).abs() < 1e-12);
        assert_eq!(combined_deviation([]), 0.0);
    }

    #[test]
    fn aggregate_deviation_uses_fitted_units() {
        let x = DesignMatrix::new(
            names(&["NDVI", "WIND"]),
            vec![vec![0.0, 0.1, 0.2, 0.3, 0.1, 0.25], vec![1.0, 3.0, 2.0, 5.0, 4.0, 1.0]],
        )
        .unwrap();
        let xc = transform_columns(&x, ColumnTransform::Center).unwrap();
        let y = [0.1, -0.2, 0.3, 0.0, 0.05, 0.2];
        let r = fit_ols(&xc, &y).unwrap();
        let mut features = [Some(0.0); 12];
        features[Feature::Ndvi.index()] = Some(0.2);
        features[Feature::Wind.index()] = None;
        let row = FeatureRow {
            key: BuildingKey::new("1", "1", &KeyNormalization::default()),
            month: YearMonth::new(2019, 1).unwrap(),
            features,
            y_electric: None,
            y_gas: None,
        };
        let b = r.coefficient("NDVI").unwrap().estimate;
        let dev = aggregate_deviation(&r, &row, &["NDVI"]).unwrap();
        let expected = percent_deviation(b, 0.2 - xc.means()[0]);
        assert!((dev - expected).abs() < 1e-12);
        assert_eq!(aggregate_deviation(&r, &row, &[]).unwrap(), 0.0);
        assert_eq!(aggregate_deviation(&r, &row, &["WIND"]), Err(Error::MissingFeature("WIND".into())));
        assert!(aggregate_deviation(&r, &row, &["B1"]).is_err());
    }
}
