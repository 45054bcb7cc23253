//! `cluster`: contribution matrix → Gaussian mixture → assignments, centroids, deviations.

use std::collections::BTreeMap;
use std::path::Path;

use emc_core::dataset::{BuildingKey, Target};
use emc_core::emc::{
    assign, centroid_summary, contribution_matrix, count_distribution, gmm_fit, unique_microclimate_count,
    Assignment, CentroidSummary, ContributionMatrix, EmcModel,
};
use emc_core::stats::{combined_deviation, ColumnTransform};
use emc_core::time::YearMonth;
use serde_json::json;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::numfmt::g17;
use crate::regress::{design_for, RegressionFile};
use crate::report::{Recorder, RunReport};
use crate::tables::read_feature_table;

pub const MODEL_JSON: &str = "emc_model.json";
pub const ASSIGNMENTS_CSV: &str = "assignments.csv";
pub const CENTROIDS_CSV: &str = "centroids.csv";
pub const DEVIATIONS_CSV: &str = "deviations.csv";
pub const COUNTS_CSV: &str = "microclimate_counts.csv";
pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct ClusterOutcome {
    pub keys: Vec<(BuildingKey, YearMonth)>,
    pub contributions: ContributionMatrix,
    pub model: EmcModel,
    pub assignments: Vec<Assignment>,
    pub summary: CentroidSummary,
    /// Per-row `100·(exp(Σ_j A_ij) − 1)` over the clustered columns.
    pub deviations: Vec<f64>,
    pub unique_counts: BTreeMap<BuildingKey, usize>,
    pub report: RunReport,
}

fn csv_bytes(rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn model_json(
    model: &EmcModel,
    c: &ContributionMatrix,
    target: Target,
    transform: ColumnTransform,
) -> String {
    let v = json!({
        "schema_version": MODEL_SCHEMA_VERSION,
        "target": target.name(),
        "transform": transform.name(),
        "columns": model.columns,
        "excluded": c.excluded,
        "intercept": c.intercept,
        "k": model.k,
        "covariance": model.covariance.name(),
        "seed": model.seed,
        "weights": model.weights,
        "means": model.means_original(),
        "covariances": model.covariances_original(),
        "standardization": {"means": model.standardization.means, "scales": model.standardization.scales},
        "standardized_means": model.means,
        "standardized_covariances": model.covariances,
        "log_likelihood": model.log_likelihood,
        "iterations": model.log_likelihood.len(),
        "converged": model.converged,
        "reseeded": model.reseeded,
    });
    let mut s = serde_json::to_string_pretty(&v).expect("model serializes");
    s.push('\n');
    s
}

/// Fits the mixture on the contributions of one stored regression result.
pub fn run_cluster(cfg: &RunConfig, table: &Path, regression: &Path) -> Result<ClusterOutcome> {
    cfg.validate()?;
    let target = Target::from_name(&cfg.emc.target)?;
    let transform = ColumnTransform::from_name(&cfg.emc.transform)?;
    let gmm = cfg.gmm_config()?;
    let mut rec = Recorder::new("cluster", cfg.seed);
    let (rows, file) =
        rec.time("ingest", || Ok((read_feature_table(table)?, RegressionFile::load(regression)?)))?;
    let record = file.find(target, transform).ok_or_else(|| {
        Error::config(format!(
            "{} has no {}/{} result",
            regression.display(),
            target.name(),
            transform.name()
        ))
        .stage("config")
    })?;
    let result = record.to_result()?;
    let excluded = cfg.excluded_columns();

    let (contributions, keys) = rec.time("stats", || {
        let names = result.column_names();
        let (raw, _, used) = design_for(&rows, target, &names)?;
        let x = raw.with_stored_transform(transform, &result.means, &result.scales)?;
        let excl: Vec<&str> = excluded.iter().map(String::as_str).collect();
        let c = contribution_matrix(&x, &result, &excl)?;
        let keys: Vec<(BuildingKey, YearMonth)> =
            used.iter().map(|&i| (rows[i].key.clone(), rows[i].month)).collect();
        Ok((c, keys))
    })?;
    let (model, assignments) = rec.time("emc", || {
        let model = gmm_fit(&contributions.values, &contributions.columns, &gmm)?;
        let a = assign(&model, &contributions.values)?;
        Ok((model, a))
    })?;
    let summary = centroid_summary(&model);
    let deviations: Vec<f64> =
        contributions.values.rows().map(|r| combined_deviation(r.iter().map(|&v| (1.0, v)))).collect();
    let unique_counts = match cfg.soft_assignment()? {
        None => {
            unique_microclimate_count(keys.iter().zip(&assignments).map(|((k, _), a)| (k.clone(), a.label)))
        }
        Some(min) => unique_microclimate_count(
            keys.iter()
                .zip(&assignments)
                .flat_map(|((k, _), a)| a.soft_labels(min).map(move |l| (k.clone(), l))),
        ),
    };

    let dir = &cfg.output_dir;
    rec.write(dir, MODEL_JSON, model_json(&model, &contributions, target, transform).as_bytes())?;

    let mut header = vec!["bbl".to_string(), "bin".into(), "month".into(), "label".into()];
    header.extend((0..model.k).map(|k| format!("resp_{k}")));
    let body = keys.iter().zip(&assignments).map(|((key, m), a)| {
        let mut r = vec![key.bbl.clone(), key.bin.clone(), m.to_string(), a.label.to_string()];
        r.extend(a.responsibilities.iter().map(|&p| g17(p)));
        r
    });
    rec.write(dir, ASSIGNMENTS_CSV, &csv_bytes(std::iter::once(header).chain(body)))?;

    let mut header = vec!["feature".to_string()];
    header.extend((0..model.k).map(|k| format!("emc_{k}")));
    let body = summary.columns.iter().zip(&summary.normalized).map(|(name, row)| {
        std::iter::once(name.clone()).chain(row.iter().map(|&v| g17(v))).collect::<Vec<_>>()
    });
    let dev_row = std::iter::once("pct_deviation".to_string())
        .chain(summary.aggregate_deviation.iter().map(|&v| g17(v)))
        .collect::<Vec<_>>();
    let share_row = std::iter::once("weight".to_string())
        .chain(model.weights.iter().map(|&v| g17(v)))
        .collect::<Vec<_>>();
    rec.write(
        dir,
        CENTROIDS_CSV,
        &csv_bytes(std::iter::once(header).chain(body).chain([dev_row, share_row])),
    )?;

    let header = ["bbl", "bin", "month", "pct_deviation"].map(String::from).to_vec();
    let body = keys
        .iter()
        .zip(&deviations)
        .map(|((key, m), d)| vec![key.bbl.clone(), key.bin.clone(), m.to_string(), g17(*d)]);
    rec.write(dir, DEVIATIONS_CSV, &csv_bytes(std::iter::once(header).chain(body)))?;

    let header = ["bbl", "bin", "unique_microclimates"].map(String::from).to_vec();
    let body = unique_counts.iter().map(|(k, n)| vec![k.bbl.clone(), k.bin.clone(), n.to_string()]);
    rec.write(dir, COUNTS_CSV, &csv_bytes(std::iter::once(header).chain(body)))?;

    let distribution: BTreeMap<String, usize> =
        count_distribution(&unique_counts).into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    let details = json!({
        "rows": keys.len(),
        "target": target.name(),
        "transform": transform.name(),
        "columns": contributions.columns,
        "excluded": contributions.excluded,
        "k": model.k,
        "converged": model.converged,
        "reseeded": model.reseeded,
        "final_log_likelihood": model.log_likelihood.last(),
        "assignment": cfg.emc.assignment,
        "unique_microclimate_distribution": distribution,
    });
    let report = rec.finish(dir, details)?;
    Ok(ClusterOutcome { keys, contributions, model, assignments, summary, deviations, unique_counts, report })
}
