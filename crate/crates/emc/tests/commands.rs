use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use emc::cluster::{run_cluster, ASSIGNMENTS_CSV, DEVIATIONS_CSV};
use emc::config::RunConfig;
use emc::features::FEATURE_TABLE;
use emc::geojson::parse_footprints;
use emc::map::{run_map, MonthSelection};
use emc::regress::{run_regress, REGRESSION_JSON};
use emc::synth::{regime_table, write_city, CityConfig, RegimeConfig};
use emc::tables::format_feature_table;
use emc_core::emc::adjusted_rand_index;
use serde_json::Value;

fn regime_dir(cfg: &RegimeConfig, run: RunConfig) -> (tempfile::TempDir, RunConfig, Vec<usize>) {
    let dir = tempfile::tempdir().unwrap();
    let t = regime_table(cfg).unwrap();
    fs::write(dir.path().join(FEATURE_TABLE), format_feature_table(&t.rows)).unwrap();
    let run = RunConfig { output_dir: dir.path().to_path_buf(), ..run };
    (dir, run, t.regimes)
}

fn regress_and_cluster(run: &RunConfig) -> emc::cluster::ClusterOutcome {
    let out = &run.output_dir;
    run_regress(run, &out.join(FEATURE_TABLE)).unwrap();
    run_cluster(run, &out.join(FEATURE_TABLE), &out.join(REGRESSION_JSON)).unwrap()
}

#[test]
fn two_regime_table_is_recovered_exactly() {
    let cfg = RegimeConfig { cycle: false, ..RegimeConfig::new(40, 6, 2, 5) };
    let mut run = RunConfig::default();
    run.emc.k = 2;
    run.emc.environment_only = true;
    let (_dir, run, truth) = regime_dir(&cfg, run);
    let c = regress_and_cluster(&run);
    let labels: Vec<usize> = c.assignments.iter().map(|a| a.label).collect();
    assert_eq!(adjusted_rand_index(&labels, &truth).unwrap(), 1.0);
    assert!(c.contributions.columns.iter().all(|n| n != "avg_rad" && n != "assesstot" && n != "yearbuilt"));
}

#[test]
fn single_component_gives_one_microclimate_each() {
    let cfg = RegimeConfig::new(6, 8, 4, 2);
    let mut run = RunConfig::default();
    run.emc.k = 1;
    let (_dir, run, _) = regime_dir(&cfg, run);
    let c = regress_and_cluster(&run);
    assert!(c.assignments.iter().all(|a| a.label == 0));
    assert!(c.unique_counts.values().all(|&n| n == 1));
    assert_eq!(c.unique_counts.len(), 6);
}

#[test]
fn soft_counts_are_never_below_hard_counts() {
    let cfg = RegimeConfig { within_sd: 0.6, ..RegimeConfig::new(12, 12, 4, 6) };
    let mut run = RunConfig::default();
    run.emc.k = 4;
    run.emc.environment_only = true;
    let (_dir, mut run, _) = regime_dir(&cfg, run);
    let hard = regress_and_cluster(&run).unique_counts;
    run.emc.assignment = "soft".into();
    run.emc.min_responsibility = 0.05;
    let out = &run.output_dir;
    let soft = run_cluster(&run, &out.join(FEATURE_TABLE), &out.join(REGRESSION_JSON)).unwrap().unique_counts;
    assert!(hard.iter().all(|(k, n)| soft[k] >= *n));

    run.emc.assignment = "fuzzy".into();
    let e = run_cluster(&run, &out.join(FEATURE_TABLE), &out.join(REGRESSION_JSON)).unwrap_err();
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn decomposition_reproduces_fitted_values() {
    let cfg = RegimeConfig::new(10, 12, 8, 3);
    let mut run = RunConfig::default();
    run.emc.k = 3;
    let (_dir, run, _) = regime_dir(&cfg, run);
    let c = regress_and_cluster(&run);
    let file = emc::regress::RegressionFile::load(&run.output_dir.join(REGRESSION_JSON)).unwrap();
    let rec =
        file.find(emc_core::dataset::Target::Electric, emc_core::stats::ColumnTransform::Center).unwrap();
    let result = rec.to_result().unwrap();
    let rows = emc::tables::read_feature_table(&run.output_dir.join(FEATURE_TABLE)).unwrap();
    let names = result.column_names();
    let (x, _, _) = emc::regress::design_for(&rows, emc_core::dataset::Target::Electric, &names).unwrap();
    let x = x.with_stored_transform(result.transform, &result.means, &result.scales).unwrap();
    for (i, p) in c.contributions.predictions().iter().enumerate() {
        assert!((p - result.predict(&x.row(i))).abs() < 1e-10);
    }
}

#[test]
fn too_few_rows_for_k_is_an_error() {
    let cfg = RegimeConfig::new(20, 1, 2, 1);
    let mut run = RunConfig::default();
    run.emc.k = 32;
    let (_dir, run, _) = regime_dir(&cfg, run);
    run_regress(&run, &run.output_dir.join(FEATURE_TABLE)).unwrap();
    let e = run_cluster(&run, &run.output_dir.join(FEATURE_TABLE), &run.output_dir.join(REGRESSION_JSON))
        .unwrap_err();
    assert_eq!(e.exit_code(), 3, "{e}");
}

fn city_with_map_inputs() -> (tempfile::TempDir, RunConfig) {
    let dir = tempfile::tempdir().unwrap();
    let city = write_city(dir.path(), &CityConfig::new(4, 2, 9)).unwrap();
    let mut cfg = RunConfig::load(&city.config_path).unwrap();
    cfg.output_dir = dir.path().join("out");
    (dir, cfg)
}

#[test]
fn map_carries_deviation_and_round_trips_geometry() {
    let (dir, cfg) = city_with_map_inputs();
    let bytes = fs::read(cfg.footprints.as_ref().unwrap()).unwrap();
    let (fps, _) = parse_footprints(&bytes).unwrap();
    let dev = dir.path().join("dev.csv");
    fs::write(
        &dev,
        format!(
            "bbl,bin,month,pct_deviation\n{},{},2018-01,3.06\n0000,0,2018-01,1.0\n",
            fps[0].bbl, fps[0].bin
        ),
    )
    .unwrap();
    let out = run_map(&cfg, &dev, MonthSelection::Month("2018-01".parse().unwrap()), "map.geojson").unwrap();
    let feats = out.geojson["features"].as_array().unwrap();
    assert_eq!(feats.len(), 1);
    assert_eq!(feats[0]["properties"]["pct_deviation"], Value::from(3.06));
    assert_eq!(feats[0]["properties"]["month"], "2018-01");
    assert_eq!(out.unmatched.len(), 1);

    let written = fs::read(cfg.output_dir.join("map.geojson")).unwrap();
    let (back, report) = parse_footprints(&written).unwrap();
    assert!(report.skipped.is_empty());
    for (a, b) in back[0].footprint.vertices().iter().zip(fps[0].footprint.vertices()) {
        assert!((a.x - b.x).abs() <= 1e-12 && (a.y - b.y).abs() <= 1e-12);
    }
}

#[test]
fn empty_assignment_file_gives_empty_collection() {
    let (dir, cfg) = city_with_map_inputs();
    let empty = dir.path().join("assignments.csv");
    fs::write(&empty, "").unwrap();
    let out = run_map(&cfg, &empty, MonthSelection::All, "map.geojson").unwrap();
    assert_eq!(out.geojson["features"].as_array().unwrap().len(), 0);
    assert_eq!(out.warnings.len(), 1);
}

fn emc_bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_emc"))
}

fn run_cli(args: &[&str], cwd: &Path) -> (i32, String, String) {
    let out = Command::new(emc_bin()).args(args).current_dir(cwd).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn json_error(stderr: &str) -> Value {
    serde_json::from_str(stderr.lines().last().expect("stderr line")).expect("JSON error")
}

#[test]
fn cli_full_run_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let city = write_city(dir.path(), &CityConfig::new(9, 12, 21)).unwrap();
    let config = city.config_path.to_str().unwrap();
    for cmd in ["features", "regress"] {
        let (code, _, err) = run_cli(&["--config", config, "--threads", "2", cmd], dir.path());
        assert_eq!(code, 0, "{cmd}: {err}");
    }
    let (code, _, err) = run_cli(&["--config", config, "--seed", "5", "cluster"], dir.path());
    assert_eq!(code, 0, "{err}");
    let out = dir.path().join("out");
    for input in [ASSIGNMENTS_CSV, DEVIATIONS_CSV] {
        let path = out.join(input);
        let (code, stdout, err) = run_cli(
            &[
                "--config",
                config,
                "map",
                "--input",
                path.to_str().unwrap(),
                "--output",
                &format!("{input}.geojson"),
            ],
            dir.path(),
        );
        assert_eq!(code, 0, "{err}");
        assert!(stdout.contains("\"features\":9"), "{stdout}");
    }
    let model: Value = serde_json::from_slice(&fs::read(out.join("emc_model.json")).unwrap()).unwrap();
    assert_eq!(model["seed"], 5);
    let (code, stdout, err) = run_cli(&["--config", config, "report"], dir.path());
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("\"ok\":true"));

    fs::write(out.join(FEATURE_TABLE), "tampered").unwrap();
    let (code, _, err) = run_cli(&["--config", config, "report"], dir.path());
    assert_eq!(code, 3);
    assert!(json_error(&err)["error"]["message"].as_str().unwrap().contains(FEATURE_TABLE));
}

#[test]
fn cli_failures_are_json_with_class_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), r#"{"buffer_radius_m": 0}"#).unwrap();
    let (code, _, err) = run_cli(&["--config", "bad.json", "features"], dir.path());
    assert_eq!(code, 2);
    assert_eq!(json_error(&err)["error"]["class"], "config");

    let (code, _, err) = run_cli(&["--bogus"], dir.path());
    assert_eq!(code, 2);
    assert_eq!(json_error(&err)["exit_code"], 2);

    // Malformed footprints: data error with a byte offset.
    fs::write(dir.path().join("fp.geojson"), r#"{"type": "FeatureCollection", "features": [}"#).unwrap();
    fs::write(dir.path().join("e.csv"), "bbl,bin,year,month,electricity_mwh,gas_mwh\n").unwrap();
    fs::write(dir.path().join("a.csv"), "bbl,bin,bldgarea_sqft,assesstot_usd,yearbuilt\n").unwrap();
    fs::write(
        dir.path().join("run.json"),
        r#"{"footprints": "fp.geojson", "energy": "e.csv", "attributes": "a.csv"}"#,
    )
    .unwrap();
    let (code, _, err) = run_cli(&["--config", "run.json", "features"], dir.path());
    assert_eq!(code, 3, "{err}");
    let e = json_error(&err);
    assert_eq!(e["error"]["offset"], 43);
    assert_eq!(e["error"]["stage"], "ingest");

    // A constant column is a numerical error naming the column.
    let t = regime_table(&RegimeConfig::new(5, 6, 2, 1)).unwrap();
    let mut rows = t.rows;
    for r in &mut rows {
        r.features[emc_core::dataset::Feature::Tcdc.index()] = Some(50.0);
    }
    fs::write(dir.path().join("t.csv"), format_feature_table(&rows)).unwrap();
    let (code, _, err) = run_cli(&["regress", "--table", "t.csv", "--out", "o"], dir.path());
    assert_eq!(code, 4);
    let e = json_error(&err);
    assert!(e["error"]["message"].as_str().unwrap().contains("TCDC"));
    assert_eq!(e["error"]["entity"], "electric");
}

#[test]
fn cli_outputs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let city = write_city(dir.path(), &CityConfig::new(8, 6, 13)).unwrap();
    let config = city.config_path.to_str().unwrap();
    let mut tables = Vec::new();
    for threads in ["1", "4"] {
        let out = format!("out{threads}");
        for cmd in ["features", "regress"] {
            let (code, _, err) =
                run_cli(&["--config", config, "--threads", threads, "--out", &out, cmd], dir.path());
            assert_eq!(code, 0, "{err}");
        }
        let out = dir.path().join(&out);
        tables
            .push((fs::read(out.join(FEATURE_TABLE)).unwrap(), fs::read(out.join(REGRESSION_JSON)).unwrap()));
    }
    assert!(tables[0] == tables[1]);
}
