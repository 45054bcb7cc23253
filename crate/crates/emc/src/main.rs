use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use emc::cluster::run_cluster;
use emc::config::{Overrides, RunConfig};
use emc::features::{run_features, FEATURE_TABLE};
use emc::map::{run_map, MonthSelection, MAP_GEOJSON};
use emc::regress::{run_regress, REGRESSION_JSON};
use emc::report::verify_dir;
use emc::{Error, Result};
use serde_json::json;

#[derive(Parser)]
#[command(name = "emc", version, about = "Energy-microclimate feature extraction, regression and clustering")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the monthly feature table from footprints, scenes, reanalysis and energy data.
    Features,
    /// Fit the VIF-pruned regressions for every target and transform.
    Regress {
        /// Feature table (default: <out>/features.csv).
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Cluster the contribution matrix into energy microclimates.
    Cluster {
        #[arg(long)]
        table: Option<PathBuf>,
        /// Regression results (default: <out>/regression.json).
        #[arg(long)]
        regression: Option<PathBuf>,
    },
    /// Join assignments or deviations to footprints as GeoJSON.
    Map {
        /// assignments.csv or deviations.csv.
        #[arg(long)]
        input: PathBuf,
        /// YYYY-MM or `all`.
        #[arg(long, default_value = "all")]
        month: String,
        #[arg(long, default_value = MAP_GEOJSON)]
        output: String,
    },
    /// Recompute and check the digests recorded in the output directory.
    Report,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides { seed: cli.seed, out: cli.out.clone(), threads: cli.threads });
    cfg.validate()?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<serde_json::Value> {
    let cfg = load_config(&cli)?;
    let out = cfg.output_dir.clone();
    let summary = match cli.command {
        Command::Features => {
            let o = run_features(&cfg)?;
            json!({"command": "features", "attrition": emc::features::attrition_json(&o.assembly)})
        }
        Command::Regress { table } => {
            let o = run_regress(&cfg, &table.unwrap_or_else(|| out.join(FEATURE_TABLE)))?;
            json!({"command": "regress", "fits": o.file.results.len()})
        }
        Command::Cluster { table, regression } => {
            let o = run_cluster(
                &cfg,
                &table.unwrap_or_else(|| out.join(FEATURE_TABLE)),
                &regression.unwrap_or_else(|| out.join(REGRESSION_JSON)),
            )?;
            json!({"command": "cluster", "rows": o.keys.len(), "k": o.model.k, "converged": o.model.converged})
        }
        Command::Map { input, month, output } => {
            let month: MonthSelection = month.parse()?;
            let o = run_map(&cfg, &input, month, &output)?;
            json!({"command": "map", "features": o.geojson["features"].as_array().map_or(0, Vec::len), "unmatched": o.unmatched.len()})
        }
        Command::Report => {
            let checks = verify_dir(&out)?;
            let failed: Vec<_> = checks.iter().filter(|c| !c.ok).collect();
            if !failed.is_empty() {
                let list = failed
                    .iter()
                    .map(|c| format!("{} ({})", c.path, c.detail))
                    .collect::<Vec<_>>()
                    .join(", ");
                return Err(Error::data(format!("digest mismatch: {list}")).stage("report"));
            }
            json!({"command": "report", "verified": checks})
        }
    };
    Ok(summary)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = Error::config(e.to_string().trim().to_string()).stage("config");
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
