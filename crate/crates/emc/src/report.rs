//! Per-command run reports: stage timings and a digest for every output file.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub timings: Vec<StageTiming>,
    pub outputs: Vec<OutputFile>,
    /// Command-specific summary (attrition, ingestion, warnings...).
    pub details: Value,
}

pub fn report_file_name(command: &str) -> String {
    format!("report_{command}.json")
}

/// Collects stage timings and output files for one command.
#[derive(Debug)]
pub struct Recorder {
    command: String,
    seed: u64,
    started: Instant,
    timings: Vec<StageTiming>,
    outputs: Vec<OutputFile>,
}

impl Recorder {
    pub fn new(command: &str, seed: u64) -> Self {
        Recorder {
            command: command.into(),
            seed,
            started: Instant::now(),
            timings: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Runs `f`, recording its wall time under `stage`.
    pub fn time<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t0 = Instant::now();
        let out = f().map_err(|e| e.stage(stage));
        self.timings.push(StageTiming { stage: stage.into(), seconds: t0.elapsed().as_secs_f64() });
        out
    }

    /// Writes `bytes` to `dir/name` and records its digest.
    pub fn write(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.outputs.push(OutputFile {
            path: name.into(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn outputs(&self) -> &[OutputFile] {
        &self.outputs
    }

    /// Writes `report_<command>.json` next to the outputs.
    pub fn finish(mut self, dir: &Path, details: Value) -> Result<RunReport> {
        self.timings
            .push(StageTiming { stage: "total".into(), seconds: self.started.elapsed().as_secs_f64() });
        let report = RunReport {
            schema_version: REPORT_SCHEMA_VERSION,
            command: self.command,
            seed: self.seed,
            timings: self.timings,
            outputs: self.outputs,
            details,
        };
        let path = dir.join(report_file_name(&report.command));
        let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
        text.push('\n');
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(report)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verification {
    pub report: String,
    pub path: String,
    pub ok: bool,
    pub detail: String,
}

/// Recomputes the digest of every output listed in every report in `dir`.
pub fn verify_dir(dir: &Path) -> Result<Vec<Verification>> {
    let mut reports: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
        .filter(|n| n.starts_with("report_") && n.ends_with(".json"))
        .collect();
    reports.sort();
    if reports.is_empty() {
        return Err(Error::data(format!("no run reports in {}", dir.display())).stage("report"));
    }
    let mut out = Vec::new();
    for name in reports {
        let path = dir.join(&name);
        let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let report: RunReport =
            serde_json::from_slice(&text).map_err(|e| Error::parse(&path, e).stage("report"))?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::parse(&path, format!("unsupported schema_version {}", report.schema_version)));
        }
        for o in &report.outputs {
            let (ok, detail) = match fs::read(dir.join(&o.path)) {
                Err(e) => (false, e.to_string()),
                Ok(bytes) => {
                    let digest = sha256_hex(&bytes);
                    if digest == o.sha256 {
                        (true, "ok".into())
                    } else {
                        (false, format!("digest {digest} differs from recorded {}", o.sha256))
                    }
                }
            };
            out.push(Verification { report: name.clone(), path: o.path.clone(), ok, detail });
        }
    }
    Ok(out)
}
