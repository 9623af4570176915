//! Run directory layout and the manifest.
//!
//! Every invocation creates `<out>/<UTC timestamp>-<hash>/`, where the hash is
//! the first 12 hex digits of SHA-256 over the experiment name and the raw
//! config text. `manifest.json` is written on every path, including config
//! errors and numerical failures.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::config::{ConfigInvalid, Experiment, RunConfig};
use crate::experiments::{self, Artifact, Timings};

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub dir: PathBuf,
    pub manifest: Value,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn config_hash(experiment: Experiment, text: &str) -> String {
    let mut h = Sha256::new();
    h.update(experiment.name().as_bytes());
    h.update([0u8]);
    h.update(text.as_bytes());
    hex(&h.finalize())[..12].to_string()
}

/// Creates a fresh run directory under `parent`.
pub fn make_run_dir(parent: &Path, hash: &str) -> io::Result<PathBuf> {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    fs::create_dir_all(parent)?;
    let base = format!("{stamp}-{hash}");
    let mut dir = parent.join(&base);
    let mut i = 1;
    while dir.exists() {
        dir = parent.join(format!("{base}-{i}"));
        i += 1;
    }
    fs::create_dir(&dir)?;
    Ok(dir)
}

fn write_manifest(dir: &Path, manifest: &Value) -> io::Result<()> {
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(manifest).expect("serializable") + "\n",
    )
}

fn base_manifest(experiment: Experiment, hash: &str, threads: usize) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("tool".into(), json!(env!("CARGO_PKG_NAME")));
    m.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    m.insert("experiment".into(), json!(experiment.name()));
    m.insert("config_hash".into(), json!(hash));
    m.insert("threads".into(), json!(threads));
    m
}

/// Runs `experiment` on the raw config text. `out` overrides the config's
/// output parent.
pub fn run(experiment: Experiment, config_text: &str, out: Option<&Path>, threads: usize) -> io::Result<RunOutcome> {
    let hash = config_hash(experiment, config_text);
    let mut manifest = base_manifest(experiment, &hash, threads);
    let parsed = RunConfig::parse(experiment, config_text);
    let parent = match (out, &parsed) {
        (Some(p), _) => p.to_path_buf(),
        (None, Ok(cfg)) => cfg.out.clone(),
        (None, Err(_)) => PathBuf::from("runs"),
    };
    let dir = make_run_dir(&parent, &hash)?;
    let cfg = match parsed {
        Ok(cfg) => cfg,
        Err(ConfigInvalid(errors)) => {
            manifest.insert("status".into(), json!("config_invalid"));
            manifest.insert(
                "errors".into(),
                json!(errors
                    .iter()
                    .map(|e| json!({"field": e.field, "message": e.message}))
                    .collect::<Vec<_>>()),
            );
            let manifest = Value::Object(manifest);
            write_manifest(&dir, &manifest)?;
            return Ok(RunOutcome {
                exit_code: EXIT_CONFIG,
                dir,
                manifest,
            });
        }
    };
    manifest.insert("config".into(), json!(cfg.echo()));
    let mut timings = Timings::default();
    let start = std::time::Instant::now();
    let result = experiments::run(&cfg, &mut timings);
    let total = start.elapsed().as_secs_f64();
    let mut wall = Map::new();
    for (k, v) in &timings.0 {
        wall.insert(k.clone(), json!(v));
    }
    wall.insert("total".into(), json!(total));
    manifest.insert("wall_seconds".into(), Value::Object(wall));
    let exit_code = match result {
        Ok(report) => {
            let (files, summary) = report.render(&cfg);
            let listing = write_artifacts(&dir, &files)?;
            manifest.insert("status".into(), json!("ok"));
            manifest.insert("files".into(), listing);
            manifest.insert("summary".into(), Value::Object(summary));
            EXIT_OK
        }
        Err(e) => {
            manifest.insert("status".into(), json!("numerical_failure"));
            manifest.insert("errors".into(), json!([e.to_string()]));
            EXIT_NUMERICAL
        }
    };
    let manifest = Value::Object(manifest);
    write_manifest(&dir, &manifest)?;
    Ok(RunOutcome {
        exit_code,
        dir,
        manifest,
    })
}

fn write_artifacts(dir: &Path, files: &[Artifact]) -> io::Result<Value> {
    let mut listing = Map::new();
    for f in files {
        fs::write(dir.join(&f.name), &f.content)?;
        listing.insert(f.name.clone(), json!(hex(&Sha256::digest(f.content.as_bytes()))));
    }
    Ok(Value::Object(listing))
}

/// Writes a manifest for a failure that happened before a config was read.
pub fn early_failure(experiment: Experiment, out: &Path, message: &str, threads: usize) -> io::Result<RunOutcome> {
    let hash = config_hash(experiment, "");
    let mut manifest = base_manifest(experiment, &hash, threads);
    manifest.insert("status".into(), json!("config_invalid"));
    manifest.insert("errors".into(), json!([{"field": "config", "message": message}]));
    let dir = make_run_dir(out, &hash)?;
    let manifest = Value::Object(manifest);
    write_manifest(&dir, &manifest)?;
    Ok(RunOutcome {
        exit_code: EXIT_CONFIG,
        dir,
        manifest,
    })
}
