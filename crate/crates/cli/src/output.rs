//! Output files and run manifests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const OUTPUT_DIR_ENV: &str = "STOCM_OUTPUT_DIR";

/// Resolves an output path: relative paths land in `$STOCM_OUTPUT_DIR` when
/// it is set, and `default_name` is used there when no path is given.
pub fn resolve(out: Option<&Path>, default_name: &str) -> Option<PathBuf> {
    let dir = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from);
    match (out, dir) {
        (Some(p), Some(d)) if p.is_relative() => Some(d.join(p)),
        (Some(p), _) => Some(p.to_path_buf()),
        (None, Some(d)) => Some(d.join(default_name)),
        (None, None) => None,
    }
}

#[derive(Serialize)]
struct OutputDigest {
    file: String,
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    schema_version: u32,
    kind: &'static str,
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    /// Arguments that reproduce the run; output and thread flags omitted.
    args: &'a [String],
    config: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    outputs: Vec<OutputDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn manifest_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.manifest.json"))
}

/// The run being recorded.
pub struct Run<'a> {
    pub command: &'a str,
    pub args: &'a [String],
    pub config: serde_json::Value,
    pub seed: Option<u64>,
}

/// Writes `contents` to `path` and a manifest beside it.
pub fn write_with_manifest(path: &Path, contents: &[u8], run: &Run) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))?;
    let manifest = RunManifest {
        schema_version: stocm::schema::SCHEMA_VERSION,
        kind: "run_manifest",
        tool: "stocm",
        version: env!("CARGO_PKG_VERSION"),
        command: run.command,
        args: run.args,
        config: run.config.clone(),
        seed: run.seed,
        outputs: vec![OutputDigest {
            file: path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            sha256: sha256_hex(contents),
        }],
    };
    let mpath = manifest_path(path);
    fs::write(&mpath, stocm::schema::to_json(&manifest)).map_err(|e| CliError::io(&mpath, e))?;
    Ok(())
}

/// Command-line arguments without `--out` and `--threads`, which do not
/// affect results.
pub fn reproducible_args() -> Vec<String> {
    let mut out = Vec::new();
    let mut args = std::env::args().skip(1);
    while let Some(a) = args.next() {
        if a == "--out" || a == "--threads" {
            args.next();
        } else if !(a.starts_with("--out=") || a.starts_with("--threads=")) {
            out.push(a);
        }
    }
    out
}
