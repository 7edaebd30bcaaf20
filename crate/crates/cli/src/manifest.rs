//! Run manifests: what was run, on which inputs, with which settings, and
//! what it produced.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct FileDigest {
    pub path: String,
    /// `None` when the file could not be read.
    pub sha256: Option<String>,
    pub bytes: Option<u64>,
}

impl FileDigest {
    pub fn of(path: &Path, shown_as: &Path) -> Self {
        match fs::read(path) {
            Ok(data) => Self {
                path: shown_as.display().to_string(),
                sha256: Some(hex::encode(Sha256::digest(&data))),
                bytes: Some(data.len() as u64),
            },
            Err(_) => Self {
                path: shown_as.display().to_string(),
                sha256: None,
                bytes: None,
            },
        }
    }
}

/// Digests of a file, or of every file below a directory in sorted order.
pub fn digest_tree(path: &Path) -> Vec<FileDigest> {
    if !path.is_dir() {
        return vec![FileDigest::of(path, path)];
    }
    let mut files = Vec::new();
    let mut stack = vec![path.to_path_buf()];
    while let Some(dir) = stack.pop() {
        if let Ok(entries) = fs::read_dir(&dir) {
            for e in entries.flatten() {
                let p = e.path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    files.push(p);
                }
            }
        }
    }
    files.sort();
    files.iter().map(|f| FileDigest::of(f, f)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct WallClock {
    pub started_unix_ms: u128,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub args: serde_json::Value,
    pub config: BTreeMap<String, String>,
    pub inputs: Vec<FileDigest>,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileDigest>,
    pub summary: serde_json::Value,
    pub status: String,
    pub exit_code: i32,
    pub error: Option<String>,
    pub wall_clock: Option<WallClock>,
}

/// Accumulates a manifest over one command run.
pub struct ManifestBuilder {
    manifest: RunManifest,
    out_dir: PathBuf,
    started: Option<(SystemTime, Instant)>,
}

impl ManifestBuilder {
    pub fn new(
        command: &str,
        seed: u64,
        args: serde_json::Value,
        config: Vec<(String, String)>,
        out_dir: &Path,
        wall_clock: bool,
    ) -> Self {
        Self {
            manifest: RunManifest {
                command: command.to_string(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                seed,
                args,
                config: config.into_iter().collect(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                summary: serde_json::Value::Null,
                status: "running".into(),
                exit_code: -1,
                error: None,
                wall_clock: None,
            },
            out_dir: out_dir.to_path_buf(),
            started: wall_clock.then(|| (SystemTime::now(), Instant::now())),
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.manifest.inputs.extend(digest_tree(path));
    }

    pub fn output(&mut self, path: &Path) {
        let shown = path.strip_prefix(&self.out_dir).unwrap_or(path);
        self.manifest.outputs.push(FileDigest::of(path, shown));
    }

    pub fn summary(&mut self, value: serde_json::Value) {
        self.manifest.summary = value;
    }

    pub fn finish(mut self, exit_code: i32, error: Option<String>) -> RunManifest {
        self.manifest.exit_code = exit_code;
        self.manifest.status = if exit_code == 0 { "ok" } else { "failed" }.into();
        self.manifest.error = error;
        self.manifest.wall_clock = self.started.map(|(sys, t)| WallClock {
            started_unix_ms: sys.duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0),
            elapsed_seconds: t.elapsed().as_secs_f64(),
        });
        self.manifest
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_known_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc.txt");
        fs::write(&p, b"abc").unwrap();
        let d = FileDigest::of(&p, Path::new("abc.txt"));
        assert_eq!(
            d.sha256.as_deref(),
            Some("ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad")
        );
        assert_eq!(d.bytes, Some(3));
        let missing = FileDigest::of(&dir.path().join("nope"), Path::new("nope"));
        assert_eq!(missing.sha256, None);
    }

    #[test]
    fn outputs_are_relative_to_out_dir() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        fs::write(&p, b"x").unwrap();
        let mut b = ManifestBuilder::new("gen", 1, serde_json::json!({}), vec![], dir.path(), false);
        b.output(&p);
        let m = b.finish(0, None);
        assert_eq!(m.outputs[0].path, "f.csv");
        assert_eq!(m.status, "ok");
        assert!(m.wall_clock.is_none());
    }
}
