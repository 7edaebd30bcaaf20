//! Atomic file output: every file is written under a temporary name in its
//! destination directory and renamed into place.

use std::fs;
use std::path::{Path, PathBuf};

use thumbsel::{Error, Result};

fn temp_sibling(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp"))
}

/// Runs `write` against a temporary path, then renames it to `path`.
pub fn write_atomic(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let tmp = temp_sibling(path);
    match write(&tmp) {
        Ok(()) => fs::rename(&tmp, path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(path, |tmp| {
        fs::write(tmp, bytes).map_err(|e| Error::Io {
            path: tmp.to_path_buf(),
            source: e,
        })
    })
}

/// Writes a set of files into `dir` through a staging directory; each file
/// is renamed into `dir` only after all of them were written.
pub fn write_staged(dir: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<Vec<PathBuf>> {
    let stage = dir.join(".staging.tmp");
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |e| Error::Io { path: p, source: e }
    };
    if stage.exists() {
        fs::remove_dir_all(&stage).map_err(io(&stage))?;
    }
    fs::create_dir_all(&stage).map_err(io(&stage))?;
    if let Err(e) = write(&stage) {
        let _ = fs::remove_dir_all(&stage);
        return Err(e);
    }
    let mut names: Vec<PathBuf> = fs::read_dir(&stage)
        .map_err(io(&stage))?
        .map(|e| e.map(|e| e.path()).map_err(io(&stage)))
        .collect::<Result<_>>()?;
    names.sort();
    let mut moved = Vec::with_capacity(names.len());
    for src in names {
        let dst = dir.join(src.file_name().expect("staged entry has a name"));
        fs::rename(&src, &dst).map_err(io(&dst))?;
        moved.push(dst);
    }
    fs::remove_dir(&stage).map_err(io(&stage))?;
    Ok(moved)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failed_write_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("x.csv");
        let err = write_atomic(&target, |tmp| {
            fs::write(tmp, b"partial").unwrap();
            Err(Error::Invalid("boom".into()))
        });
        assert!(err.is_err());
        assert!(!target.exists());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn staged_files_land_in_place() {
        let dir = tempfile::tempdir().unwrap();
        let moved = write_staged(dir.path(), |stage| {
            fs::write(stage.join("b.txt"), b"b").unwrap();
            fs::write(stage.join("a.txt"), b"a").unwrap();
            Ok(())
        })
        .unwrap();
        assert_eq!(moved.len(), 2);
        assert_eq!(fs::read(dir.path().join("a.txt")).unwrap(), b"a");
        assert!(!dir.path().join(".staging.tmp").exists());
    }
}
