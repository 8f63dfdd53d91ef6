//! Content-addressed artifact cache with atomic writes.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Writes `path` by filling a sibling temporary file and renaming it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = File::create(&tmp).and_then(|file| {
        let mut out = BufWriter::new(file);
        f(&mut out)?;
        out.flush()?;
        out.get_ref().sync_all()
    });
    if let Err(e) = result.and_then(|_| fs::rename(&tmp, path)) {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

/// SHA-256 of a file's contents, hex encoded.
pub fn file_digest(path: &Path) -> Result<String> {
    let mut input = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = input.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Cache key of a stage: SHA-256 over the stage label and the JSON form of
/// everything the stage depends on (including upstream keys).
pub fn stage_key(stage: &str, inputs: &impl Serialize) -> String {
    let json = serde_json::to_vec(inputs).expect("cache key inputs serialise");
    let mut hasher = Sha256::new();
    hasher.update(stage.as_bytes());
    hasher.update([0]);
    hasher.update(&json);
    hex::encode(hasher.finalize())
}

/// Artifacts live at `<dir>/<stage>-<key>.bin` next to a `.sha256` file
/// holding the digest of the artifact bytes. A missing, unreadable or
/// mismatching digest means the artifact is recomputed.
#[derive(Debug)]
pub struct Cache {
    dir: PathBuf,
    pub hits: usize,
    pub misses: usize,
}

impl Cache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Cache {
            dir,
            hits: 0,
            misses: 0,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn artifact_path(&self, stage: &str, key: &str) -> PathBuf {
        self.dir.join(format!("{stage}-{}.bin", &key[..32.min(key.len())]))
    }

    fn digest_path(artifact: &Path) -> PathBuf {
        let mut name = artifact.as_os_str().to_owned();
        name.push(".sha256");
        PathBuf::from(name)
    }

    fn is_valid(artifact: &Path) -> bool {
        let Ok(expected) = fs::read_to_string(Self::digest_path(artifact)) else {
            return false;
        };
        match file_digest(artifact) {
            Ok(actual) => actual == expected.trim(),
            Err(_) => false,
        }
    }

    /// Returns the cached artifact for `(stage, key)` or computes, saves and
    /// returns it.
    pub fn get_or_compute<T>(
        &mut self,
        stage: &str,
        key: &str,
        load: impl FnOnce(&Path) -> Result<T>,
        save: impl FnOnce(&T, &Path) -> Result<()>,
        compute: impl FnOnce() -> Result<T>,
    ) -> Result<T> {
        let path = self.artifact_path(stage, key);
        if Self::is_valid(&path) {
            match load(&path) {
                Ok(value) => {
                    log::info!("{stage}: cache hit {}", path.display());
                    self.hits += 1;
                    return Ok(value);
                }
                Err(e) => log::warn!("{stage}: unreadable cache entry {} ({e}), recomputing", path.display()),
            }
        } else if path.exists() {
            log::warn!("{stage}: cache digest mismatch for {}, recomputing", path.display());
        }
        self.misses += 1;
        let value = compute()?;
        save(&value, &path)?;
        let digest = file_digest(&path)?;
        let digest_path = Self::digest_path(&path);
        write_atomic(&digest_path, |w| writeln!(w, "{digest}"))?;
        Ok(value)
    }
}
