//! Point-level result cache.
//!
//! One JSON file per work unit, addressed by `sha256(library version, config hash,
//! unit coordinates)`. The payload is stored as a string next to its own SHA-256 so
//! corruption is detected before anything is deserialized.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::hex;
use crate::error::{CliError, Result};

pub const CACHE_ENV: &str = "LOCSENSE_CACHE_DIR";
pub const DEFAULT_CACHE_DIR: &str = ".locsense-cache";

#[derive(Serialize, Deserialize)]
struct Entry {
    library_version: String,
    config_hash: String,
    coordinates: String,
    sha256: String,
    payload: String,
}

pub struct Cache {
    dir: PathBuf,
    config_hash: String,
    /// Skip lookups (results are still written).
    force: bool,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl Cache {
    pub fn new(dir: impl Into<PathBuf>, config_hash: impl Into<String>, force: bool) -> Self {
        Self {
            dir: dir.into(),
            config_hash: config_hash.into(),
            force,
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn path_for(&self, coordinates: &str) -> PathBuf {
        let mut h = Sha256::new();
        for part in [locsense::VERSION, &self.config_hash, coordinates] {
            h.update(part.as_bytes());
            h.update([0]);
        }
        let key = hex(&h.finalize());
        self.dir.join(&key[..2]).join(format!("{key}.json"))
    }

    pub fn load<T: DeserializeOwned>(&self, coordinates: &str) -> Result<Option<T>> {
        if self.force {
            return Ok(None);
        }
        let path = self.path_for(coordinates);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(CliError::io(&path, e)),
        };
        let entry: Entry = serde_json::from_str(&text).map_err(|e| CliError::CacheFormat {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        if hex(&Sha256::digest(entry.payload.as_bytes())) != entry.sha256 {
            return Err(CliError::Checksum(path));
        }
        if entry.coordinates != coordinates
            || entry.config_hash != self.config_hash
            || entry.library_version != locsense::VERSION
        {
            return Err(CliError::CacheFormat {
                path,
                reason: "key collision".into(),
            });
        }
        let value = serde_json::from_str(&entry.payload).map_err(|e| CliError::CacheFormat {
            path,
            reason: e.to_string(),
        })?;
        Ok(Some(value))
    }

    /// Writes through a temporary file and a rename so readers never see a torn entry.
    pub fn store<T: Serialize>(&self, coordinates: &str, value: &T) -> Result<()> {
        let path = self.path_for(coordinates);
        let parent = path.parent().expect("cache path has a parent");
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        let payload = serde_json::to_string(value)?;
        let entry = Entry {
            library_version: locsense::VERSION.into(),
            config_hash: self.config_hash.clone(),
            coordinates: coordinates.into(),
            sha256: hex(&Sha256::digest(payload.as_bytes())),
            payload,
        };
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, serde_json::to_string(&entry)?).map_err(|e| CliError::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| CliError::io(&path, e))?;
        Ok(())
    }

    /// Cached value, or `compute` with one retry on failure.
    pub fn get_or_compute<T, F>(&self, coordinates: &str, compute: F) -> Result<T>
    where
        T: Serialize + DeserializeOwned,
        F: Fn() -> Result<T>,
    {
        if let Some(v) = self.load(coordinates)? {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(v);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let value = compute().or_else(|_| compute())?;
        self.store(coordinates, &value)?;
        Ok(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path(), "abc", false);
        assert_eq!(cache.load::<Vec<f64>>("L=21").unwrap(), None);
        cache.store("L=21", &vec![1.0, 0.1 + 0.2]).unwrap();
        assert_eq!(cache.load::<Vec<f64>>("L=21").unwrap(), Some(vec![1.0, 0.1 + 0.2]));

        let path = cache.path_for("L=21");
        let text = fs::read_to_string(&path).unwrap().replace("1.0,", "2.0,");
        fs::write(&path, text).unwrap();
        assert!(matches!(cache.load::<Vec<f64>>("L=21"), Err(CliError::Checksum(_))));
    }

    #[test]
    fn keys_depend_on_config_and_coordinates() {
        let a = Cache::new("/c", "h1", false);
        let b = Cache::new("/c", "h2", false);
        assert_ne!(a.path_for("x"), b.path_for("x"));
        assert_ne!(a.path_for("x"), a.path_for("y"));
    }

    #[test]
    fn failed_unit_is_retried_once() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path(), "abc", false);
        let calls = AtomicUsize::new(0);
        let v: f64 = cache
            .get_or_compute("flaky", || {
                if calls.fetch_add(1, Ordering::SeqCst) == 0 {
                    Err(CliError::Config("transient".into()))
                } else {
                    Ok(4.0)
                }
            })
            .unwrap();
        assert_eq!(v, 4.0);
        assert_eq!(calls.load(Ordering::SeqCst), 2);
        let always = cache.get_or_compute::<f64, _>("broken", || Err(CliError::Config("no".into())));
        assert!(always.is_err());
    }
}
