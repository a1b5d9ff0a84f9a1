//! Content-addressed store of solved records.
//!
//! Each entry is `<key>.cqf` (profile) plus `<key>.json` (metadata), where the
//! key hashes the exact bits of `(ω, tol)` and the grid rule. The JSON file is
//! written last, so its presence marks a complete entry. Both files go through
//! an atomic rename, which makes concurrent writers of the same key harmless.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{solve_ground_state, RecordMeta, SolitonRecord};
use crate::error::Result;
use crate::fields::io::{read_radial, write_atomic, write_radial};

/// Bumped whenever the solver or its grid rule changes output.
pub const GRID_RULE: &str = "uniform-simpson-fd4-v2";

#[derive(Debug, Clone)]
pub struct SolitonCache {
    dir: PathBuf,
}

impl SolitonCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        SolitonCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(omega: f64, tol: f64) -> String {
        let mut hasher = Sha256::new();
        hasher.update(format!("{GRID_RULE}:{:016x}:{:016x}", omega.to_bits(), tol.to_bits()));
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn paths(&self, omega: f64, tol: f64) -> (PathBuf, PathBuf) {
        let key = Self::key(omega, tol);
        (self.dir.join(format!("{key}.json")), self.dir.join(format!("{key}.cqf")))
    }

    pub fn load(&self, omega: f64, tol: f64) -> Result<Option<SolitonRecord>> {
        let (meta_path, profile_path) = self.paths(omega, tol);
        if !meta_path.exists() {
            return Ok(None);
        }
        let meta: RecordMeta = serde_json::from_slice(&std::fs::read(&meta_path)?)?;
        let profile = read_radial(&profile_path)?;
        Ok(Some(SolitonRecord::from_parts(meta, profile)?))
    }

    pub fn store(&self, rec: &SolitonRecord) -> Result<()> {
        let (meta_path, profile_path) = self.paths(rec.omega, rec.tol);
        write_radial(&profile_path, &rec.profile)?;
        write_atomic(&meta_path, &serde_json::to_vec_pretty(&rec.meta())?)
    }

    /// Returns the record and whether it came from the cache.
    pub fn get_or_solve(&self, omega: f64, tol: f64) -> Result<(SolitonRecord, bool)> {
        if let Some(rec) = self.load(omega, tol)? {
            return Ok((rec, true));
        }
        let rec = solve_ground_state(omega, tol)?;
        self.store(&rec)?;
        Ok((rec, false))
    }
}
