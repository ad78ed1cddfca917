//! Disk cache of exact level-n measures keyed by the content hash of the
//! generating WIFS and the level. The approximants `μ_n` dominate runtime
//! across subcommands, so repeated runs reuse them.

use std::path::{Path, PathBuf};

use num::BigRational;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::measure::{level_n_sequence, DiscreteMeasure};
use crate::scalar::Scalar;
use crate::wifs::Wifs;
use crate::Result;

pub struct MeasureCache {
    dir: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    schema: String,
    wifs: Wifs,
    n: u32,
    /// Atom positions with masses (masses as rational scalars).
    atoms: Vec<(Scalar, Scalar)>,
}

/// Content hash of a WIFS (hex SHA-256 of its canonical JSON encoding).
pub fn wifs_hash(w: &Wifs) -> String {
    let bytes = serde_json::to_vec(w).expect("wifs serialization is infallible");
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl MeasureCache {
    pub fn open(dir: &Path) -> Result<MeasureCache> {
        std::fs::create_dir_all(dir)?;
        Ok(MeasureCache { dir: dir.to_path_buf() })
    }

    fn path_for(&self, w: &Wifs, n: u32) -> PathBuf {
        self.dir.join(format!("{}-n{n}.json", wifs_hash(w)))
    }

    pub fn load(&self, w: &Wifs, n: u32) -> Option<DiscreteMeasure> {
        let path = self.path_for(w, n);
        let data = std::fs::read(path).ok()?;
        let entry: CacheEntry = serde_json::from_slice(&data).ok()?;
        if entry.schema != "1" || entry.n != n || &entry.wifs != w {
            return None;
        }
        let atoms: Option<Vec<(Scalar, BigRational)>> = entry
            .atoms
            .into_iter()
            .map(|(pos, mass)| match mass {
                Scalar::Rational(r) => Some((pos, r)),
                _ => None,
            })
            .collect();
        DiscreteMeasure::from_atoms(atoms?).ok()
    }

    pub fn store(&self, w: &Wifs, n: u32, mu: &DiscreteMeasure) -> Result<()> {
        let entry = CacheEntry {
            schema: "1".into(),
            wifs: w.clone(),
            n,
            atoms: mu
                .atoms()
                .iter()
                .map(|(pos, mass)| (pos.clone(), Scalar::Rational(mass.clone())))
                .collect(),
        };
        let path = self.path_for(w, n);
        std::fs::write(path, serde_json::to_vec(&entry)?)?;
        Ok(())
    }
}

/// `μ_n` with optional cache assistance (exact systems only).
pub fn cached_level_n(
    cache: Option<&MeasureCache>,
    w: &Wifs,
    n: u32,
) -> Result<DiscreteMeasure> {
    if let Some(c) = cache {
        if let Some(mu) = c.load(w, n) {
            return Ok(mu);
        }
    }
    let seq = level_n_sequence(w, n)?;
    let mu = seq.into_iter().next_back().expect("n ≥ 1");
    if let Some(c) = cache {
        c.store(w, n, &mu)?;
    }
    Ok(mu)
}

/// `μ_1, …, μ_{n_max}` with optional cache assistance: on a full cache hit
/// nothing is recomputed; any miss rebuilds the sequence once and stores
/// every level.
pub fn cached_level_sequence(
    cache: Option<&MeasureCache>,
    w: &Wifs,
    n_max: u32,
) -> Result<Vec<DiscreteMeasure>> {
    if let Some(c) = cache {
        let loaded: Option<Vec<DiscreteMeasure>> =
            (1..=n_max).map(|n| c.load(w, n)).collect();
        if let Some(seq) = loaded {
            return Ok(seq);
        }
    }
    let seq = level_n_sequence(w, n_max)?;
    if let Some(c) = cache {
        for (i, mu) in seq.iter().enumerate() {
            c.store(w, i as u32 + 1, mu)?;
        }
    }
    Ok(seq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::level_n_measure;
    use crate::scalar::golden_contraction;
    use crate::wifs::{bernoulli, p_cantor};

    #[test]
    fn round_trip_and_reuse() {
        let dir = std::env::temp_dir().join(format!("lqdim-cache-test-{}", std::process::id()));
        let cache = MeasureCache::open(&dir).unwrap();
        let w = bernoulli(golden_contraction().unwrap()).unwrap();
        let direct = level_n_measure(&w, 5).unwrap();
        let first = cached_level_n(Some(&cache), &w, 5).unwrap();
        assert_eq!(first, direct);
        // Second call loads from disk.
        assert!(cache.load(&w, 5).is_some());
        let second = cached_level_n(Some(&cache), &w, 5).unwrap();
        assert_eq!(second, direct);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn distinct_systems_do_not_collide() {
        let a = p_cantor(3, &[0, 2]).unwrap();
        let b = p_cantor(4, &[0, 3]).unwrap();
        assert_ne!(wifs_hash(&a), wifs_hash(&b));
    }
}
