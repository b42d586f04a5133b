//! On-disk spectrum cache keyed by file content and analysis settings.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use spectail::ingest::Channel;
use spectail::spectrum::RadialSpectrum;

#[derive(Debug, Clone)]
pub struct SpectrumCache {
    dir: PathBuf,
}

impl SpectrumCache {
    pub fn new(dir: PathBuf) -> std::io::Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn key(content: &[u8], size: usize, bins: usize, channel: Channel) -> String {
        let digest = Sha256::digest(content);
        format!("{}-s{size}-b{bins}-{channel}", hex::encode(digest))
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    /// A missing or unreadable entry is a miss.
    pub fn get(&self, key: &str) -> Option<RadialSpectrum> {
        let text = fs::read_to_string(self.path(key)).ok()?;
        serde_json::from_str(&text).ok()
    }

    /// Writes through a temporary file so concurrent readers never see a partial entry.
    pub fn put(&self, key: &str, spec: &RadialSpectrum) -> std::io::Result<()> {
        let final_path = self.path(key);
        if final_path.exists() {
            return Ok(());
        }
        let tmp = self.dir.join(format!("{key}.{}.tmp", std::process::id()));
        fs::write(&tmp, serde_json::to_string(spec).expect("spectrum serializes"))?;
        fs::rename(&tmp, &final_path)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_key_sensitivity() {
        let dir = tempfile::tempdir().unwrap();
        let cache = SpectrumCache::new(dir.path().join("c")).unwrap();
        let spec = RadialSpectrum {
            rho: vec![0.25, 0.75],
            log_power: vec![0.1 + 0.2, -3.0],
            counts: vec![4, 9],
        };
        let k = SpectrumCache::key(b"abc", 256, 128, Channel::Y);
        assert!(cache.get(&k).is_none());
        cache.put(&k, &spec).unwrap();
        assert_eq!(cache.get(&k).unwrap(), spec);
        assert_ne!(k, SpectrumCache::key(b"abd", 256, 128, Channel::Y));
        assert_ne!(k, SpectrumCache::key(b"abc", 128, 128, Channel::Y));
        assert_ne!(k, SpectrumCache::key(b"abc", 256, 64, Channel::Y));
        assert_ne!(k, SpectrumCache::key(b"abc", 256, 128, Channel::R));
    }
}
