//! On-disk cache of linear spectrograms, keyed by audio bytes and STFT
//! settings.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use sha2::{Digest, Sha256};

use super::spectrogram::AudioConfig;
use crate::{Error, Result};

pub const CACHE_VERSION: &str = "v1";
const MAGIC: &[u8; 4] = b"MSPC";

#[derive(Debug, Clone)]
pub struct SpectrogramCache {
    dir: PathBuf,
    settings: String,
}

impl SpectrogramCache {
    /// Opens (and creates) `<root>/v1`.
    pub fn open(root: &Path, cfg: &AudioConfig) -> Result<Self> {
        let dir = root.join(CACHE_VERSION);
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            settings: serde_json::to_string(cfg)?,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(&self, audio_bytes: &[u8]) -> String {
        let mut h = Sha256::new();
        h.update(self.settings.as_bytes());
        h.update([0u8]);
        h.update(audio_bytes);
        hex::encode(h.finalize())
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.spec"))
    }

    pub fn get(&self, key: &str) -> Result<Option<Array2<f32>>> {
        let path = self.path(key);
        if !path.exists() {
            return Ok(None);
        }
        let bytes = std::fs::read(&path)?;
        decode(&bytes).map(Some).ok_or_else(|| Error::Audio(format!("corrupt cache entry {}", path.display())))
    }

    /// Writes atomically through a temporary file.
    pub fn put(&self, key: &str, spec: &Array2<f32>) -> Result<()> {
        let path = self.path(key);
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, encode(spec))?;
        std::fs::rename(&tmp, &path)?;
        Ok(())
    }

    pub fn len(&self) -> Result<usize> {
        Ok(std::fs::read_dir(&self.dir)?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().extension().is_some_and(|x| x == "spec"))
            .count())
    }

    pub fn is_empty(&self) -> Result<bool> {
        Ok(self.len()? == 0)
    }
}

fn encode(spec: &Array2<f32>) -> Vec<u8> {
    let (r, c) = spec.dim();
    let mut out = Vec::with_capacity(12 + 4 * r * c);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(r as u32).to_le_bytes());
    out.extend_from_slice(&(c as u32).to_le_bytes());
    for v in spec.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn decode(bytes: &[u8]) -> Option<Array2<f32>> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return None;
    }
    let r = u32::from_le_bytes(bytes[4..8].try_into().ok()?) as usize;
    let c = u32::from_le_bytes(bytes[8..12].try_into().ok()?) as usize;
    let body = &bytes[12..];
    if body.len() != 4 * r * c {
        return None;
    }
    let values = body.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
    Array2::from_shape_vec((r, c), values).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_keying() {
        let dir = tempfile::tempdir().unwrap();
        let cache = SpectrogramCache::open(dir.path(), &AudioConfig::default()).unwrap();
        let spec = Array2::from_shape_fn((3, 5), |(r, c)| (r * 5 + c) as f32 * 0.5);
        let key = cache.key(b"abc");
        assert_ne!(key, cache.key(b"abd"));
        assert!(cache.get(&key).unwrap().is_none());
        cache.put(&key, &spec).unwrap();
        assert_eq!(cache.get(&key).unwrap().unwrap(), spec);
        assert_eq!(cache.len().unwrap(), 1);
        let other = SpectrogramCache::open(
            dir.path(),
            &AudioConfig {
                hop_length: 128,
                ..AudioConfig::default()
            },
        )
        .unwrap();
        assert_ne!(other.key(b"abc"), key);
    }
}
