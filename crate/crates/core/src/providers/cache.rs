//! On-disk, content-addressed store of provider responses. One JSON file per
//! key; no index.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{RawTag, TagResponse};
use crate::error::{Error, Result};

/// Hex SHA-256 of image (or fixture) bytes.
pub fn content_digest(content: &[u8]) -> String {
    hex(&Sha256::digest(content))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Key for `provider`'s response to the content with `digest`. Paths play
/// no part, so identical bytes share an entry wherever they live.
pub fn cache_key(provider: &str, digest: &str) -> CacheKey {
    let mut h = Sha256::new();
    h.update(provider.as_bytes());
    h.update([0u8]);
    h.update(digest.as_bytes());
    CacheKey(hex(&h.finalize()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheEntry {
    pub provider: String,
    pub image_digest: String,
    pub raw_tags: Vec<RawTag>,
    pub fetched_at: String,
}

impl CacheEntry {
    pub fn into_response(self, image_id: &str) -> TagResponse {
        TagResponse {
            provider: self.provider,
            image_id: image_id.to_string(),
            raw_tags: self.raw_tags,
            fetched_at: self.fetched_at,
        }
    }
}

#[derive(Debug)]
pub struct TagCache {
    dir: PathBuf,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl TagCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(TagCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &CacheKey) -> Result<Option<CacheEntry>> {
        match std::fs::read(self.path(key)) {
            Ok(bytes) => {
                let entry = serde_json::from_slice(&bytes).map_err(|e| Error::Provider {
                    provider: "cache".into(),
                    message: format!("corrupt cache entry {key}: {e}"),
                })?;
                Ok(Some(entry))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Writes through a temporary file and an atomic rename, so readers never
    /// see partial entries and duplicate writers simply replace each other.
    pub fn put(&self, key: &CacheKey, entry: &CacheEntry) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(entry)?;
        let tmp = self.dir.join(format!(
            ".{key}.{}.{}.tmp",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, self.path(key))?;
        Ok(())
    }

    /// Number of stored entries (directory scan).
    pub fn len(&self) -> Result<usize> {
        let mut n = 0;
        for entry in std::fs::read_dir(&self.dir)? {
            let name = entry?.file_name();
            let name = name.to_string_lossy();
            if name.ends_with(".json") && !name.starts_with('.') {
                n += 1;
            }
        }
        Ok(n)
    }

    pub fn is_empty(&self) -> Result<bool> {
        Ok(self.len()? == 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn entry(digest: &str) -> CacheEntry {
        CacheEntry {
            provider: "google".into(),
            image_digest: digest.into(),
            raw_tags: vec![RawTag::new("bed", Some(0.97)), RawTag::new("room", None)],
            fetched_at: "2026-01-01T00:00:00Z".into(),
        }
    }

    #[test]
    fn keys_address_content_not_paths() {
        let dir = TempDir::new().unwrap();
        let a = dir.path().join("a.jpg");
        let b = dir.path().join("sub_b.jpg");
        std::fs::write(&a, b"same bytes").unwrap();
        std::fs::write(&b, b"same bytes").unwrap();
        let ka = cache_key("p", &content_digest(&std::fs::read(&a).unwrap()));
        let kb = cache_key("p", &content_digest(&std::fs::read(&b).unwrap()));
        assert_eq!(ka, kb);

        std::fs::write(&a, b"same bytez").unwrap();
        let changed = cache_key("p", &content_digest(&std::fs::read(&a).unwrap()));
        assert_ne!(changed, ka);
    }

    #[test]
    fn one_bit_difference_changes_the_key() {
        let original = vec![0b1010_1010u8; 64];
        let mut flipped = original.clone();
        flipped[17] ^= 1;
        assert_ne!(
            cache_key("p", &content_digest(&original)),
            cache_key("p", &content_digest(&flipped))
        );
        assert_ne!(
            cache_key("p", &content_digest(&original)),
            cache_key("q", &content_digest(&original))
        );
    }

    #[test]
    fn entries_replay_byte_identically() {
        let dir = TempDir::new().unwrap();
        let cache = TagCache::open(dir.path()).unwrap();
        let key = cache_key("google", "abc");
        assert!(cache.get(&key).unwrap().is_none());
        let e = entry("abc");
        cache.put(&key, &e).unwrap();
        let on_disk = std::fs::read(dir.path().join(format!("{key}.json"))).unwrap();
        let back = cache.get(&key).unwrap().unwrap();
        assert_eq!(back, e);
        assert_eq!(serde_json::to_vec_pretty(&back).unwrap(), on_disk);
        assert_eq!(cache.len().unwrap(), 1);
    }

    #[test]
    fn concurrent_duplicate_writes_are_idempotent() {
        let dir = TempDir::new().unwrap();
        let cache = TagCache::open(dir.path()).unwrap();
        let e = entry("dup");
        std::thread::scope(|s| {
            for i in 0..8 {
                let cache = &cache;
                let e = &e;
                s.spawn(move || {
                    cache.put(&cache_key("google", "dup"), e).unwrap();
                    cache.put(&cache_key("google", &format!("other{i}")), e).unwrap();
                });
            }
        });
        assert_eq!(cache.get(&cache_key("google", "dup")).unwrap(), Some(e));
        assert_eq!(cache.len().unwrap(), 9);
    }
}
