use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::EmbeddingVector;

pub const CACHE_FILE: &str = "embedding_cache.json";

/// Frame embeddings keyed by content hash, valid for one backend identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingCache {
    identity: String,
    entries: BTreeMap<String, EmbeddingVector>,
}

impl EmbeddingCache {
    pub fn new(identity: &str) -> Self {
        Self {
            identity: identity.to_owned(),
            entries: BTreeMap::new(),
        }
    }

    /// Load the cache stored in `dir`. A missing, unreadable or foreign-identity
    /// cache yields an empty one.
    pub fn load_or_new(dir: &Path, identity: &str) -> Self {
        let path = dir.join(CACHE_FILE);
        let loaded = fs::read_to_string(&path)
            .ok()
            .and_then(|text| serde_json::from_str::<Self>(&text).ok());
        match loaded {
            Some(c) if c.identity == identity => c,
            Some(_) => {
                log::info!("embedding cache {} belongs to another backend; ignoring", path.display());
                Self::new(identity)
            }
            None => Self::new(identity),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(CACHE_FILE);
        let text = serde_json::to_string(self).map_err(|e| Error::json(&path, e))?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn identity(&self) -> &str {
        &self.identity
    }

    pub fn get(&self, hash: &str) -> Option<&EmbeddingVector> {
        self.entries.get(hash)
    }

    pub fn insert(&mut self, hash: String, v: EmbeddingVector) {
        self.entries.insert(hash, v);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_identity_invalidation() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = EmbeddingCache::new("mock:seed=1");
        c.insert("abc".into(), EmbeddingVector::new(vec![0.1, -0.7, 1.0 / 3.0]).unwrap());
        c.save(dir.path()).unwrap();
        assert_eq!(EmbeddingCache::load_or_new(dir.path(), "mock:seed=1"), c);
        assert!(EmbeddingCache::load_or_new(dir.path(), "mock:seed=2").is_empty());
        assert!(EmbeddingCache::load_or_new(&dir.path().join("nope"), "x").is_empty());
    }
}
