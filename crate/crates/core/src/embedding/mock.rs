use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendDescriptor, BackendKind, EmbeddingBackend};
use crate::error::{Error, Result};
use crate::math::EmbeddingVector;
use crate::video::Frame;

/// Hash-derived pseudo-embedding: SHA-256 in counter mode over
/// `(seed, len(content), content, block)`, each 4-byte word mapped to `[-1, 1]`.
pub fn mock_embed(content: &[u8], seed: u64, dim: usize) -> EmbeddingVector {
    let mut values = Vec::with_capacity(dim);
    let mut block: u64 = 0;
    while values.len() < dim {
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update((content.len() as u64).to_le_bytes());
        h.update(content);
        h.update(block.to_le_bytes());
        let digest = h.finalize();
        for word in digest.chunks_exact(4) {
            if values.len() == dim {
                break;
            }
            let x = u32::from_le_bytes(word.try_into().unwrap());
            values.push(f64::from(x) / f64::from(u32::MAX) * 2.0 - 1.0);
        }
        block += 1;
    }
    EmbeddingVector::new(values).expect("hash output is finite")
}

/// Fixed vectors for chosen prompts and frame indices. Used to build
/// scenarios with known ground truth.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlantedRegistry {
    #[serde(default)]
    pub texts: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub frames: BTreeMap<usize, Vec<f64>>,
}

impl PlantedRegistry {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty() && self.frames.is_empty()
    }

    pub fn plant_text(&mut self, text: impl Into<String>, v: Vec<f64>) -> &mut Self {
        self.texts.insert(text.into(), v);
        self
    }

    pub fn plant_frame(&mut self, index: usize, v: Vec<f64>) -> &mut Self {
        self.frames.insert(index, v);
        self
    }

    fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("registry serializes");
        hex::encode(&Sha256::digest(json)[..8])
    }
}

/// Deterministic backend for tests and offline runs.
#[derive(Debug, Clone)]
pub struct MockBackend {
    descriptor: BackendDescriptor,
    seed: u64,
    planted: PlantedRegistry,
}

impl MockBackend {
    pub fn new(seed: u64, dim: usize) -> Result<Self> {
        Self::with_planted(seed, dim, PlantedRegistry::default())
    }

    pub fn with_planted(seed: u64, dim: usize, planted: PlantedRegistry) -> Result<Self> {
        for v in planted.texts.values().chain(planted.frames.values()) {
            if v.len() != dim {
                return Err(Error::Config(format!(
                    "planted vector has dim {} but the mock backend uses {dim}",
                    v.len()
                )));
            }
        }
        let identity = if planted.is_empty() {
            format!("mock:seed={seed}")
        } else {
            format!("mock:seed={seed}:planted={}", planted.digest())
        };
        Ok(Self {
            descriptor: BackendDescriptor::new(BackendKind::Mock, dim, identity)?,
            seed,
            planted,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl EmbeddingBackend for MockBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        texts
            .iter()
            .map(|t| match self.planted.texts.get(t) {
                Some(v) => EmbeddingVector::new(v.clone()),
                None => Ok(mock_embed(t.as_bytes(), self.seed, self.descriptor.dim)),
            })
            .collect()
    }

    fn embed_frames(&self, frames: &[&Frame]) -> Result<Vec<EmbeddingVector>> {
        frames
            .iter()
            .map(|f| match self.planted.frames.get(&f.index) {
                Some(v) => EmbeddingVector::new(v.clone()),
                None => Ok(mock_embed(&f.content_bytes(), self.seed, self.descriptor.dim)),
            })
            .collect()
    }

    fn content_addressed(&self) -> bool {
        self.planted.frames.is_empty()
    }
}
