//! Text and image embeddings in one shared space.

mod cache;
#[cfg(feature = "onnx")]
mod local;
mod mock;
mod preprocess;
mod remote;

pub use cache::{EmbeddingCache, CACHE_FILE};
#[cfg(feature = "onnx")]
pub use local::LocalModelBackend;
pub use mock::{mock_embed, MockBackend, PlantedRegistry};
pub use preprocess::{PreprocessDescriptor, TensorLayout};
pub use remote::{EmbedRequest, EmbedResponse, Modality, RemoteBackend};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::EmbeddingVector;
use crate::prompt::PromptSet;
use crate::video::Frame;

pub const MIN_DIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    LocalModel,
    Remote,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    pub dim: usize,
    pub identity: String,
}

impl BackendDescriptor {
    pub fn new(kind: BackendKind, dim: usize, identity: impl Into<String>) -> Result<Self> {
        let identity = identity.into();
        if dim < MIN_DIM {
            return Err(Error::Config(format!(
                "embedding dim must be at least {MIN_DIM}, got {dim}"
            )));
        }
        if identity.is_empty() {
            return Err(Error::Config("backend identity is empty".into()));
        }
        Ok(Self {
            kind,
            dim,
            identity,
        })
    }
}

/// An encoder pair mapping text and images into the same space.
///
/// Implementations must be deterministic for a given identity and return one
/// vector per input, in input order.
pub trait EmbeddingBackend: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>>;

    fn embed_frames(&self, frames: &[&Frame]) -> Result<Vec<EmbeddingVector>>;

    /// Whether a frame's embedding depends only on its pixels, which is what
    /// makes caching by content hash sound.
    fn content_addressed(&self) -> bool {
        true
    }
}

fn check_dims(
    backend: &dyn EmbeddingBackend,
    vectors: &[EmbeddingVector],
    expected_len: usize,
) -> Result<()> {
    if vectors.len() != expected_len {
        return Err(Error::ContractViolation(format!(
            "backend returned {} vectors for {expected_len} inputs",
            vectors.len()
        )));
    }
    let dim = backend.descriptor().dim;
    if let Some(v) = vectors.iter().find(|v| v.dim() != dim) {
        return Err(Error::ContractViolation(format!(
            "backend returned dim {} but its descriptor says {dim}",
            v.dim()
        )));
    }
    Ok(())
}

pub fn embed_text(prompts: &PromptSet, backend: &dyn EmbeddingBackend) -> Result<Vec<EmbeddingVector>> {
    let vectors = backend.embed_texts(prompts.prompts())?;
    check_dims(backend, &vectors, prompts.len())?;
    Ok(vectors)
}

/// Frame embeddings aligned with the frame order they were computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEmbeddings {
    pub vectors: Vec<EmbeddingVector>,
    pub backend: BackendDescriptor,
}

impl FrameEmbeddings {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchOptions {
    pub batch_size: usize,
    /// Worker threads; 0 means one per CPU.
    pub workers: usize,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            batch_size: 16,
            workers: 0,
        }
    }
}

pub fn embed_images(
    frames: &[Frame],
    backend: &dyn EmbeddingBackend,
    opts: BatchOptions,
) -> Result<FrameEmbeddings> {
    embed_images_cached(frames, backend, opts, None)
}

/// Like [`embed_images`], consulting and filling `cache` for content-addressed
/// backends.
pub fn embed_images_cached(
    frames: &[Frame],
    backend: &dyn EmbeddingBackend,
    opts: BatchOptions,
    mut cache: Option<&mut EmbeddingCache>,
) -> Result<FrameEmbeddings> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("no frames to embed"));
    }
    let descriptor = backend.descriptor().clone();
    let use_cache = backend.content_addressed();
    let hashes: Vec<String> = if use_cache && cache.is_some() {
        frames.iter().map(Frame::content_hash).collect()
    } else {
        Vec::new()
    };

    let mut slots: Vec<Option<EmbeddingVector>> = vec![None; frames.len()];
    if let (true, Some(c)) = (use_cache, cache.as_deref()) {
        for (slot, h) in slots.iter_mut().zip(&hashes) {
            *slot = c.get(h).filter(|v| v.dim() == descriptor.dim).cloned();
        }
    }
    let missing: Vec<usize> = (0..frames.len()).filter(|&i| slots[i].is_none()).collect();

    let batch_size = opts.batch_size.max(1);
    let run = || {
        missing
            .par_chunks(batch_size)
            .map(|chunk| embed_batch(frames, chunk, backend))
            .collect::<Result<Vec<_>>>()
    };
    let computed = if opts.workers == 0 {
        run()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(run)?
    };

    for (i, v) in missing.iter().zip(computed.into_iter().flatten()) {
        if let (true, Some(c)) = (use_cache, cache.as_deref_mut()) {
            c.insert(hashes[*i].clone(), v.clone());
        }
        slots[*i] = Some(v);
    }
    Ok(FrameEmbeddings {
        vectors: slots.into_iter().map(|s| s.expect("every slot filled")).collect(),
        backend: descriptor,
    })
}

fn embed_batch(
    frames: &[Frame],
    chunk: &[usize],
    backend: &dyn EmbeddingBackend,
) -> Result<Vec<EmbeddingVector>> {
    let batch: Vec<&Frame> = chunk.iter().map(|&i| &frames[i]).collect();
    let vectors = backend.embed_frames(&batch).map_err(|e| match e {
        Error::Backend(msg) if batch.len() == 1 => Error::Frame {
            index: batch[0].index,
            message: msg,
        },
        other => other,
    })?;
    check_dims(backend, &vectors, batch.len())?;
    Ok(vectors)
}
