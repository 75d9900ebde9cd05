use std::io::Cursor;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use image::ImageFormat;
use serde::{Deserialize, Serialize};

use super::{BackendDescriptor, BackendKind, EmbeddingBackend};
use crate::error::{Error, Result};
use crate::http::{JsonClient, RetryPolicy};
use crate::math::EmbeddingVector;
use crate::video::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Image,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub inputs: Vec<String>,
    pub modality: Modality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
}

/// Embedding service speaking `{inputs, modality} -> {vectors}`. Images are
/// sent as base64 PNG.
pub struct RemoteBackend {
    descriptor: BackendDescriptor,
    client: JsonClient,
}

impl RemoteBackend {
    pub fn new(url: impl Into<String>, dim: usize, policy: RetryPolicy) -> Result<Self> {
        Ok(Self {
            descriptor: BackendDescriptor::new(BackendKind::Remote, dim, url)?,
            client: JsonClient::new(policy),
        })
    }

    fn call(&self, inputs: Vec<String>, modality: Modality) -> Result<Vec<EmbeddingVector>> {
        let expected = inputs.len();
        let resp: EmbedResponse = self
            .client
            .post(&self.descriptor.identity, None, &EmbedRequest { inputs, modality })
            .map_err(Error::Backend)?;
        if resp.vectors.len() != expected {
            return Err(Error::ContractViolation(format!(
                "requested {expected} embeddings, got {}",
                resp.vectors.len()
            )));
        }
        resp.vectors
            .into_iter()
            .map(|v| EmbeddingVector::new(v).map_err(|e| Error::ContractViolation(e.to_string())))
            .collect()
    }
}

pub(crate) fn encode_png_base64(frame: &Frame) -> Result<String> {
    let mut buf = Cursor::new(Vec::new());
    frame
        .image
        .write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| Error::Frame {
            index: frame.index,
            message: e.to_string(),
        })?;
    Ok(STANDARD.encode(buf.into_inner()))
}

impl EmbeddingBackend for RemoteBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        self.call(texts.to_vec(), Modality::Text)
    }

    fn embed_frames(&self, frames: &[&Frame]) -> Result<Vec<EmbeddingVector>> {
        let inputs = frames
            .iter()
            .map(|f| encode_png_base64(f))
            .collect::<Result<Vec<_>>>()?;
        self.call(inputs, Modality::Image)
    }
}
