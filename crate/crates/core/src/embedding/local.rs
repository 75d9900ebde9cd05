use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};
use tokenizers::{PaddingParams, PaddingStrategy, Tokenizer, TruncationParams};
use tract_onnx::prelude::*;
use tract_onnx::tract_hir::infer::Factoid;
use tract_onnx::tract_hir::internal::DimLike;

use super::{BackendDescriptor, BackendKind, EmbeddingBackend, PreprocessDescriptor, TensorLayout};
use crate::error::{Error, Result};
use crate::math::EmbeddingVector;
use crate::video::Frame;

/// Context length used when neither the text model nor the tokenizer
/// declares one.
pub const DEFAULT_CONTEXT_LEN: usize = 77;

type Plan = TypedSimplePlan<TypedModel>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TextInput {
    Ids,
    Mask,
}

/// Image and text encoders exported to ONNX, run in-process.
///
/// Each encoder must produce a `[1, dim]` output for a batch of one. The
/// image encoder takes the tensor described by the preprocessing sidecar; the
/// text encoder takes `input_ids` and optionally `attention_mask`.
pub struct LocalModelBackend {
    descriptor: BackendDescriptor,
    image: Plan,
    image_output: usize,
    text: Plan,
    text_output: usize,
    text_inputs: Vec<TextInput>,
    text_dtype: DatumType,
    tokenizer: Tokenizer,
    preprocess: PreprocessDescriptor,
}

fn backend_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Backend(format!("{}: {e}", path.display()))
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(&Sha256::digest(bytes)[..6]))
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} {} does not exist", path.display())))
    }
}

/// Index of the first output shaped `[1, dim]`.
fn embedding_output(model: &TypedModel, dim: usize, path: &Path) -> Result<usize> {
    let mut seen = Vec::new();
    for i in 0..model.output_outlets().map_err(|e| backend_err(path, e))?.len() {
        let fact = model.output_fact(i).map_err(|e| backend_err(path, e))?;
        match fact.shape.as_concrete() {
            Some([1, d]) if *d == dim => return Ok(i),
            Some(shape) => seen.push(format!("{shape:?}")),
            None => seen.push(format!("{:?}", fact.shape)),
        }
    }
    Err(Error::ContractViolation(format!(
        "{}: no output of shape [1, {dim}] (outputs: {})",
        path.display(),
        seen.join(", ")
    )))
}

fn declared_len(fact: &InferenceFact) -> Option<usize> {
    fact.shape.concretize()?.last()?.to_usize().ok()
}

impl LocalModelBackend {
    pub fn load(
        image_model: &Path,
        text_model: &Path,
        tokenizer: &Path,
        preprocess: &Path,
        dim: usize,
    ) -> Result<Self> {
        require_file(image_model, "image model")?;
        require_file(text_model, "text model")?;
        require_file(tokenizer, "tokenizer")?;
        require_file(preprocess, "preprocess descriptor")?;
        let preprocess_desc = PreprocessDescriptor::load(preprocess)?;

        let s = preprocess_desc.input_size as usize;
        let image_shape = match preprocess_desc.layout {
            TensorLayout::Nchw => [1, 3, s, s],
            TensorLayout::Nhwc => [1, s, s, 3],
        };
        let image = tract_onnx::onnx()
            .model_for_path(image_model)
            .and_then(|m| m.with_input_fact(0, f32::fact(image_shape).into()))
            .and_then(|m| m.into_optimized())
            .map_err(|e| backend_err(image_model, e))?;
        let image_output = embedding_output(&image, dim, image_model)?;
        let image = image.into_runnable().map_err(|e| backend_err(image_model, e))?;

        let mut tok = Tokenizer::from_file(tokenizer).map_err(|e| backend_err(tokenizer, e))?;
        let mut text = tract_onnx::onnx()
            .model_for_path(text_model)
            .map_err(|e| backend_err(text_model, e))?;

        let mut text_inputs = Vec::new();
        for outlet in text.input_outlets().map_err(|e| backend_err(text_model, e))?.to_vec() {
            let name = text.node(outlet.node).name.as_str();
            text_inputs.push(match name {
                n if n.contains("mask") => TextInput::Mask,
                n if n.contains("ids") && !n.contains("position") && !n.contains("type") => TextInput::Ids,
                other => {
                    return Err(Error::Config(format!(
                        "{}: unsupported text model input {other:?}; expected input_ids and optionally attention_mask",
                        text_model.display()
                    )))
                }
            });
        }
        if !text_inputs.contains(&TextInput::Ids) {
            return Err(Error::Config(format!("{}: text model has no input_ids input", text_model.display())));
        }

        let first = text.input_fact(0).map_err(|e| backend_err(text_model, e))?;
        let text_dtype = first.datum_type.concretize().unwrap_or(DatumType::I64);
        if !matches!(text_dtype, DatumType::I64 | DatumType::I32) {
            return Err(Error::Config(format!(
                "{}: text inputs must be int64 or int32, got {text_dtype:?}",
                text_model.display()
            )));
        }
        let context_len = declared_len(first)
            .or_else(|| tok.get_truncation().map(|t| t.max_length))
            .unwrap_or(DEFAULT_CONTEXT_LEN);

        let pad_id = tok
            .get_padding()
            .map(|p| p.pad_id)
            .or_else(|| ["<pad>", "<|endoftext|>", "[PAD]"].iter().find_map(|t| tok.token_to_id(t)))
            .unwrap_or(0);
        tok.with_truncation(Some(TruncationParams {
            max_length: context_len,
            ..Default::default()
        }))
        .map_err(|e| backend_err(tokenizer, e))?;
        tok.with_padding(Some(PaddingParams {
            strategy: PaddingStrategy::Fixed(context_len),
            pad_id,
            ..Default::default()
        }));

        for i in 0..text_inputs.len() {
            text.set_input_fact(i, InferenceFact::dt_shape(text_dtype, [1, context_len]))
                .map_err(|e| backend_err(text_model, e))?;
        }
        let text = text.into_optimized().map_err(|e| backend_err(text_model, e))?;
        let text_output = embedding_output(&text, dim, text_model)?;
        let text = text.into_runnable().map_err(|e| backend_err(text_model, e))?;

        let identity = format!(
            "local:image={}:text={}:tokenizer={}:preprocess={}",
            file_digest(image_model)?,
            file_digest(text_model)?,
            file_digest(tokenizer)?,
            file_digest(preprocess)?
        );
        Ok(Self {
            descriptor: BackendDescriptor::new(BackendKind::LocalModel, dim, identity)?,
            image,
            image_output,
            text,
            text_output,
            text_inputs,
            text_dtype,
            tokenizer: tok,
            preprocess: preprocess_desc,
        })
    }

    fn extract(&self, outputs: TVec<TValue>, index: usize) -> Result<EmbeddingVector> {
        let out = outputs[index]
            .cast_to::<f32>()
            .map_err(|e| Error::Backend(e.to_string()))?;
        let values = out
            .as_slice::<f32>()
            .map_err(|e| Error::Backend(e.to_string()))?;
        EmbeddingVector::from_f32(values)
    }

    fn int_tensor(&self, values: &[u32]) -> Result<Tensor> {
        let shape = [1, values.len()];
        let t = match self.text_dtype {
            DatumType::I32 => Tensor::from_shape(&shape, &values.iter().map(|&v| v as i32).collect::<Vec<_>>()),
            _ => Tensor::from_shape(&shape, &values.iter().map(|&v| i64::from(v)).collect::<Vec<_>>()),
        };
        t.map_err(|e| Error::Backend(e.to_string()))
    }
}

impl EmbeddingBackend for LocalModelBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        texts
            .iter()
            .map(|t| {
                let enc = self
                    .tokenizer
                    .encode(t.as_str(), true)
                    .map_err(|e| Error::Backend(format!("tokenizing {t:?}: {e}")))?;
                let inputs = self
                    .text_inputs
                    .iter()
                    .map(|kind| {
                        let values = match kind {
                            TextInput::Ids => enc.get_ids(),
                            TextInput::Mask => enc.get_attention_mask(),
                        };
                        self.int_tensor(values).map(TValue::from)
                    })
                    .collect::<Result<TVec<_>>>()?;
                let out = self.text.run(inputs).map_err(|e| Error::Backend(e.to_string()))?;
                self.extract(out, self.text_output)
            })
            .collect()
    }

    fn embed_frames(&self, frames: &[&Frame]) -> Result<Vec<EmbeddingVector>> {
        let s = self.preprocess.input_size as usize;
        let shape = match self.preprocess.layout {
            TensorLayout::Nchw => [1, 3, s, s],
            TensorLayout::Nhwc => [1, s, s, 3],
        };
        frames
            .iter()
            .map(|f| {
                let data = self.preprocess.apply(f);
                let input = Tensor::from_shape(&shape, &data).map_err(|e| Error::Frame {
                    index: f.index,
                    message: e.to_string(),
                })?;
                let out = self.image.run(tvec!(input.into())).map_err(|e| Error::Frame {
                    index: f.index,
                    message: e.to_string(),
                })?;
                self.extract(out, self.image_output)
            })
            .collect()
    }
}
