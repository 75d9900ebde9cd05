use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use tifre::embedding::{mock_embed as mock_embed_impl, BackendDescriptor, BackendKind, FrameEmbeddings};
use tifre::eval::{evaluate as evaluate_impl, EvalConfig, Planted, ScenarioSpec};
use tifre::fmm::{self, MergeMode};
use tifre::math::{self, EmbeddingVector, SaliencyVector, SimilarityMatrix};
use tifre::pipeline::{run_tifre, BackendConfig, RunConfig};
use tifre::prompt::{self, LlmConfig, Question};
use tifre::selection::{self, Selection};
use tifre::video::{Frame, StrategyKind, MANIFEST_SCHEMA};

create_exception!(tifre, TifreError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    TifreError::new_err(e.to_string())
}

fn vector(v: Vec<f64>) -> PyResult<EmbeddingVector> {
    EmbeddingVector::new(v).map_err(err)
}

fn vectors(rows: Vec<Vec<f64>>) -> PyResult<Vec<EmbeddingVector>> {
    rows.into_iter().map(vector).collect()
}

fn strategy(name: &str) -> PyResult<StrategyKind> {
    match name {
        "tifre" => Ok(StrategyKind::Tifre),
        "fixed-fps" => Ok(StrategyKind::FixedFps),
        other => Err(PyValueError::new_err(format!("unknown strategy {other:?}"))),
    }
}

fn merge_mode(name: &str) -> PyResult<MergeMode> {
    match name {
        "normalized" => Ok(MergeMode::Normalized),
        "paper-literal" => Ok(MergeMode::PaperLiteral),
        other => Err(PyValueError::new_err(format!("unknown merge mode {other:?}"))),
    }
}

/// Cosine similarity of two vectors.
#[pyfunction]
fn cosine_similarity(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    math::cosine_similarity(&vector(a)?, &vector(b)?).map_err(err)
}

/// Prompt-by-frame cosine similarities as a list of rows.
#[pyfunction]
fn similarity_matrix(texts: Vec<Vec<f64>>, frames: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let sim = math::similarity_matrix(&vectors(texts)?, &vectors(frames)?).map_err(err)?;
    Ok(sim.to_rows())
}

/// Per-frame maximum over prompt rows.
#[pyfunction]
fn saliency(similarity: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let sim = SimilarityMatrix::from_rows(similarity).map_err(err)?;
    Ok(math::saliency(&sim).scores().to_vec())
}

/// Sorted indices of the top-k scores, optionally filtered by a relative
/// threshold.
#[pyfunction]
#[pyo3(signature = (scores, k, threshold=None))]
fn select_top_k(scores: Vec<f64>, k: usize, threshold: Option<f64>) -> PyResult<Vec<usize>> {
    let scores = SaliencyVector::new(scores).map_err(err)?;
    Ok(selection::select_top_k(&scores, k, threshold).map_err(err)?.key_indices)
}

#[pyfunction]
fn fixed_fps_select(n: usize, m: usize) -> PyResult<Vec<usize>> {
    Ok(selection::fixed_fps_select(n, m).map_err(err)?.key_indices)
}

/// Map each non-key frame index to `(key_index, weight)`.
#[pyfunction]
fn match_frames(embeddings: Vec<Vec<f64>>, key_indices: Vec<usize>) -> PyResult<BTreeMap<usize, (usize, f64)>> {
    let n = embeddings.len();
    let vectors = vectors(embeddings)?;
    let dim = vectors.first().map_or(8, EmbeddingVector::dim).max(8);
    let embs = FrameEmbeddings {
        vectors,
        backend: BackendDescriptor::new(BackendKind::Mock, dim, "python").map_err(err)?,
    };
    let sel = Selection::from_keys(n, key_indices, SaliencyVector::zeros(n)).map_err(err)?;
    let assignment = fmm::match_frames(&embs, &sel).map_err(err)?;
    Ok(assignment.pairs.into_iter().map(|(n, m)| (n, (m.key, m.weight))).collect())
}

/// Merge a key frame with weighted members. Frames are packed RGB bytes of
/// `width * height * 3`. Returns float pixels before quantization.
#[pyfunction]
#[pyo3(signature = (width, height, key, members, mode="normalized"))]
fn merge_group(width: u32, height: u32, key: Vec<u8>, members: Vec<(Vec<u8>, f64)>, mode: &str) -> PyResult<Vec<f64>> {
    let frame = |index: usize, bytes: Vec<u8>| {
        let image = tifre::image::RgbImage::from_raw(width, height, bytes)
            .ok_or_else(|| PyValueError::new_err(format!("frame {index} is not {width}x{height} RGB")))?;
        Ok::<_, PyErr>(Frame::new(index, index as f64, image, "python"))
    };
    let key = frame(0, key)?;
    let members = members
        .into_iter()
        .enumerate()
        .map(|(i, (bytes, w))| Ok((frame(i + 1, bytes)?, w)))
        .collect::<PyResult<Vec<_>>>()?;
    let refs: Vec<(&Frame, f64)> = members.iter().map(|(f, w)| (f, *w)).collect();
    fmm::merge_group_float(&key, &refs, merge_mode(mode)?).map_err(err)
}

/// The full message sent to the LLM for prompt rewriting.
#[pyfunction]
#[pyo3(signature = (question, options=Vec::new()))]
fn build_rewrite_request(question: &str, options: Vec<String>) -> PyResult<String> {
    let q = Question::new(question, options).map_err(err)?;
    Ok(prompt::build_rewrite_request(&q, &LlmConfig::new("unspecified")).content)
}

#[pyfunction]
fn parse_llm_output(raw: &str) -> PyResult<Vec<String>> {
    Ok(prompt::parse_llm_output(raw).map_err(err)?.prompts().to_vec())
}

/// Rule-based prompts used when no LLM is available.
#[pyfunction]
#[pyo3(signature = (question, options=Vec::new()))]
fn fallback_prompts(question: &str, options: Vec<String>) -> PyResult<Vec<String>> {
    let q = Question::new(question, options).map_err(err)?;
    Ok(prompt::fallback_extract_prompts(&q).prompts().to_vec())
}

#[pyfunction]
fn mock_embed(content: Vec<u8>, seed: u64, dim: usize) -> Vec<f64> {
    mock_embed_impl(&content, seed, dim).values().to_vec()
}

/// Planted-relevance evaluation. Returns one dict per (strategy, k).
#[pyfunction]
#[pyo3(signature = (n=60, planted=5, planted_indices=None, k_values=vec![4, 5, 6, 7, 8, 10, 11, 13, 15],
                    seeds=100, first_seed=0, sigma=0.0, dim=64, prompts=2, threshold=0.0,
                    strategies=vec!["tifre".to_owned(), "fixed-fps".to_owned()]))]
#[allow(clippy::too_many_arguments)]
fn evaluate(
    py: Python<'_>,
    n: usize,
    planted: usize,
    planted_indices: Option<Vec<usize>>,
    k_values: Vec<usize>,
    seeds: usize,
    first_seed: u64,
    sigma: f64,
    dim: usize,
    prompts: usize,
    threshold: f64,
    strategies: Vec<String>,
) -> PyResult<Vec<BTreeMap<&'static str, Py<PyAny>>>> {
    let cfg = EvalConfig {
        scenario: ScenarioSpec {
            n,
            planted: planted_indices.map_or(Planted::Count(planted), Planted::Indices),
            dim,
            prompts,
            sigma,
            seed: first_seed,
        },
        seeds,
        k_values,
        strategies: strategies.iter().map(|s| strategy(s)).collect::<PyResult<_>>()?,
        threshold,
    };
    let report = py.detach(|| evaluate_impl(&cfg)).map_err(err)?;
    report
        .rows
        .iter()
        .map(|r| {
            let name = match r.strategy {
                StrategyKind::Tifre => "tifre",
                StrategyKind::FixedFps => "fixed-fps",
            };
            Ok(BTreeMap::from([
                ("strategy", name.into_pyobject(py)?.into_any().unbind()),
                ("k", r.k.into_pyobject(py)?.into_any().unbind()),
                ("mean_recall", r.mean_recall.into_pyobject(py)?.into_any().unbind()),
                ("min_recall", r.min_recall.into_pyobject(py)?.into_any().unbind()),
                ("mean_precision", r.mean_precision.into_pyobject(py)?.into_any().unbind()),
                ("mean_frames", r.mean_frames.into_pyobject(py)?.into_any().unbind()),
                ("reduction_ratio", r.reduction_ratio.into_pyobject(py)?.into_any().unbind()),
            ]))
        })
        .collect()
}

/// Run the reduction pipeline with the mock backend and return the manifest
/// as JSON.
#[pyfunction]
#[pyo3(signature = (input, out, question=None, options=Vec::new(), prompts=None, max_frames=10,
                    threshold=None, strategy="tifre", merge_mode="normalized", fps=1.0,
                    working_res=(224, 224), seed=0, embed_dim=64, llm_transcript=None,
                    contact_sheet=false))]
#[allow(clippy::too_many_arguments)]
fn reduce(
    py: Python<'_>,
    input: PathBuf,
    out: PathBuf,
    question: Option<String>,
    options: Vec<String>,
    prompts: Option<Vec<String>>,
    max_frames: usize,
    threshold: Option<f64>,
    strategy: &str,
    merge_mode: &str,
    fps: f64,
    working_res: (u32, u32),
    seed: u64,
    embed_dim: usize,
    llm_transcript: Option<PathBuf>,
    contact_sheet: bool,
) -> PyResult<String> {
    let mut cfg = RunConfig::new(input, out);
    cfg.question = question.map(|q| Question::new(q, options)).transpose().map_err(err)?;
    cfg.prompts = prompts;
    cfg.max_frames = max_frames;
    cfg.threshold = threshold;
    cfg.strategy = self::strategy(strategy)?;
    cfg.merge_mode = self::merge_mode(merge_mode)?;
    cfg.fps = fps;
    cfg.working_res = working_res;
    cfg.seed = seed;
    cfg.backend = BackendConfig::Mock {
        dim: embed_dim,
        planted: None,
    };
    cfg.llm_transcript = llm_transcript;
    cfg.contact_sheet = contact_sheet;
    let manifest = py.detach(|| run_tifre(&cfg)).map_err(err)?;
    Ok(manifest.to_json())
}

#[pymodule]
#[pyo3(name = "tifre")]
fn tifre_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("TifreError", m.py().get_type::<TifreError>())?;
    m.add("MANIFEST_SCHEMA", MANIFEST_SCHEMA)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(cosine_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(similarity_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(saliency, m)?)?;
    m.add_function(wrap_pyfunction!(select_top_k, m)?)?;
    m.add_function(wrap_pyfunction!(fixed_fps_select, m)?)?;
    m.add_function(wrap_pyfunction!(match_frames, m)?)?;
    m.add_function(wrap_pyfunction!(merge_group, m)?)?;
    m.add_function(wrap_pyfunction!(build_rewrite_request, m)?)?;
    m.add_function(wrap_pyfunction!(parse_llm_output, m)?)?;
    m.add_function(wrap_pyfunction!(fallback_prompts, m)?)?;
    m.add_function(wrap_pyfunction!(mock_embed, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(reduce, m)?)?;
    Ok(())
}
