//! End-to-end run: extract -> prompts -> embed -> saliency -> select ->
//! match -> merge -> write.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::embedding::{
    embed_images_cached, embed_text, BatchOptions, EmbeddingBackend, EmbeddingCache, MockBackend,
    PlantedRegistry, RemoteBackend,
};
use crate::error::Error;
use crate::fmm::{match_frames, merge_frames, MergeMode};
use crate::http::RetryPolicy;
use crate::llm::{ChatClient, HttpChatClient, TranscriptReplay};
use crate::math::{saliency, similarity_matrix};
use crate::prompt::{
    build_rewrite_request, fallback_extract_prompts, parse_llm_output, LlmConfig, PromptSet,
    PromptSource, Question,
};
use crate::selection::{fixed_fps_select, select_top_k, DEFAULT_MAX_FRAMES, DEFAULT_THRESHOLD};
use crate::video::{
    contact_sheet, decoder_version, extract_frames, key_file_name, write_outputs, AssignmentRecord,
    ExtractOptions, OutputRecord, RunManifest, StrategyKind, DEFAULT_DECODER, DEFAULT_WORKING_RES,
    MANIFEST_FILE, SCHEMA_VERSION,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BackendConfig {
    Mock {
        dim: usize,
        #[serde(default)]
        planted: Option<PathBuf>,
    },
    Remote {
        url: String,
        dim: usize,
    },
    LocalModel {
        image_model: PathBuf,
        text_model: PathBuf,
        tokenizer: PathBuf,
        preprocess: PathBuf,
        dim: usize,
    },
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Mock {
            dim: 64,
            planted: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmEndpoint {
    pub url: String,
    #[serde(flatten)]
    pub config: LlmConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: PathBuf,
    pub question: Option<Question>,
    /// Bypasses prompt rewriting entirely.
    pub prompts: Option<Vec<String>>,
    pub max_frames: usize,
    /// Relative saliency cutoff for `tifre`; `None` uses the default, `0` disables it.
    pub threshold: Option<f64>,
    pub strategy: StrategyKind,
    pub merge_mode: MergeMode,
    pub backend: BackendConfig,
    pub llm: Option<LlmEndpoint>,
    pub llm_transcript: Option<PathBuf>,
    /// Where to save the live LLM exchange for later replay.
    pub llm_record: Option<PathBuf>,
    pub allow_fallback: bool,
    pub fps: f64,
    pub working_res: (u32, u32),
    pub decoder: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub contact_sheet: bool,
    pub batch_size: usize,
    pub workers: usize,
    pub use_cache: bool,
}

impl RunConfig {
    pub fn new(input: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            input: input.into(),
            question: None,
            prompts: None,
            max_frames: DEFAULT_MAX_FRAMES,
            threshold: None,
            strategy: StrategyKind::Tifre,
            merge_mode: MergeMode::Normalized,
            backend: BackendConfig::default(),
            llm: None,
            llm_transcript: None,
            llm_record: None,
            allow_fallback: true,
            fps: 1.0,
            working_res: DEFAULT_WORKING_RES,
            decoder: PathBuf::from(DEFAULT_DECODER),
            out_dir: out_dir.into(),
            seed: 0,
            contact_sheet: false,
            batch_size: 16,
            workers: 0,
            use_cache: true,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.max_frames == 0 {
            return Err(Error::Config("--max-frames must be at least 1".into()));
        }
        if let Some(t) = self.threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("threshold must be in [0, 1], got {t}")));
            }
            if self.strategy == StrategyKind::FixedFps {
                return Err(Error::Config("fixed-fps selection does not take a threshold".into()));
            }
        }
        if self.strategy == StrategyKind::Tifre && self.question.is_none() && self.prompts.is_none() {
            return Err(Error::Config("tifre needs a question or explicit prompts".into()));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::Config(format!("fps must be positive, got {}", self.fps)));
        }
        Ok(())
    }

    /// Threshold actually applied, as recorded in the manifest.
    pub fn effective_threshold(&self) -> Option<f64> {
        match self.strategy {
            StrategyKind::Tifre => Some(self.threshold.unwrap_or(DEFAULT_THRESHOLD)),
            StrategyKind::FixedFps => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Extract,
    Prompts,
    Embed,
    Select,
    Match,
    Merge,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Config => "config",
            Stage::Extract => "extract",
            Stage::Prompts => "prompts",
            Stage::Embed => "embed",
            Stage::Select => "select",
            Stage::Match => "match",
            Stage::Merge => "merge",
            Stage::Write => "write",
        };
        f.write_str(name)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

impl PipelineError {
    /// 2 config, 3 external tool, 4 embedding backend, 5 LLM without fallback.
    pub fn exit_code(&self) -> i32 {
        match &self.source {
            Error::Config(_) | Error::InvalidQuestion(_) | Error::InvalidPrompts(_) | Error::Scenario(_) => 2,
            Error::ToolNotFound { .. } | Error::Decoder(_) => 3,
            Error::Backend(_) | Error::ContractViolation(_) => 4,
            Error::Frame { .. } if self.stage == Stage::Embed => 4,
            Error::Llm(_) | Error::PromptParse => 5,
            _ => 1,
        }
    }
}

trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T> StageExt<T> for Result<T, Error> {
    fn stage(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|source| PipelineError { stage, source })
    }
}

pub fn build_backend(cfg: &RunConfig) -> Result<Box<dyn EmbeddingBackend>, Error> {
    match &cfg.backend {
        BackendConfig::Mock { dim, planted } => {
            let planted = match planted {
                Some(p) => PlantedRegistry::load(p)?,
                None => PlantedRegistry::default(),
            };
            Ok(Box::new(MockBackend::with_planted(cfg.seed, *dim, planted)?))
        }
        BackendConfig::Remote { url, dim } => {
            Ok(Box::new(RemoteBackend::new(url.clone(), *dim, RetryPolicy::default())?))
        }
        #[cfg(feature = "onnx")]
        BackendConfig::LocalModel {
            image_model,
            text_model,
            tokenizer,
            preprocess,
            dim,
        } => Ok(Box::new(crate::embedding::LocalModelBackend::load(
            image_model,
            text_model,
            tokenizer,
            preprocess,
            *dim,
        )?)),
        #[cfg(not(feature = "onnx"))]
        BackendConfig::LocalModel { .. } => Err(Error::Config(
            "this build has no local-model support; rebuild with `--features onnx`".into(),
        )),
    }
}

pub fn build_chat_client(cfg: &RunConfig) -> Result<Option<Box<dyn ChatClient>>, Error> {
    if let Some(path) = &cfg.llm_transcript {
        return Ok(Some(Box::new(TranscriptReplay::load(path)?)));
    }
    Ok(cfg.llm.as_ref().map(|e| {
        let mut client = HttpChatClient::new(e.url.clone(), RetryPolicy::default());
        if let Some(path) = &cfg.llm_record {
            client = client.recording_to(path);
        }
        Box::new(client) as Box<dyn ChatClient>
    }))
}

/// Run the whole pipeline with backends built from `cfg`.
pub fn run_tifre(cfg: &RunConfig) -> Result<RunManifest, PipelineError> {
    cfg.validate().stage(Stage::Config)?;
    let backend = build_backend(cfg).stage(Stage::Config)?;
    let llm = if cfg.prompts.is_none() && cfg.strategy == StrategyKind::Tifre {
        build_chat_client(cfg).stage(Stage::Config)?
    } else {
        None
    };
    run_tifre_with(cfg, backend.as_ref(), llm.as_deref())
}

struct PromptOutcome {
    prompts: PromptSet,
    note: Option<String>,
}

fn resolve_prompts(cfg: &RunConfig, llm: Option<&dyn ChatClient>) -> Result<PromptOutcome, Error> {
    if let Some(p) = &cfg.prompts {
        return Ok(PromptOutcome {
            prompts: PromptSet::new(p.clone(), PromptSource::UserSupplied)?,
            note: None,
        });
    }
    let q = cfg
        .question
        .as_ref()
        .ok_or_else(|| Error::Config("no question given".into()))?;
    let Some(client) = llm else {
        return Ok(PromptOutcome {
            prompts: fallback_extract_prompts(q),
            note: Some("no LLM configured".into()),
        });
    };
    let llm_cfg = cfg
        .llm
        .as_ref()
        .map(|e| e.config.clone())
        .unwrap_or_else(|| LlmConfig::new("transcript"));
    let req = build_rewrite_request(q, &llm_cfg);
    match client.complete(&req).and_then(|raw| parse_llm_output(&raw)) {
        Ok(prompts) => Ok(PromptOutcome { prompts, note: None }),
        Err(e) if cfg.allow_fallback => {
            log::warn!("prompt rewriting failed ({e}); using fallback prompts");
            Ok(PromptOutcome {
                prompts: fallback_extract_prompts(q),
                note: Some(format!("LLM failed: {e}")),
            })
        }
        Err(e) => Err(e),
    }
}

/// Run the pipeline with caller-provided backends.
pub fn run_tifre_with(
    cfg: &RunConfig,
    backend: &dyn EmbeddingBackend,
    llm: Option<&dyn ChatClient>,
) -> Result<RunManifest, PipelineError> {
    cfg.validate().stage(Stage::Config)?;
    let mut timings = BTreeMap::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut BTreeMap<String, f64>| {
        timings.insert(name.to_owned(), clock.elapsed().as_secs_f64() * 1e3);
        clock = Instant::now();
    };

    let extract = ExtractOptions {
        fps: cfg.fps,
        working_res: cfg.working_res,
        decoder: cfg.decoder.clone(),
    };
    let frames = extract_frames(&cfg.input, &extract).stage(Stage::Extract)?;
    let n = frames.len();
    let mut tool_versions = BTreeMap::from([("tifre".to_owned(), env!("CARGO_PKG_VERSION").to_owned())]);
    if !cfg.input.is_dir() {
        tool_versions.insert(
            "decoder".to_owned(),
            decoder_version(&cfg.decoder).stage(Stage::Extract)?,
        );
    }
    lap("extract", &mut timings);

    let prompt_outcome = match cfg.strategy {
        StrategyKind::Tifre => Some(resolve_prompts(cfg, llm).stage(Stage::Prompts)?),
        StrategyKind::FixedFps => None,
    };
    lap("prompts", &mut timings);

    let mut cache = cfg
        .use_cache
        .then(|| EmbeddingCache::load_or_new(&cfg.out_dir, &backend.descriptor().identity));
    let batch = BatchOptions {
        batch_size: cfg.batch_size,
        workers: cfg.workers,
    };
    let frame_embs = embed_images_cached(&frames, backend, batch, cache.as_mut()).stage(Stage::Embed)?;
    let text_embs = match &prompt_outcome {
        Some(p) => Some(embed_text(&p.prompts, backend).stage(Stage::Embed)?),
        None => None,
    };
    lap("embed", &mut timings);

    let threshold = cfg.effective_threshold();
    let selection = match &text_embs {
        Some(texts) => {
            let sim = similarity_matrix(texts, &frame_embs.vectors).stage(Stage::Select)?;
            select_top_k(&saliency(&sim), cfg.max_frames, threshold).stage(Stage::Select)?
        }
        None => fixed_fps_select(n, cfg.max_frames).stage(Stage::Select)?,
    };
    lap("select", &mut timings);

    let assignment = match_frames(&frame_embs, &selection).stage(Stage::Match)?;
    lap("match", &mut timings);
    let merged = merge_frames(&frames, &selection, &assignment, cfg.merge_mode).stage(Stage::Merge)?;
    lap("merge", &mut timings);

    let outputs = merged
        .frames
        .iter()
        .enumerate()
        .map(|(rank, f)| OutputRecord {
            file: key_file_name(rank, f.provenance.key_index),
            rank,
            key_index: f.provenance.key_index,
            contributors: f.provenance.contributors.clone(),
        })
        .collect();
    let (prompts, prompt_note) = match prompt_outcome {
        Some(p) => (Some(p.prompts), p.note),
        None => (None, None),
    };
    let llm_used = prompts
        .as_ref()
        .filter(|p| p.source() != PromptSource::UserSupplied)
        .and(llm)
        .map(ChatClient::describe);
    let mut manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        question: cfg.question.clone(),
        prompts,
        prompt_note,
        llm: llm_used,
        backend: frame_embs.backend.clone(),
        coarse_fps: cfg.fps,
        working_res: [cfg.working_res.0, cfg.working_res.1],
        n_frames: n,
        strategy: cfg.strategy,
        k: cfg.max_frames,
        threshold,
        saliency: selection.scores.scores().to_vec(),
        key_indices: selection.key_indices.clone(),
        assignments: assignment
            .pairs
            .iter()
            .map(|(&non_key, m)| AssignmentRecord {
                non_key,
                key: m.key,
                weight: m.weight,
            })
            .collect(),
        merge_mode: cfg.merge_mode,
        outputs,
        tool_versions,
        timings_ms: timings.clone(),
    };
    lap("manifest", &mut timings);
    manifest.timings_ms = timings;

    write_outputs(&merged, &manifest, &cfg.out_dir, cfg.contact_sheet).stage(Stage::Write)?;
    if let Some(cache) = &cache {
        if let Err(e) = cache.save(&cfg.out_dir) {
            log::warn!("could not save embedding cache: {e}");
        }
    }
    Ok(manifest)
}

/// Rebuild a contact sheet from a finished run directory. Returns the path
/// written.
pub fn inspect(run_dir: &Path, out: Option<&Path>) -> Result<PathBuf, Error> {
    let manifest = RunManifest::load(&run_dir.join(MANIFEST_FILE))?;
    let images = manifest
        .outputs
        .iter()
        .map(|o| {
            let path = run_dir.join(&o.file);
            image::open(&path)
                .map(|i| i.to_rgb8())
                .map_err(|source| Error::Image { path, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<_> = images.iter().collect();
    let sheet = contact_sheet(&refs).ok_or(Error::EmptyInput("manifest lists no outputs"))?;
    let path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| run_dir.join(crate::video::CONTACT_SHEET_FILE));
    sheet
        .save(&path)
        .map_err(|source| Error::Image { path: path.clone(), source })?;
    Ok(path)
}

