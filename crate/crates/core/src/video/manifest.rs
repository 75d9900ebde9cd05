use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::BackendDescriptor;
use crate::error::{Error, Result};
use crate::fmm::{Contribution, Match, MatchAssignment, MergeMode};
use crate::math::SaliencyVector;
use crate::prompt::{PromptSet, Question};
use crate::selection::Selection;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_SCHEMA: &str = include_str!("../../schema/manifest.schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Tifre,
    FixedFps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub non_key: usize,
    pub key: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub file: String,
    pub rank: usize,
    pub key_index: usize,
    pub contributors: Vec<Contribution>,
}

/// Everything needed to audit or replay one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub question: Option<Question>,
    pub prompts: Option<PromptSet>,
    /// Why the prompt source is what it is, e.g. the LLM error behind a fallback.
    pub prompt_note: Option<String>,
    pub llm: Option<String>,
    pub backend: BackendDescriptor,
    pub coarse_fps: f64,
    pub working_res: [u32; 2],
    pub n_frames: usize,
    pub strategy: StrategyKind,
    pub k: usize,
    pub threshold: Option<f64>,
    pub saliency: Vec<f64>,
    pub key_indices: Vec<usize>,
    pub assignments: Vec<AssignmentRecord>,
    pub merge_mode: MergeMode,
    pub outputs: Vec<OutputRecord>,
    pub tool_versions: BTreeMap<String, String>,
    #[serde(default)]
    pub timings_ms: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json { source, .. } => Error::json(path, source),
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text).map_err(|e| Error::json("<manifest>", e))?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    /// Copy with the stage timings cleared; everything left is deterministic.
    pub fn without_timings(&self) -> Self {
        Self {
            timings_ms: BTreeMap::new(),
            ..self.clone()
        }
    }

    pub fn selection(&self) -> Result<Selection> {
        Selection::from_keys(
            self.n_frames,
            self.key_indices.clone(),
            SaliencyVector::new(self.saliency.clone())?,
        )
    }

    pub fn assignment(&self) -> MatchAssignment {
        let mut groups: BTreeMap<usize, Vec<usize>> =
            self.key_indices.iter().map(|&k| (k, Vec::new())).collect();
        let mut pairs = BTreeMap::new();
        for a in &self.assignments {
            pairs.insert(
                a.non_key,
                Match {
                    key: a.key,
                    weight: a.weight,
                },
            );
            groups.entry(a.key).or_default().push(a.non_key);
        }
        for g in groups.values_mut() {
            g.sort_unstable();
        }
        MatchAssignment { pairs, groups }
    }

    /// Cross-field consistency: key and assigned indices partition the
    /// frames, and outputs line up with the key frames.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("inconsistent manifest: {msg}")));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("unsupported schema version {}", self.schema_version));
        }
        if self.saliency.len() != self.n_frames {
            return bad(format!("{} saliency scores for {} frames", self.saliency.len(), self.n_frames));
        }
        let sel = self.selection()?;
        if sel.key_indices != self.key_indices {
            return bad("key indices must be ascending and unique".into());
        }
        let mut assigned: Vec<usize> = self.assignments.iter().map(|a| a.non_key).collect();
        assigned.sort_unstable();
        if assigned != sel.non_key_indices {
            return bad("assignments do not cover exactly the non-key frames".into());
        }
        if let Some(a) = self.assignments.iter().find(|a| !sel.is_key(a.key)) {
            return bad(format!("frame {} assigned to non-key frame {}", a.non_key, a.key));
        }
        if self.outputs.len() != self.key_indices.len() {
            return bad(format!("{} outputs for {} key frames", self.outputs.len(), self.key_indices.len()));
        }
        for (rank, (out, &key)) in self.outputs.iter().zip(&self.key_indices).enumerate() {
            if out.rank != rank || out.key_index != key {
                return bad(format!("output {rank} does not match key frame {key}"));
            }
        }
        Ok(())
    }
}
