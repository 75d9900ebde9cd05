//! Synthetic planted-relevance scenarios and the strategy/k evaluation.
//!
//! A scenario plants ground-truth frames whose embeddings equal one of the
//! prompt embeddings (plus optional Gaussian noise); every other frame is an
//! independent random unit vector. Selection strategies are then scored by
//! how many planted frames they recover.

use std::fmt::Write as _;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::PlantedRegistry;
use crate::error::{Error, Result};
use crate::math::{saliency, similarity_matrix, EmbeddingVector, SaliencyVector};
use crate::selection::{fixed_fps_select, select_top_k};
use crate::video::StrategyKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Planted {
    /// This many ground-truth frames at seed-dependent positions.
    Count(usize),
    /// Fixed positions, identical for every seed.
    Indices(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n: usize,
    pub planted: Planted,
    pub dim: usize,
    pub prompts: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            n: 60,
            planted: Planted::Count(5),
            dim: 64,
            prompts: 2,
            sigma: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScenario {
    pub spec: ScenarioSpec,
    /// Sorted planted frame indices.
    pub ground_truth: Vec<usize>,
    pub prompt_texts: Vec<String>,
    pub prompt_vectors: Vec<EmbeddingVector>,
    pub frame_vectors: Vec<EmbeddingVector>,
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

pub fn generate_scenario(spec: &ScenarioSpec) -> Result<SyntheticScenario> {
    if spec.n == 0 {
        return Err(Error::Scenario("n must be at least 1".into()));
    }
    if spec.dim < 2 || spec.prompts == 0 {
        return Err(Error::Scenario("need dim >= 2 and at least one prompt".into()));
    }
    if !(spec.sigma.is_finite() && spec.sigma >= 0.0) {
        return Err(Error::Scenario(format!("sigma must be non-negative, got {}", spec.sigma)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut truth = match &spec.planted {
        Planted::Count(c) => {
            if *c == 0 || *c > spec.n {
                return Err(Error::Scenario(format!("cannot plant {c} frames among {}", spec.n)));
            }
            index::sample(&mut rng, spec.n, *c).into_vec()
        }
        Planted::Indices(ix) => {
            if ix.is_empty() || ix.iter().any(|&i| i >= spec.n) {
                return Err(Error::Scenario(format!("planted indices {ix:?} invalid for n = {}", spec.n)));
            }
            ix.clone()
        }
    };
    truth.sort_unstable();
    truth.dedup();
    if truth.len() > spec.n {
        return Err(Error::Scenario("more planted frames than frames".into()));
    }

    let prompt_raw: Vec<Vec<f64>> = (0..spec.prompts).map(|_| random_unit(&mut rng, spec.dim)).collect();
    let noise_sd = spec.sigma / (spec.dim as f64).sqrt();
    let mut frames = Vec::with_capacity(spec.n);
    for j in 0..spec.n {
        let v = match truth.binary_search(&j) {
            Ok(rank) => {
                let base = &prompt_raw[rank % spec.prompts];
                if spec.sigma == 0.0 {
                    base.clone()
                } else {
                    base.iter()
                        .map(|x| x + noise_sd * rng.sample::<f64, _>(StandardNormal))
                        .collect()
                }
            }
            Err(_) => random_unit(&mut rng, spec.dim),
        };
        frames.push(EmbeddingVector::new(v)?);
    }

    Ok(SyntheticScenario {
        spec: spec.clone(),
        ground_truth: truth,
        prompt_texts: (0..spec.prompts).map(|i| format!("a photo of object {i}")).collect(),
        prompt_vectors: prompt_raw
            .into_iter()
            .map(EmbeddingVector::new)
            .collect::<Result<_>>()?,
        frame_vectors: frames,
    })
}

impl SyntheticScenario {
    pub fn saliency(&self) -> Result<SaliencyVector> {
        Ok(saliency(&similarity_matrix(&self.prompt_vectors, &self.frame_vectors)?))
    }

    /// Registry that makes a mock backend reproduce this scenario: prompt
    /// texts and every frame index map to the scenario's vectors.
    pub fn planted_registry(&self) -> PlantedRegistry {
        let mut reg = PlantedRegistry::default();
        for (t, v) in self.prompt_texts.iter().zip(&self.prompt_vectors) {
            reg.plant_text(t.clone(), v.values().to_vec());
        }
        for (i, v) in self.frame_vectors.iter().enumerate() {
            reg.plant_frame(i, v.values().to_vec());
        }
        reg
    }
}

fn hits(selected: &[usize], truth: &[usize]) -> usize {
    selected.iter().filter(|i| truth.binary_search(i).is_ok()).count()
}

pub fn recall(selected: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 1.0;
    }
    hits(selected, truth) as f64 / truth.len() as f64
}

pub fn precision(selected: &[usize], truth: &[usize]) -> f64 {
    if selected.is_empty() {
        return 0.0;
    }
    hits(selected, truth) as f64 / selected.len() as f64
}

pub fn reduction_ratio(selected: f64, n: f64) -> f64 {
    1.0 - selected / n
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub scenario: ScenarioSpec,
    /// Scenarios use seeds `scenario.seed .. scenario.seed + seeds`.
    pub seeds: usize,
    pub k_values: Vec<usize>,
    pub strategies: Vec<StrategyKind>,
    /// Relative cutoff for `tifre`; 0 is plain top-k.
    pub threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioSpec::default(),
            seeds: 100,
            k_values: vec![4, 5, 6, 7, 8, 10, 11, 13, 15],
            strategies: vec![StrategyKind::Tifre, StrategyKind::FixedFps],
            threshold: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub strategy: StrategyKind,
    pub k: usize,
    pub mean_recall: f64,
    pub min_recall: f64,
    pub mean_precision: f64,
    pub mean_frames: f64,
    pub reduction_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub seeds: usize,
    pub sigma: f64,
    pub threshold: f64,
    pub rows: Vec<EvalRow>,
}

fn strategy_name(s: StrategyKind) -> &'static str {
    match s {
        StrategyKind::Tifre => "tifre",
        StrategyKind::FixedFps => "fixed-fps",
    }
}

impl EvalReport {
    pub fn row(&self, strategy: StrategyKind, k: usize) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.strategy == strategy && r.k == k)
    }

    /// Mean TiFRe recall minus mean fixed-fps recall at `k`.
    pub fn recall_margin(&self, k: usize) -> Option<f64> {
        Some(self.row(StrategyKind::Tifre, k)?.mean_recall - self.row(StrategyKind::FixedFps, k)?.mean_recall)
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("strategy,k,mean_recall,min_recall,mean_precision,mean_frames,reduction_ratio\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{:.6},{:.6},{:.6},{:.4},{:.6}",
                strategy_name(r.strategy),
                r.k,
                r.mean_recall,
                r.min_recall,
                r.mean_precision,
                r.mean_frames,
                r.reduction_ratio
            )
            .unwrap();
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "N = {}, seeds = {}, sigma = {}, threshold = {}\n\n",
            self.n, self.seeds, self.sigma, self.threshold
        );
        writeln!(
            out,
            "{:<10} {:>4} {:>8} {:>8} {:>9} {:>8} {:>9}",
            "strategy", "k", "recall", "min", "precision", "frames", "reduction"
        )
        .unwrap();
        for r in &self.rows {
            writeln!(
                out,
                "{:<10} {:>4} {:>8.4} {:>8.4} {:>9.4} {:>8.2} {:>8.1}%",
                strategy_name(r.strategy),
                r.k,
                r.mean_recall,
                r.min_recall,
                r.mean_precision,
                r.mean_frames,
                r.reduction_ratio * 100.0
            )
            .unwrap();
        }
        let margins: Vec<String> = self
            .rows
            .iter()
            .filter(|r| r.strategy == StrategyKind::Tifre)
            .filter_map(|r| self.recall_margin(r.k).map(|m| format!("k={}: {m:+.4}", r.k)))
            .collect();
        if !margins.is_empty() {
            writeln!(out, "\nrecall margin (tifre - fixed-fps): {}", margins.join(", ")).unwrap();
        }
        out
    }
}

struct Outcome {
    recall: f64,
    precision: f64,
    frames: usize,
}

pub fn evaluate(cfg: &EvalConfig) -> Result<EvalReport> {
    if cfg.seeds == 0 || cfg.k_values.is_empty() || cfg.strategies.is_empty() {
        return Err(Error::Config("need at least one seed, k value and strategy".into()));
    }
    if cfg.k_values.contains(&0) {
        return Err(Error::Config("k values must be positive".into()));
    }
    if !(0.0..=1.0).contains(&cfg.threshold) {
        return Err(Error::Config(format!("threshold must be in [0, 1], got {}", cfg.threshold)));
    }
    let seeds: Vec<u64> = (0..cfg.seeds as u64).map(|i| cfg.scenario.seed + i).collect();

    // per seed: outcomes in (strategy, k) order
    let per_seed: Vec<Vec<Outcome>> = seeds
        .par_iter()
        .map(|&seed| {
            let sc = generate_scenario(&ScenarioSpec {
                seed,
                ..cfg.scenario.clone()
            })?;
            let scores = sc.saliency()?;
            let mut out = Vec::new();
            for &strategy in &cfg.strategies {
                for &k in &cfg.k_values {
                    let sel = match strategy {
                        StrategyKind::Tifre => select_top_k(&scores, k, Some(cfg.threshold))?,
                        StrategyKind::FixedFps => fixed_fps_select(sc.spec.n, k)?,
                    };
                    out.push(Outcome {
                        recall: recall(&sel.key_indices, &sc.ground_truth),
                        precision: precision(&sel.key_indices, &sc.ground_truth),
                        frames: sel.key_indices.len(),
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let count = seeds.len() as f64;
    let n = cfg.scenario.n;
    let mut rows = Vec::new();
    let mut col = 0;
    for &strategy in &cfg.strategies {
        for &k in &cfg.k_values {
            let outcomes = per_seed.iter().map(|o| &o[col]);
            let (mut r, mut p, mut f, mut min_r) = (0.0, 0.0, 0.0, f64::INFINITY);
            for o in outcomes {
                r += o.recall;
                p += o.precision;
                f += o.frames as f64;
                min_r = min_r.min(o.recall);
            }
            let mean_frames = f / count;
            rows.push(EvalRow {
                strategy,
                k,
                mean_recall: r / count,
                min_recall: min_r,
                mean_precision: p / count,
                mean_frames,
                reduction_ratio: reduction_ratio(mean_frames, n as f64),
            });
            col += 1;
        }
    }
    Ok(EvalReport {
        n,
        seeds: cfg.seeds,
        sigma: cfg.scenario.sigma,
        threshold: cfg.threshold,
        rows,
    })
}
