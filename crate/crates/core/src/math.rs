//! Vector primitives shared by selection, matching and the eval harness.
//!
//! Everything here works in `f64` with a fixed accumulation order, so the same
//! inputs always give bit-identical outputs regardless of how callers batch or
//! parallelise their work.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite, non-empty embedding in some shared text/image space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("embedding vector"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateVector { at: None });
        }
        Ok(Self(values))
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    /// Unit-length copy. Fails on a zero vector.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::DegenerateVector { at: None });
        }
        Ok(Self(self.0.iter().map(|v| v / n).collect()))
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

/// `a·b / (‖a‖‖b‖)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension {
            left: a.dim(),
            right: b.dim(),
            at: None,
        });
    }
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 || !na.is_finite() || !nb.is_finite() {
        return Err(Error::DegenerateVector { at: None });
    }
    let cos = dot(a.values(), b.values()) / (na * nb);
    Ok(cos.clamp(-1.0, 1.0))
}

/// Prompt-by-frame cosine similarities, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl SimilarityMatrix {
    /// Build from explicit rows. Rows must be non-empty, rectangular and in `[-1, 1]`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        if k == 0 {
            return Err(Error::EmptyInput("similarity matrix has no rows"));
        }
        let n = rows[0].len();
        if n == 0 {
            return Err(Error::EmptyInput("similarity matrix has no columns"));
        }
        let mut entries = Vec::with_capacity(k * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension {
                    left: n,
                    right: row.len(),
                    at: Some((i, 0)),
                });
            }
            for (j, v) in row.into_iter().enumerate() {
                if !(-1.0..=1.0).contains(&v) {
                    return Err(Error::DegenerateVector { at: Some((i, j)) });
                }
                entries.push(v);
            }
        }
        Ok(Self {
            rows: k,
            cols: n,
            entries,
        })
    }

    /// Number of prompts (K).
    pub fn prompts(&self) -> usize {
        self.rows
    }

    /// Number of frames (N).
    pub fn frames(&self) -> usize {
        self.cols
    }

    pub fn get(&self, prompt: usize, frame: usize) -> f64 {
        self.entries[prompt * self.cols + frame]
    }

    pub fn row(&self, prompt: usize) -> &[f64] {
        &self.entries[prompt * self.cols..(prompt + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }
}

/// Cosine similarity of every text embedding against every frame embedding.
///
/// Rows are computed in parallel; each entry is a single `cosine_similarity`
/// call so the result does not depend on the thread count.
pub fn similarity_matrix(
    texts: &[EmbeddingVector],
    frames: &[EmbeddingVector],
) -> Result<SimilarityMatrix> {
    if texts.is_empty() {
        return Err(Error::EmptyInput("no text embeddings"));
    }
    if frames.is_empty() {
        return Err(Error::EmptyInput("no frame embeddings"));
    }
    let rows: Vec<Vec<f64>> = texts
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            frames
                .iter()
                .enumerate()
                .map(|(j, f)| cosine_similarity(t, f).map_err(|e| e.at(i, j)))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(SimilarityMatrix {
        rows: texts.len(),
        cols: frames.len(),
        entries: rows.into_iter().flatten().collect(),
    })
}

/// Per-frame saliency: the best similarity any prompt achieves on that frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SaliencyVector(Vec<f64>);

impl SaliencyVector {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::DegenerateVector { at: None });
        }
        Ok(Self(scores))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.0
    }

    pub fn max(&self) -> Option<f64> {
        self.0.iter().copied().reduce(f64::max)
    }
}

pub fn saliency(sim: &SimilarityMatrix) -> SaliencyVector {
    let mut scores = sim.row(0).to_vec();
    for i in 1..sim.prompts() {
        for (s, &v) in scores.iter_mut().zip(sim.row(i)) {
            if v > *s {
                *s = v;
            }
        }
    }
    SaliencyVector(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(values: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        let c = cosine_similarity(&v(&[1.0, 2.0, 2.0]), &v(&[2.0, 2.0, 1.0])).unwrap();
        assert!((c - 8.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(
            cosine_similarity(&v(&[1.0, 0.0]), &v(&[1.0, 0.0, 0.0])),
            Err(Error::Dimension { left: 2, right: 3, .. })
        ));
        assert!(matches!(
            cosine_similarity(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])),
            Err(Error::DegenerateVector { .. })
        ));
        assert!(EmbeddingVector::new(vec![f64::NAN]).is_err());
        assert!(EmbeddingVector::new(vec![]).is_err());
    }

    #[test]
    fn matrix_examples() {
        let m = similarity_matrix(&[v(&[1.0, 0.0])], &[v(&[1.0, 0.0]), v(&[0.0, 1.0])]).unwrap();
        assert_eq!(m.to_rows(), vec![vec![1.0, 0.0]]);

        let t = v(&[0.3, -0.2, 0.9]);
        let frames = [v(&[1.0, 2.0, 3.0]), v(&[-1.0, 0.5, 0.0])];
        let m = similarity_matrix(&[t.clone(), t], &frames).unwrap();
        assert_eq!(m.row(0), m.row(1));
    }

    #[test]
    fn matrix_reports_offending_entry() {
        let err = similarity_matrix(
            &[v(&[1.0, 0.0]), v(&[1.0, 1.0])],
            &[v(&[1.0, 0.0]), v(&[0.0, 0.0])],
        )
        .unwrap_err();
        assert!(matches!(err, Error::DegenerateVector { at: Some((0, 1)) }));
    }

    #[test]
    fn saliency_examples() {
        let m = SimilarityMatrix::from_rows(vec![vec![0.2, 0.9], vec![0.5, 0.1]]).unwrap();
        assert_eq!(saliency(&m).scores(), &[0.5, 0.9]);
        let m = SimilarityMatrix::from_rows(vec![vec![0.3, 0.7]]).unwrap();
        assert_eq!(saliency(&m).scores(), &[0.3, 0.7]);
        let m = SimilarityMatrix::from_rows(vec![vec![0.4; 5]; 3]).unwrap();
        assert_eq!(saliency(&m).scores(), &[0.4; 5]);
    }

    #[test]
    fn from_rows_rejects_ragged() {
        assert!(SimilarityMatrix::from_rows(vec![vec![0.1, 0.2], vec![0.1]]).is_err());
        assert!(SimilarityMatrix::from_rows(vec![]).is_err());
        assert!(SimilarityMatrix::from_rows(vec![vec![1.5]]).is_err());
    }

    fn nonzero_vec(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, dim)
            .prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
    }

    proptest! {
        #[test]
        fn cosine_is_scale_invariant_and_symmetric(
            (a, b) in (1usize..32).prop_flat_map(|d| (nonzero_vec(d), nonzero_vec(d))),
            c in 1e-3f64..1e3,
        ) {
            let va = v(&a);
            let vb = v(&b);
            let scaled = v(&a.iter().map(|x| x * c).collect::<Vec<_>>());
            let base = cosine_similarity(&va, &vb).unwrap();
            prop_assert!((cosine_similarity(&scaled, &vb).unwrap() - base).abs() <= 1e-9);
            prop_assert_eq!(cosine_similarity(&vb, &va).unwrap(), base);
            prop_assert!((-1.0..=1.0).contains(&base));
        }

        #[test]
        fn saliency_is_attained(rows in (1usize..8, 1usize..32).prop_flat_map(|(k, n)| {
            prop::collection::vec(prop::collection::vec(-1.0f64..=1.0, n), k)
        })) {
            let m = SimilarityMatrix::from_rows(rows.clone()).unwrap();
            let s = saliency(&m);
            for j in 0..m.frames() {
                prop_assert!(rows.iter().any(|r| r[j] == s.scores()[j]));
                prop_assert!(rows.iter().all(|r| r[j] <= s.scores()[j]));
            }
        }
    }
}
