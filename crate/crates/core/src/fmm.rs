//! Frame matching and merging.
//!
//! Every non-key frame is assigned to the key frame it is most similar to in
//! embedding space, and each key frame is replaced by a similarity-weighted
//! average of itself and its group.

use std::collections::BTreeMap;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::FrameEmbeddings;
use crate::error::{Error, Result};
use crate::math::cosine_similarity;
use crate::selection::Selection;
use crate::video::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub key: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchAssignment {
    /// non-key index -> matched key frame and its similarity
    pub pairs: BTreeMap<usize, Match>,
    /// key index -> assigned non-key indices, ascending
    pub groups: BTreeMap<usize, Vec<usize>>,
}

impl MatchAssignment {
    pub fn group(&self, key: usize) -> &[usize] {
        self.groups.get(&key).map_or(&[], Vec::as_slice)
    }
}

fn validate(embs: &FrameEmbeddings, sel: &Selection) -> Result<()> {
    if embs.len() != sel.n {
        return Err(Error::Dimension {
            left: sel.n,
            right: embs.len(),
            at: None,
        });
    }
    if sel.key_indices.is_empty() {
        return Err(Error::EmptyInput("no key frames"));
    }
    Ok(())
}

/// Assign each non-key frame to its most similar key frame.
///
/// Ties go to the temporally nearer key frame, then to the lower key index.
/// The stored weight is the similarity to the matched key frame.
pub fn match_frames(embs: &FrameEmbeddings, sel: &Selection) -> Result<MatchAssignment> {
    validate(embs, sel)?;
    let mut pairs = BTreeMap::new();
    let mut groups: BTreeMap<usize, Vec<usize>> =
        sel.key_indices.iter().map(|&k| (k, Vec::new())).collect();

    for &n in &sel.non_key_indices {
        let mut best: Option<(usize, f64)> = None;
        for &k in &sel.key_indices {
            let sim = cosine_similarity(&embs.vectors[k], &embs.vectors[n]).map_err(|e| e.at(k, n))?;
            let better = match best {
                None => true,
                Some((bk, bs)) => sim > bs || (sim == bs && n.abs_diff(k) < n.abs_diff(bk)),
            };
            if better {
                best = Some((k, sim));
            }
        }
        let (key, weight) = best.expect("at least one key frame");
        pairs.insert(n, Match { key, weight });
        groups.get_mut(&key).expect("key present").push(n);
    }
    Ok(MatchAssignment { pairs, groups })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MergeMode {
    /// `(1/|S|) Σ w_n I_n` over the group members only.
    PaperLiteral,
    /// `(I_k + Σ max(w_n, 0) I_n) / (1 + Σ max(w_n, 0))`.
    #[default]
    Normalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub index: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub key_index: usize,
    pub contributors: Vec<Contribution>,
    pub mode: MergeMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergedFrame {
    pub image: RgbImage,
    pub provenance: Provenance,
}

/// Merged key frames in temporal order.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedFrameSet {
    pub frames: Vec<MergedFrame>,
}

impl MergedFrameSet {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Round half away from zero into `0..=255`.
pub fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Float pixels of one merged frame, before quantization. Members are
/// accumulated in the order given.
pub fn merge_group_float(key: &Frame, members: &[(&Frame, f64)], mode: MergeMode) -> Result<Vec<f64>> {
    let dims = key.dimensions();
    for (f, _) in members {
        if f.dimensions() != dims {
            return Err(Error::MergeDimension {
                index: f.index,
                expected: dims,
                got: f.dimensions(),
            });
        }
    }
    let key_px = key.image.as_raw();
    if members.is_empty() {
        return Ok(key_px.iter().map(|&p| f64::from(p)).collect());
    }

    let (mut acc, denom) = match mode {
        MergeMode::PaperLiteral => (vec![0.0; key_px.len()], members.len() as f64),
        MergeMode::Normalized => {
            let total: f64 = 1.0 + members.iter().map(|(_, w)| w.max(0.0)).sum::<f64>();
            (key_px.iter().map(|&p| f64::from(p)).collect(), total)
        }
    };
    for (f, w) in members {
        let w = match mode {
            MergeMode::PaperLiteral => *w,
            MergeMode::Normalized => w.max(0.0),
        };
        if w == 0.0 {
            continue;
        }
        for (a, &p) in acc.iter_mut().zip(f.image.as_raw()) {
            *a += w * f64::from(p);
        }
    }
    for a in &mut acc {
        *a /= denom;
    }
    Ok(acc)
}

/// Merge every key frame with its assigned group. `frames[i]` must be the
/// frame with coarse index `i`.
pub fn merge_frames(
    frames: &[Frame],
    sel: &Selection,
    asg: &MatchAssignment,
    mode: MergeMode,
) -> Result<MergedFrameSet> {
    if frames.len() != sel.n {
        return Err(Error::Dimension {
            left: sel.n,
            right: frames.len(),
            at: None,
        });
    }
    let merged = sel
        .key_indices
        .par_iter()
        .map(|&k| {
            let key = &frames[k];
            let members: Vec<(&Frame, f64)> = asg
                .group(k)
                .iter()
                .map(|&n| {
                    let w = asg
                        .pairs
                        .get(&n)
                        .ok_or_else(|| Error::Config(format!("frame {n} has no match weight")))?
                        .weight;
                    Ok((&frames[n], w))
                })
                .collect::<Result<_>>()?;
            let px = merge_group_float(key, &members, mode)?;
            let (w, h) = key.dimensions();
            let image = RgbImage::from_raw(w, h, px.into_iter().map(quantize).collect())
                .expect("buffer matches key frame dimensions");
            Ok(MergedFrame {
                image,
                provenance: Provenance {
                    key_index: k,
                    contributors: members
                        .iter()
                        .map(|(f, w)| Contribution {
                            index: f.index,
                            weight: *w,
                        })
                        .collect(),
                    mode,
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MergedFrameSet { frames: merged })
}
