//! Key-frame selection: saliency top-k and the fixed-rate baseline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::SaliencyVector;

pub const DEFAULT_MAX_FRAMES: usize = 10;
pub const DEFAULT_THRESHOLD: f64 = 0.8;

/// Partition of `0..n` into key frames and the rest, both ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub n: usize,
    pub key_indices: Vec<usize>,
    pub non_key_indices: Vec<usize>,
    pub scores: SaliencyVector,
}

impl Selection {
    /// Build from an arbitrary key set; fills in the complement.
    pub fn from_keys(n: usize, mut keys: Vec<usize>, scores: SaliencyVector) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput("no frames"));
        }
        if scores.len() != n {
            return Err(Error::Dimension {
                left: n,
                right: scores.len(),
                at: None,
            });
        }
        keys.sort_unstable();
        keys.dedup();
        if keys.is_empty() {
            return Err(Error::EmptyInput("no key frames"));
        }
        if let Some(&bad) = keys.iter().find(|&&k| k >= n) {
            return Err(Error::Config(format!("key index {bad} out of range for {n} frames")));
        }
        let mut is_key = vec![false; n];
        for &k in &keys {
            is_key[k] = true;
        }
        let non_key_indices = (0..n).filter(|&i| !is_key[i]).collect();
        Ok(Self {
            n,
            key_indices: keys,
            non_key_indices,
            scores,
        })
    }

    pub fn is_key(&self, index: usize) -> bool {
        self.key_indices.binary_search(&index).is_ok()
    }
}

/// Highest-saliency frames, at most `k` of them.
///
/// Ties go to the lower frame index. With `threshold = Some(t)` and `t > 0`,
/// frames scoring below `t * max(scores)` are dropped from the top-k, but the
/// best frame always survives. The result is in temporal order.
pub fn select_top_k(scores: &SaliencyVector, k: usize, threshold: Option<f64>) -> Result<Selection> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("no saliency scores"));
    }
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let s = scores.scores();
    let mut order: Vec<usize> = (0..s.len()).collect();
    // partial_cmp, not total_cmp: -0.0 and 0.0 are the same score
    order.sort_by(|&a, &b| {
        s[b].partial_cmp(&s[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(k);

    if let Some(t) = threshold.filter(|&t| t > 0.0) {
        let cutoff = t * s[order[0]];
        let best = order[0];
        order.retain(|&i| i == best || s[i] >= cutoff);
    }
    Selection::from_keys(s.len(), order, scores.clone())
}

/// `m` evenly spaced indices, `floor(t * n / m)` for `t in 0..m`. `m` is
/// clamped to `n`.
pub fn fixed_fps_select(n: usize, m: usize) -> Result<Selection> {
    if n == 0 {
        return Err(Error::EmptyInput("no frames"));
    }
    if m == 0 {
        return Err(Error::Config("frame count must be at least 1".into()));
    }
    let m = m.min(n);
    let keys = (0..m).map(|t| t * n / m).collect();
    Selection::from_keys(n, keys, SaliencyVector::zeros(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sv(s: &[f64]) -> SaliencyVector {
        SaliencyVector::new(s.to_vec()).unwrap()
    }

    #[test]
    fn signed_zeros_tie() {
        let sel = select_top_k(&sv(&[-1.0, 0.0, -0.0, -0.0]), 2, None).unwrap();
        assert_eq!(sel.key_indices, vec![1, 2]);
        let sel = select_top_k(&sv(&[-0.0, 0.0]), 1, None).unwrap();
        assert_eq!(sel.key_indices, vec![0]);
    }

    #[test]
    fn top_k_examples() {
        let sel = select_top_k(&sv(&[0.9, 0.1, 0.8, 0.2]), 2, None).unwrap();
        assert_eq!(sel.key_indices, [0, 2]);
        assert_eq!(sel.non_key_indices, [1, 3]);

        let sel = select_top_k(&sv(&[0.3, 0.1, 0.2]), 5, None).unwrap();
        assert_eq!(sel.key_indices, [0, 1, 2]);
        assert!(sel.non_key_indices.is_empty());

        let sel = select_top_k(&sv(&[0.5, 0.5, 0.5]), 2, None).unwrap();
        assert_eq!(sel.key_indices, [0, 1]);
    }

    #[test]
    fn threshold_drops_weak_frames_but_keeps_best() {
        let s = sv(&[0.2, 0.9, 0.75, 0.85, 0.1]);
        let sel = select_top_k(&s, 4, Some(0.9)).unwrap();
        assert_eq!(sel.key_indices, [1, 3]);
        // threshold 0 is "off"
        assert_eq!(select_top_k(&s, 4, Some(0.0)).unwrap().key_indices, [0, 1, 2, 3]);
        // negative best score: only the best survives
        let neg = sv(&[-0.5, -0.2, -0.3]);
        assert_eq!(select_top_k(&neg, 3, Some(0.8)).unwrap().key_indices, [1]);
    }

    #[test]
    fn top_k_errors() {
        assert!(matches!(
            select_top_k(&sv(&[]), 3, None),
            Err(Error::EmptyInput(_))
        ));
        assert!(select_top_k(&sv(&[0.1]), 0, None).is_err());
    }

    #[test]
    fn fixed_fps_examples() {
        assert_eq!(fixed_fps_select(8, 8).unwrap().key_indices, (0..8).collect::<Vec<_>>());
        assert_eq!(fixed_fps_select(60, 6).unwrap().key_indices, [0, 10, 20, 30, 40, 50]);
        assert_eq!(fixed_fps_select(5, 2).unwrap().key_indices, [0, 2]);
        assert_eq!(fixed_fps_select(3, 10).unwrap().key_indices, [0, 1, 2]);
        assert!(fixed_fps_select(5, 0).is_err());
        assert!(fixed_fps_select(0, 1).is_err());
        assert!(fixed_fps_select(60, 6).unwrap().scores.scores().iter().all(|&s| s == 0.0));
    }

    fn scores() -> impl Strategy<Value = Vec<f64>> {
        // coarse grid so ties actually happen
        prop::collection::vec((-20i32..=20).prop_map(|x| f64::from(x) / 20.0), 1..64)
    }

    proptest! {
        #[test]
        fn key_set_grows_with_k(s in scores(), k in 1usize..64) {
            let a = select_top_k(&sv(&s), k, None).unwrap();
            let b = select_top_k(&sv(&s), k + 1, None).unwrap();
            prop_assert!(a.key_indices.iter().all(|i| b.key_indices.contains(i)));
        }

        #[test]
        fn scaling_scores_keeps_keys(s in scores(), k in 1usize..64, c in 0.01f64..100.0) {
            let scaled: Vec<f64> = s.iter().map(|x| x * c).collect();
            prop_assert_eq!(
                select_top_k(&sv(&s), k, None).unwrap().key_indices,
                select_top_k(&sv(&scaled), k, None).unwrap().key_indices
            );
        }

        #[test]
        fn partition_and_top_k_property(s in scores(), k in 1usize..64, t in prop::option::of(0.0f64..1.0)) {
            let sel = select_top_k(&sv(&s), k, t).unwrap();
            let mut all: Vec<usize> = sel.key_indices.iter().chain(&sel.non_key_indices).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..s.len()).collect::<Vec<_>>());
            prop_assert!(!sel.key_indices.is_empty() && sel.key_indices.len() <= k.min(s.len()));
            if t.is_none() {
                let min_key = sel.key_indices.iter().map(|&i| s[i]).fold(f64::INFINITY, f64::min);
                let max_non = sel.non_key_indices.iter().map(|&i| s[i]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(min_key >= max_non);
            }
        }

        #[test]
        fn fixed_fps_is_sorted_and_bounded(n in 1usize..500, m in 1usize..600) {
            let sel = fixed_fps_select(n, m).unwrap();
            prop_assert_eq!(sel.key_indices.len(), m.min(n));
            prop_assert!(sel.key_indices.windows(2).all(|w| w[0] < w[1]));
            prop_assert_eq!(sel.key_indices[0], 0);
        }
    }
}
