//! Greedy regression-tree induction with variance-reduction splits.
//!
//! Splits minimize the size-weighted population variance of the child
//! targets; candidate thresholds are midpoints between consecutive distinct
//! feature values. Everything is deterministic: feature subsets come from a
//! seeded ChaCha8 stream consumed in depth-first node order, and ties
//! between equal-gain splits resolve to the lowest feature index, then the
//! lowest threshold.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::featvec::{FeatureVector, FEATURE_DIM};

/// Gains at or below this are treated as zero, so float noise on constant
/// targets never manufactures a split.
pub const GAIN_EPSILON: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("cannot fit a tree on an empty dataset")]
    EmptyData,
    #[error("feature and target lengths differ: {features} vs {targets}")]
    LengthMismatch { features: usize, targets: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// How many features each split considers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxFeatures {
    All,
    /// ⌊√48⌋ = 6.
    Sqrt,
    /// ⌊48/3⌋ = 16; the training default.
    Third,
    Fixed(usize),
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        let k = match self {
            MaxFeatures::All => n_features,
            MaxFeatures::Sqrt => (n_features as f64).sqrt().floor() as usize,
            MaxFeatures::Third => n_features / 3,
            MaxFeatures::Fixed(k) => k,
        };
        k.max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    /// Maximum edge-depth of any node; `None` grows until pure.
    pub max_depth: Option<u32>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    /// Seeds the per-node feature subsampling stream.
    pub seed: u64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::Third,
            seed: 0,
        }
    }
}

/// One node of a fitted tree. Samples route left iff
/// `x[feature] <= threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Internal { feature: u16, threshold: f64, left: u32, right: u32 },
    Leaf { value: f64, n_samples: u32 },
}

/// A fitted regression tree stored as a flat pre-order array: the root is
/// node 0 and children always sit at higher indices than their parent.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

/// A winning split and its variance-reduction gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

impl Tree {
    /// Fits on the full sample set.
    pub fn fit(
        features: &[FeatureVector],
        targets: &[f64],
        params: &TreeParams,
    ) -> Result<Tree, TreeError> {
        Tree::fit_on_indices(features, targets, (0..features.len()).collect(), params)
    }

    /// Fits on a row multiset given by `indices` (repeats allowed; this is
    /// the bootstrap entry point).
    pub fn fit_on_indices(
        features: &[FeatureVector],
        targets: &[f64],
        mut indices: Vec<usize>,
        params: &TreeParams,
    ) -> Result<Tree, TreeError> {
        if features.len() != targets.len() {
            return Err(TreeError::LengthMismatch {
                features: features.len(),
                targets: targets.len(),
            });
        }
        if indices.is_empty() {
            return Err(TreeError::EmptyData);
        }
        if let MaxFeatures::Fixed(k) = params.max_features {
            if k == 0 || k > FEATURE_DIM {
                return Err(TreeError::InvalidParams(format!(
                    "fixed feature count {k} outside 1..={FEATURE_DIM}"
                )));
            }
        }
        if params.min_samples_split < 2 {
            return Err(TreeError::InvalidParams(
                "min_samples_split must be at least 2".into(),
            ));
        }
        if params.min_samples_leaf < 1 {
            return Err(TreeError::InvalidParams(
                "min_samples_leaf must be at least 1".into(),
            ));
        }

        let mut builder = Builder {
            features,
            targets,
            params,
            n_candidates: params.max_features.resolve(FEATURE_DIM),
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            nodes: Vec::new(),
            scratch: Vec::new(),
        };
        builder.grow(&mut indices, 0);
        Ok(Tree { nodes: builder.nodes })
    }

    /// Routes `x` to a leaf and returns its value.
    pub fn predict(&self, x: &FeatureVector) -> f64 {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Leaf { value, .. } => return value,
                Node::Internal { feature, threshold, left, right } => {
                    i = if x[feature as usize] <= threshold { left } else { right } as usize;
                }
            }
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Rebuilds a tree from a flat node array, validating structure: every
    /// child index must point past its parent and in bounds, each non-root
    /// node must be referenced exactly once, and feature indices must be
    /// within the vector.
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Tree, String> {
        if nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        let n = nodes.len();
        let mut referenced = vec![0u8; n];
        for (i, node) in nodes.iter().enumerate() {
            if let Node::Internal { feature, left, right, .. } = *node {
                if feature as usize >= FEATURE_DIM {
                    return Err(format!("node {i}: feature index {feature} out of range"));
                }
                for child in [left, right] {
                    let c = child as usize;
                    if c >= n {
                        return Err(format!("node {i}: child index {c} out of bounds"));
                    }
                    if c <= i {
                        return Err(format!("node {i}: child index {c} does not follow parent"));
                    }
                    if referenced[c] != 0 {
                        return Err(format!("node {c} referenced more than once"));
                    }
                    referenced[c] = 1;
                }
            }
        }
        if let Some(orphan) = (1..n).find(|&i| referenced[i] == 0) {
            return Err(format!("node {orphan} is unreachable"));
        }
        Ok(Tree { nodes })
    }
}

/// Finds the variance-reduction-maximizing split over the given candidate
/// features, or `None` when every admissible split has zero gain (within
/// [`GAIN_EPSILON`]) or would leave a child below `min_samples_leaf`.
///
/// Gain of a split into children L, R of sizes nL, nR out of n:
/// `Var(parent) − (nL/n)·Var(L) − (nR/n)·Var(R)`, population variances.
pub fn best_split(
    features: &[FeatureVector],
    targets: &[f64],
    candidate_features: &[usize],
    min_samples_leaf: usize,
) -> Option<Split> {
    assert_eq!(features.len(), targets.len());
    let indices: Vec<usize> = (0..features.len()).collect();
    let mut candidates: Vec<usize> = candidate_features
        .iter()
        .copied()
        .filter(|&f| f < FEATURE_DIM)
        .collect();
    candidates.sort_unstable();
    candidates.dedup();
    let mut scratch = Vec::new();
    best_split_on(features, targets, &indices, &candidates, min_samples_leaf, &mut scratch)
}

/// Core split search over a node's row indices. `candidates` must be sorted
/// ascending so the lowest-feature-index tie rule falls out of scan order.
fn best_split_on(
    features: &[FeatureVector],
    targets: &[f64],
    indices: &[usize],
    candidates: &[usize],
    min_samples_leaf: usize,
    scratch: &mut Vec<(f64, f64)>,
) -> Option<Split> {
    let n = indices.len();
    if n < 2 {
        return None;
    }
    let n_f = n as f64;

    // Center targets on the node mean; prefix sums of centered values keep
    // the variance arithmetic well-conditioned.
    let mean = indices.iter().map(|&i| targets[i]).sum::<f64>() / n_f;
    let mut total_sum = 0.0;
    let mut total_sq = 0.0;
    for &i in indices {
        let yc = targets[i] - mean;
        total_sum += yc;
        total_sq += yc * yc;
    }
    let parent_var = (total_sq / n_f - (total_sum / n_f).powi(2)).max(0.0);
    if parent_var <= GAIN_EPSILON {
        return None;
    }

    let mut best: Option<Split> = None;
    let mut best_gain = GAIN_EPSILON;

    for &feature in candidates {
        scratch.clear();
        scratch.extend(indices.iter().map(|&i| (features[i][feature], targets[i] - mean)));
        scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

        let mut left_sum = 0.0;
        let mut left_sq = 0.0;
        for pos in 1..n {
            let yc = scratch[pos - 1].1;
            left_sum += yc;
            left_sq += yc * yc;

            let (a, b) = (scratch[pos - 1].0, scratch[pos].0);
            if a >= b {
                continue; // not a boundary between distinct values
            }
            if pos < min_samples_leaf || n - pos < min_samples_leaf {
                continue;
            }
            let threshold = 0.5 * a + 0.5 * b;
            if !(threshold >= a && threshold < b) {
                // Adjacent floats can round the midpoint onto b, which the
                // `<=` routing rule could not reproduce; skip.
                continue;
            }

            let n_left = pos as f64;
            let n_right = (n - pos) as f64;
            let var_left = (left_sq / n_left - (left_sum / n_left).powi(2)).max(0.0);
            let right_sum = total_sum - left_sum;
            let right_sq = total_sq - left_sq;
            let var_right = (right_sq / n_right - (right_sum / n_right).powi(2)).max(0.0);
            let gain = parent_var - (n_left / n_f) * var_left - (n_right / n_f) * var_right;

            if gain > best_gain {
                best_gain = gain;
                best = Some(Split { feature, threshold, gain });
            }
        }
    }
    best
}

struct Builder<'a> {
    features: &'a [FeatureVector],
    targets: &'a [f64],
    params: &'a TreeParams,
    n_candidates: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    scratch: Vec<(f64, f64)>,
}

impl Builder<'_> {
    /// Grows the subtree for `indices` and returns its root's node index.
    /// Nodes land in the array in pre-order (parent, left subtree, right
    /// subtree).
    fn grow(&mut self, indices: &mut [usize], depth: u32) -> u32 {
        let n = indices.len();
        let at_depth_limit = self.params.max_depth.is_some_and(|d| depth >= d);
        let splittable = n >= self.params.min_samples_split && !at_depth_limit;

        let split = if splittable {
            let candidates = self.sample_candidates();
            best_split_on(
                self.features,
                self.targets,
                indices,
                &candidates,
                self.params.min_samples_leaf,
                &mut self.scratch,
            )
        } else {
            None
        };

        let me = self.nodes.len() as u32;
        match split {
            None => {
                let mean =
                    indices.iter().map(|&i| self.targets[i]).sum::<f64>() / n as f64;
                self.nodes.push(Node::Leaf { value: mean, n_samples: n as u32 });
            }
            Some(s) => {
                self.nodes.push(Node::Leaf { value: 0.0, n_samples: 0 }); // patched below
                let n_left = stable_partition(indices, |i| {
                    self.features[i][s.feature] <= s.threshold
                });
                debug_assert!(n_left > 0 && n_left < n);
                let (left_ids, right_ids) = indices.split_at_mut(n_left);
                let left = self.grow(left_ids, depth + 1);
                let right = self.grow(right_ids, depth + 1);
                self.nodes[me as usize] = Node::Internal {
                    feature: s.feature as u16,
                    threshold: s.threshold,
                    left,
                    right,
                };
            }
        }
        me
    }

    /// Draws the split-candidate feature subset for one node, sorted
    /// ascending. Consumes no randomness when every feature is in play.
    fn sample_candidates(&mut self) -> Vec<usize> {
        if self.n_candidates >= FEATURE_DIM {
            return (0..FEATURE_DIM).collect();
        }
        let mut picked =
            rand::seq::index::sample(&mut self.rng, FEATURE_DIM, self.n_candidates).into_vec();
        picked.sort_unstable();
        picked
    }
}

/// Partitions `indices` so elements satisfying `pred` come first, preserving
/// relative order on both sides; returns the left-side length.
fn stable_partition(indices: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let mut right = Vec::with_capacity(indices.len());
    let mut write = 0;
    for read in 0..indices.len() {
        let idx = indices[read];
        if pred(idx) {
            indices[write] = idx;
            write += 1;
        } else {
            right.push(idx);
        }
    }
    indices[write..].copy_from_slice(&right);
    write
}
