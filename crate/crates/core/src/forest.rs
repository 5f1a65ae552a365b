//! Bootstrap-bagged tree ensembles and the two-target wrapper that fits one
//! independent forest per affect axis.
//!
//! Reproducibility scheme (frozen in the model file header):
//!
//! * all randomness comes from ChaCha8 streams seeded with 64-bit values;
//! * seeds split by `derive_seed(master, stream) = mix(master ^ mix(stream))`
//!   where `mix` is one splitmix64 step;
//! * per-target forest seed: stream = FNV-1a of the target name;
//! * per-tree seed: stream = tree index; from it, stream [`STREAM_BOOTSTRAP`]
//!   seeds the bag draw and [`STREAM_SPLITS`] the feature subsampling.
//!
//! Trees may be fit on any number of threads; every tree depends only on its
//! derived seed, and ensemble aggregation is sequential in ascending tree
//! order, so results are bit-identical regardless of parallelism.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::featvec::{self, FeatureVector};
use crate::ingest::Dataset;
use crate::tree::{Tree, TreeError, TreeParams};
use crate::Target;

/// Name of the generator family behind all training randomness; stored in
/// model files so a reader can tell how a model was produced.
pub const PRNG_NAME: &str = "chacha8";

/// Stream index for a tree's bootstrap draw.
pub const STREAM_BOOTSTRAP: u64 = 1;
/// Stream index for a tree's split-candidate sampling.
pub const STREAM_SPLITS: u64 = 2;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("cannot fit on an empty dataset")]
    EmptyData,
    #[error("feature and target lengths differ: {features} vs {targets}")]
    LengthMismatch { features: usize, targets: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PredictError {
    #[error(
        "model was trained under feature order {model:#018x} but this build \
         expects {current:#018x}; refusing to predict"
    )]
    ChecksumMismatch { model: u64, current: u64 },
}

/// One splitmix64 step; the documented seed-splitting primitive.
pub fn mix_seed(z: u64) -> u64 {
    let mut z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed for a named sub-stream of `master`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    mix_seed(master ^ mix_seed(stream))
}

/// Seed for one target's forest: the stream is the FNV-1a hash of the
/// target name, so the valence and arousal forests never share draws.
pub fn target_seed(master: u64, target: Target) -> u64 {
    derive_seed(master, featvec::fnv1a64(target.name().as_bytes()))
}

/// Draws `n` indices uniformly with replacement from `[0, n)`.
/// Deterministic in `(n, seed)` and identical on every platform: the draws
/// are 64-bit uniform-int samples from a ChaCha8 stream.
pub fn bootstrap_sample(n: usize, seed: u64) -> Vec<usize> {
    assert!(n >= 1, "bootstrap_sample requires n >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(0..n as u64) as usize).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub bootstrap: bool,
    pub tree: TreeParams,
    pub master_seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 250,
            bootstrap: true,
            tree: TreeParams::default(),
            master_seed: 0,
        }
    }
}

/// A bagged ensemble for a single target.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<Tree>,
    params: ForestParams,
    target: Target,
}

impl Forest {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn target(&self) -> Target {
        self.target
    }

    /// Unweighted mean of the per-tree predictions, accumulated in
    /// ascending tree order.
    pub fn predict(&self, x: &FeatureVector) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        sum / self.trees.len() as f64
    }

    pub(crate) fn from_parts(trees: Vec<Tree>, params: ForestParams, target: Target) -> Forest {
        Forest { trees, params, target }
    }
}

/// Fits `params.n_trees` trees, each on its own bootstrap resample (or the
/// full data when `bootstrap` is off). Tree `i` draws nothing from any
/// shared state: its seed is `derive_seed(master_seed, i)`.
pub fn fit_forest(
    features: &[FeatureVector],
    targets: &[f64],
    params: &ForestParams,
    target: Target,
) -> Result<Forest, ForestError> {
    if features.len() != targets.len() {
        return Err(ForestError::LengthMismatch {
            features: features.len(),
            targets: targets.len(),
        });
    }
    if features.is_empty() {
        return Err(ForestError::EmptyData);
    }
    if params.n_trees == 0 {
        return Err(ForestError::InvalidParams("n_trees must be at least 1".into()));
    }

    let n = features.len();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|i| {
            let tree_seed = derive_seed(params.master_seed, i as u64);
            let indices = if params.bootstrap {
                bootstrap_sample(n, derive_seed(tree_seed, STREAM_BOOTSTRAP))
            } else {
                (0..n).collect()
            };
            let tree_params = TreeParams {
                seed: derive_seed(tree_seed, STREAM_SPLITS),
                ..params.tree
            };
            Tree::fit_on_indices(features, targets, indices, &tree_params)
        })
        .collect::<Result<Vec<Tree>, TreeError>>()?;

    Ok(Forest { trees, params: params.clone(), target })
}

/// The full two-target model: independent valence and arousal forests plus
/// the feature-order checksum they were trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiOutputModel {
    valence: Forest,
    arousal: Forest,
    feature_order_checksum: u64,
}

impl MultiOutputModel {
    pub fn valence(&self) -> &Forest {
        &self.valence
    }

    pub fn arousal(&self) -> &Forest {
        &self.arousal
    }

    pub fn feature_order_checksum(&self) -> u64 {
        self.feature_order_checksum
    }

    pub(crate) fn from_parts(
        valence: Forest,
        arousal: Forest,
        feature_order_checksum: u64,
    ) -> MultiOutputModel {
        MultiOutputModel { valence, arousal, feature_order_checksum }
    }

    /// Predicts `(valence, arousal)` for one frame. Fails when the model's
    /// embedded feature-order checksum disagrees with this build's
    /// canonical order — such predictions would be silently scrambled.
    pub fn predict(&self, x: &FeatureVector) -> Result<(f64, f64), PredictError> {
        let current = featvec::canonical_order_checksum();
        if self.feature_order_checksum != current {
            return Err(PredictError::ChecksumMismatch {
                model: self.feature_order_checksum,
                current,
            });
        }
        Ok((self.valence.predict(x), self.arousal.predict(x)))
    }
}

/// Fits one forest per target over the pooled records of `datasets`.
/// Each forest's master seed derives from `(params.master_seed, target
/// name)`, so the two bag sequences differ even on identical targets.
pub fn fit_multioutput(
    datasets: &[Dataset],
    params: &ForestParams,
) -> Result<MultiOutputModel, ForestError> {
    let features: Vec<FeatureVector> = datasets
        .iter()
        .flat_map(|d| d.feature_rows().copied())
        .collect();
    if features.is_empty() {
        return Err(ForestError::EmptyData);
    }

    let fit_target = |target: Target| -> Result<Forest, ForestError> {
        let targets: Vec<f64> = datasets.iter().flat_map(|d| d.targets(target)).collect();
        let forest_params = ForestParams {
            master_seed: target_seed(params.master_seed, target),
            ..params.clone()
        };
        fit_forest(&features, &targets, &forest_params, target)
    };

    let valence = fit_target(Target::Valence)?;
    let arousal = fit_target(Target::Arousal)?;
    Ok(MultiOutputModel {
        valence,
        arousal,
        feature_order_checksum: featvec::canonical_order_checksum(),
    })
}
