//! Versioned, deterministic binary serialization of fitted models.
//!
//! The layout is specified bit-exactly in `docs/model-format.md`. In brief:
//! all integers little-endian, reals as raw IEEE 754 bits (lossless round
//! trip), trees flattened pre-order with explicit child indices that must
//! point past their parent. Saving the same model twice yields identical
//! bytes; loading validates structure fully before returning, so a
//! truncated or corrupt file never produces a partial model.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use thiserror::Error;

use crate::forest::{Forest, ForestParams, MultiOutputModel, PRNG_NAME};
use crate::tree::{MaxFeatures, Node, Tree, TreeParams};
use crate::Target;

/// File magic: identifies a valence/arousal forest model.
pub const MAGIC: [u8; 8] = *b"VAFOREST";
/// Current format version.
pub const FORMAT_VERSION: u32 = 1;

const PRNG_TAG_LEN: usize = 8;
const NODE_LEAF: u8 = 0;
const NODE_INTERNAL: u8 = 1;
const MAX_FEATURES_ALL: u8 = 0;
const MAX_FEATURES_SQRT: u8 = 1;
const MAX_FEATURES_THIRD: u8 = 2;
const MAX_FEATURES_FIXED: u8 = 3;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("model was produced by unsupported generator {0:?}")]
    UnsupportedPrng(String),
    #[error("corrupt model: {0}")]
    CorruptTree(String),
    #[error("i/o failure: {0}")]
    IoFailure(#[from] io::Error),
}

/// Maps `UnexpectedEof` to a corruption error: a short read mid-structure
/// means the file was truncated, not that the disk failed.
fn depleted(e: io::Error) -> ModelIoError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        ModelIoError::CorruptTree("unexpected end of file".into())
    } else {
        ModelIoError::IoFailure(e)
    }
}

/// Writes `model` to `path`. Output bytes are a pure function of the model.
pub fn save_model(model: &MultiOutputModel, path: &Path) -> Result<(), ModelIoError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    let mut prng_tag = [0u8; PRNG_TAG_LEN];
    prng_tag[..PRNG_NAME.len()].copy_from_slice(PRNG_NAME.as_bytes());
    w.write_all(&prng_tag)?;
    w.write_u64::<LittleEndian>(model.feature_order_checksum())?;
    write_forest(&mut w, model.valence())?;
    write_forest(&mut w, model.arousal())?;
    w.flush()?;
    Ok(())
}

/// Reads a model back; exact inverse of [`save_model`].
pub fn load_model(path: &Path) -> Result<MultiOutputModel, ModelIoError> {
    let mut r = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            ModelIoError::BadMagic
        } else {
            ModelIoError::IoFailure(e)
        }
    })?;
    if magic != MAGIC {
        return Err(ModelIoError::BadMagic);
    }
    let version = r.read_u32::<LittleEndian>().map_err(depleted)?;
    if version != FORMAT_VERSION {
        return Err(ModelIoError::UnsupportedVersion(version));
    }
    let mut prng_tag = [0u8; PRNG_TAG_LEN];
    r.read_exact(&mut prng_tag).map_err(depleted)?;
    let prng = prng_tag.iter().take_while(|&&b| b != 0).copied().collect::<Vec<u8>>();
    if prng != PRNG_NAME.as_bytes() {
        return Err(ModelIoError::UnsupportedPrng(
            String::from_utf8_lossy(&prng).into_owned(),
        ));
    }
    let checksum = r.read_u64::<LittleEndian>().map_err(depleted)?;

    let valence = read_forest(&mut r, Target::Valence)?;
    let arousal = read_forest(&mut r, Target::Arousal)?;

    let mut trailing = [0u8; 1];
    match r.read(&mut trailing)? {
        0 => {}
        _ => return Err(ModelIoError::CorruptTree("trailing bytes after model".into())),
    }

    Ok(MultiOutputModel::from_parts(valence, arousal, checksum))
}

fn write_forest<W: Write>(w: &mut W, forest: &Forest) -> Result<(), ModelIoError> {
    w.write_u8(match forest.target() {
        Target::Valence => 0,
        Target::Arousal => 1,
    })?;
    let params = forest.params();
    w.write_u64::<LittleEndian>(params.master_seed)?;
    w.write_u32::<LittleEndian>(params.n_trees as u32)?;
    w.write_u8(params.bootstrap as u8)?;
    write_tree_params(w, &params.tree)?;
    for tree in forest.trees() {
        w.write_u32::<LittleEndian>(tree.n_nodes() as u32)?;
        for node in tree.nodes() {
            match *node {
                Node::Leaf { value, n_samples } => {
                    w.write_u8(NODE_LEAF)?;
                    w.write_f64::<LittleEndian>(value)?;
                    w.write_u32::<LittleEndian>(n_samples)?;
                }
                Node::Internal { feature, threshold, left, right } => {
                    w.write_u8(NODE_INTERNAL)?;
                    w.write_u16::<LittleEndian>(feature)?;
                    w.write_f64::<LittleEndian>(threshold)?;
                    w.write_u32::<LittleEndian>(left)?;
                    w.write_u32::<LittleEndian>(right)?;
                }
            }
        }
    }
    Ok(())
}

fn read_forest<R: Read>(r: &mut R, expected: Target) -> Result<Forest, ModelIoError> {
    let target_tag = r.read_u8().map_err(depleted)?;
    let target = match target_tag {
        0 => Target::Valence,
        1 => Target::Arousal,
        t => return Err(ModelIoError::CorruptTree(format!("unknown target tag {t}"))),
    };
    if target != expected {
        return Err(ModelIoError::CorruptTree(format!(
            "expected {expected} forest, found {target}"
        )));
    }
    let master_seed = r.read_u64::<LittleEndian>().map_err(depleted)?;
    let n_trees = r.read_u32::<LittleEndian>().map_err(depleted)? as usize;
    if n_trees == 0 {
        return Err(ModelIoError::CorruptTree("forest with zero trees".into()));
    }
    let bootstrap = match r.read_u8().map_err(depleted)? {
        0 => false,
        1 => true,
        b => return Err(ModelIoError::CorruptTree(format!("bad bootstrap flag {b}"))),
    };
    let tree_params = read_tree_params(r)?;
    let params = ForestParams { n_trees, bootstrap, tree: tree_params, master_seed };

    let mut trees = Vec::with_capacity(n_trees.min(1 << 16));
    for _ in 0..n_trees {
        let n_nodes = r.read_u32::<LittleEndian>().map_err(depleted)? as usize;
        let mut nodes = Vec::with_capacity(n_nodes.min(1 << 20));
        for _ in 0..n_nodes {
            let node = match r.read_u8().map_err(depleted)? {
                NODE_LEAF => Node::Leaf {
                    value: r.read_f64::<LittleEndian>().map_err(depleted)?,
                    n_samples: r.read_u32::<LittleEndian>().map_err(depleted)?,
                },
                NODE_INTERNAL => Node::Internal {
                    feature: r.read_u16::<LittleEndian>().map_err(depleted)?,
                    threshold: r.read_f64::<LittleEndian>().map_err(depleted)?,
                    left: r.read_u32::<LittleEndian>().map_err(depleted)?,
                    right: r.read_u32::<LittleEndian>().map_err(depleted)?,
                },
                t => {
                    return Err(ModelIoError::CorruptTree(format!("unknown node tag {t}")));
                }
            };
            nodes.push(node);
        }
        trees.push(Tree::from_nodes(nodes).map_err(ModelIoError::CorruptTree)?);
    }
    Ok(Forest::from_parts(trees, params, target))
}

fn write_tree_params<W: Write>(w: &mut W, p: &TreeParams) -> Result<(), ModelIoError> {
    w.write_u8(p.max_depth.is_some() as u8)?;
    w.write_u32::<LittleEndian>(p.max_depth.unwrap_or(0))?;
    w.write_u32::<LittleEndian>(p.min_samples_split as u32)?;
    w.write_u32::<LittleEndian>(p.min_samples_leaf as u32)?;
    let (tag, k) = match p.max_features {
        MaxFeatures::All => (MAX_FEATURES_ALL, 0),
        MaxFeatures::Sqrt => (MAX_FEATURES_SQRT, 0),
        MaxFeatures::Third => (MAX_FEATURES_THIRD, 0),
        MaxFeatures::Fixed(k) => (MAX_FEATURES_FIXED, k as u32),
    };
    w.write_u8(tag)?;
    w.write_u32::<LittleEndian>(k)?;
    w.write_u64::<LittleEndian>(p.seed)?;
    Ok(())
}

fn read_tree_params<R: Read>(r: &mut R) -> Result<TreeParams, ModelIoError> {
    let has_depth = r.read_u8().map_err(depleted)?;
    let depth = r.read_u32::<LittleEndian>().map_err(depleted)?;
    let max_depth = match has_depth {
        0 => None,
        1 => Some(depth),
        b => return Err(ModelIoError::CorruptTree(format!("bad depth flag {b}"))),
    };
    let min_samples_split = r.read_u32::<LittleEndian>().map_err(depleted)? as usize;
    let min_samples_leaf = r.read_u32::<LittleEndian>().map_err(depleted)? as usize;
    let tag = r.read_u8().map_err(depleted)?;
    let k = r.read_u32::<LittleEndian>().map_err(depleted)? as usize;
    let max_features = match tag {
        MAX_FEATURES_ALL => MaxFeatures::All,
        MAX_FEATURES_SQRT => MaxFeatures::Sqrt,
        MAX_FEATURES_THIRD => MaxFeatures::Third,
        MAX_FEATURES_FIXED => MaxFeatures::Fixed(k),
        t => return Err(ModelIoError::CorruptTree(format!("bad max_features tag {t}"))),
    };
    let seed = r.read_u64::<LittleEndian>().map_err(depleted)?;
    Ok(TreeParams { max_depth, min_samples_split, min_samples_leaf, max_features, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use tempfile::tempdir;

    use crate::featvec::{FeatureVector, FEATURE_DIM};
    use crate::forest::{fit_multioutput, ForestParams};
    use crate::ingest::{align, AffectLabel, FrameRecord};
    use crate::ingest::Dataset;

    fn random_vectors(n: usize, seed: u64) -> Vec<FeatureVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let mut values = [0.0; FEATURE_DIM];
                for (i, v) in values.iter_mut().enumerate() {
                    *v = match i {
                        0..=13 => rng.gen_range(-1.0..1.0),
                        14..=30 => rng.gen_range(0.0..5.0),
                        _ => (rng.gen_range(0.0..1.0) > 0.5) as u8 as f64,
                    };
                }
                FeatureVector::from_canonical(values).unwrap()
            })
            .collect()
    }

    fn small_dataset(n: usize, seed: u64) -> Dataset {
        let xs = random_vectors(n, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xffff);
        let frames: Vec<FrameRecord> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| FrameRecord {
                frame_index: i as u32,
                features: *x,
                success: true,
                confidence: 1.0,
            })
            .collect();
        let labels: Vec<AffectLabel> = (0..n)
            .map(|_| AffectLabel::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        align(frames, labels, "io-test").0
    }

    fn small_model(seed: u64) -> MultiOutputModel {
        let ds = small_dataset(30, seed);
        let params = ForestParams { n_trees: 3, master_seed: seed, ..ForestParams::default() };
        fit_multioutput(std::slice::from_ref(&ds), &params).unwrap()
    }

    #[test]
    fn saving_twice_is_byte_identical() {
        let dir = tempdir().unwrap();
        let model = small_model(1);
        let p1 = dir.path().join("a.vaf");
        let p2 = dir.path().join("b.vaf");
        save_model(&model, &p1).unwrap();
        save_model(&model, &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn save_load_resave_is_a_fixpoint() {
        let dir = tempdir().unwrap();
        let model = small_model(2);
        let p1 = dir.path().join("a.vaf");
        save_model(&model, &p1).unwrap();
        let loaded = load_model(&p1).unwrap();
        assert_eq!(loaded, model);
        let p2 = dir.path().join("b.vaf");
        save_model(&loaded, &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn round_trip_preserves_predictions_exactly() {
        let dir = tempdir().unwrap();
        let model = small_model(3);
        let path = dir.path().join("m.vaf");
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        for x in random_vectors(1000, 99) {
            assert_eq!(model.predict(&x).unwrap(), loaded.predict(&x).unwrap());
        }
    }

    #[test]
    fn trivial_constant_model_round_trips() {
        let dir = tempdir().unwrap();
        let xs = random_vectors(4, 7);
        let frames: Vec<FrameRecord> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| FrameRecord {
                frame_index: i as u32,
                features: *x,
                success: true,
                confidence: 1.0,
            })
            .collect();
        let labels = vec![AffectLabel::new(0.0, 0.0); 4];
        let ds = align(frames, labels, "zeros").0;
        let params = ForestParams { n_trees: 1, master_seed: 0, ..ForestParams::default() };
        let model = fit_multioutput(std::slice::from_ref(&ds), &params).unwrap();
        let path = dir.path().join("zero.vaf");
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded.predict(&xs[0]).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn every_truncation_is_rejected() {
        let dir = tempdir().unwrap();
        let model = small_model(4);
        let path = dir.path().join("full.vaf");
        save_model(&model, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        let cut = dir.path().join("cut.vaf");
        for len in 0..bytes.len() {
            fs::write(&cut, &bytes[..len]).unwrap();
            match load_model(&cut) {
                Err(
                    ModelIoError::BadMagic
                    | ModelIoError::CorruptTree(_)
                    | ModelIoError::UnsupportedVersion(_),
                ) => {}
                other => panic!("prefix of {len} bytes: expected rejection, got {other:?}"),
            }
        }
    }

    #[test]
    fn bad_magic_and_version_are_rejected() {
        let dir = tempdir().unwrap();
        let model = small_model(5);
        let path = dir.path().join("m.vaf");
        save_model(&model, &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();

        let mut wrong_magic = bytes.clone();
        wrong_magic[0] ^= 0xff;
        let p = dir.path().join("magic.vaf");
        fs::write(&p, &wrong_magic).unwrap();
        assert!(matches!(load_model(&p), Err(ModelIoError::BadMagic)));

        bytes[8] = 0xfe; // version field
        let p = dir.path().join("version.vaf");
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(load_model(&p), Err(ModelIoError::UnsupportedVersion(_))));
    }

    #[test]
    fn edited_checksum_loads_but_refuses_to_predict() {
        let dir = tempdir().unwrap();
        let model = small_model(6);
        let path = dir.path().join("m.vaf");
        save_model(&model, &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        // Checksum sits after magic (8), version (4), prng tag (8).
        bytes[20] ^= 0x01;
        fs::write(&path, &bytes).unwrap();
        let loaded = load_model(&path).unwrap();
        let x = random_vectors(1, 1)[0];
        assert!(matches!(
            loaded.predict(&x),
            Err(crate::forest::PredictError::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn corrupt_child_index_is_rejected() {
        let dir = tempdir().unwrap();
        let model = small_model(8);
        let path = dir.path().join("m.vaf");
        save_model(&model, &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        // Find the first internal node and point its left child backwards.
        // File header is 28 bytes (magic 8, version 4, prng 8, checksum 8);
        // forest header is 40 (target 1, seed 8, n_trees 4, bootstrap 1,
        // tree params 26); then a 4-byte node count puts the first node tag
        // at offset 72.
        let mut off = 72;
        loop {
            match bytes[off] {
                NODE_LEAF => off += 1 + 8 + 4,
                NODE_INTERNAL => break,
                t => panic!("unexpected tag {t}"),
            }
        }
        let left_field = off + 1 + 2 + 8;
        bytes[left_field..left_field + 4].copy_from_slice(&0u32.to_le_bytes());
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_model(&path), Err(ModelIoError::CorruptTree(_))));
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let dir = tempdir().unwrap();
        let model = small_model(9);
        let path = dir.path().join("m.vaf");
        save_model(&model, &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.push(0);
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_model(&path), Err(ModelIoError::CorruptTree(_))));
    }
}
