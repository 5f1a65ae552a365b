//! Fixture builders shared by the CLI and acceptance suites: synthetic
//! feature CSVs in the toolkit's format, annotation files, and the smooth
//! target functions the synthetic-skill checks learn.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use affect_forest::featvec::{FeatureVector, AU_IDS, CANONICAL_COLUMNS, FEATURE_DIM};

/// Occurrence column set as the toolkit emits it: the 17 paired AUs plus
/// the occurrence-only AU28, which the pipeline must skip.
pub const OCCURRENCE_AUS: [&str; 18] = [
    "01", "02", "04", "05", "06", "07", "09", "10", "12", "14", "15", "17", "20", "23", "25",
    "26", "28", "45",
];

/// One synthetic frame destined for a feature CSV.
pub struct FrameFixture {
    pub frame: u32,
    pub values: [f64; FEATURE_DIM],
    pub success: bool,
    pub confidence: f64,
}

pub fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_affect-forest"))
}

/// Header row in the toolkit's own layout, with its ", " padding.
pub fn openface_header() -> String {
    let mut cols: Vec<String> = ["frame", "face_id", "timestamp", "confidence", "success"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend(CANONICAL_COLUMNS[..14].iter().map(|s| s.to_string()));
    for au in AU_IDS {
        cols.push(format!("AU{au}_r"));
    }
    for au in OCCURRENCE_AUS {
        cols.push(format!("AU{au}_c"));
    }
    cols.join(", ")
}

/// Random values inside every column's legal range. Continuous entries are
/// almost surely pairwise distinct, which the memorization checks rely on.
pub fn random_values(rng: &mut ChaCha8Rng) -> [f64; FEATURE_DIM] {
    let mut values = [0.0; FEATURE_DIM];
    for (i, v) in values.iter_mut().enumerate() {
        *v = match i {
            0..=5 => rng.gen_range(-1.0..1.0),
            6..=7 => rng.gen_range(-0.7..0.7),
            8..=10 => rng.gen_range(-120.0..120.0),
            11..=13 => rng.gen_range(-0.6..0.6),
            14..=30 => rng.gen_range(0.0..5.0),
            _ => (rng.gen_range(0.0..1.0) > 0.5) as u8 as f64,
        };
    }
    values
}

pub fn vector(values: &[f64; FEATURE_DIM]) -> FeatureVector {
    FeatureVector::from_canonical(*values).unwrap()
}

/// Smooth synthetic targets. Valence (`f`) leans on left-eye gaze x, one AU
/// intensity, a gaze angle, and one occurrence bit; arousal (`g`) on head
/// orientation, translation, the other gaze angle, and another intensity.
/// Both land inside [-1, 1] before noise.
pub fn smooth_targets(x: &[f64; FEATURE_DIM]) -> (f64, f64) {
    let valence = 0.55 * (1.7 * x[0] + 1.2 * (x[16] / 5.0) - 0.4).tanh()
        + 0.25 * (2.2 * x[6]).sin()
        + 0.1 * (2.0 * x[31] - 1.0);
    let arousal = 0.5 * (1.8 * x[11] + 1.3 * (x[8] / 120.0)).tanh()
        + 0.3 * (2.0 * x[7]).cos()
        - 0.15
        + 0.1 * (x[20] / 5.0);
    (valence.clamp(-1.0, 1.0), arousal.clamp(-1.0, 1.0))
}

/// Standard-normal pair via Box–Muller, driven by the given stream.
pub fn gaussian_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    let r = (-2.0 * u1.ln()).sqrt();
    (
        r * (std::f64::consts::TAU * u2).cos(),
        r * (std::f64::consts::TAU * u2).sin(),
    )
}

/// Noisy labelled frames for one synthetic sequence.
pub fn synthetic_frames(n: usize, seed: u64, noise: f64) -> (Vec<FrameFixture>, Vec<(f64, f64)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let values = random_values(&mut rng);
        let (v, a) = smooth_targets(&values);
        let (nv, na) = gaussian_pair(&mut rng);
        frames.push(FrameFixture {
            frame: i as u32 + 1,
            values,
            success: true,
            confidence: 0.98,
        });
        labels.push((
            (v + noise * nv).clamp(-1.0, 1.0),
            (a + noise * na).clamp(-1.0, 1.0),
        ));
    }
    (frames, labels)
}

/// Writes one sequence's feature CSV. Values print in round-trip form, so
/// parsing the file reproduces the in-memory doubles exactly.
pub fn write_feature_csv(dir: &Path, stem: &str, frames: &[FrameFixture]) {
    let mut content = openface_header();
    content.push('\n');
    for f in frames {
        write!(
            content,
            "{}, 0, {}, {}, {}",
            f.frame,
            f.frame as f64 / 30.0,
            f.confidence,
            f.success as u8
        )
        .unwrap();
        for j in 0..14 {
            write!(content, ", {}", f.values[j]).unwrap();
        }
        for j in 14..31 {
            write!(content, ", {}", f.values[j]).unwrap();
        }
        for (k, au) in OCCURRENCE_AUS.iter().enumerate() {
            // AU28 has no canonical slot; emit a fixed 0.
            let v = if *au == "28" {
                0.0
            } else {
                let canonical = k - (k > 16) as usize; // shift past AU28
                f.values[31 + canonical]
            };
            write!(content, ", {v}").unwrap();
        }
        content.push('\n');
    }
    fs::write(dir.join(format!("{stem}.csv")), content).unwrap();
}

pub fn write_annotations(dir: &Path, stem: &str, labels: &[(f64, f64)]) {
    let mut content = String::from("valence,arousal\n");
    for (v, a) in labels {
        writeln!(content, "{v},{a}").unwrap();
    }
    fs::write(dir.join(format!("{stem}.txt")), content).unwrap();
}
