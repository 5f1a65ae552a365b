//! Parsing of per-frame feature CSVs and annotation files, plus positional
//! alignment into a clean dataset.
//!
//! Feature files are the toolkit's standard per-frame CSV: one header row,
//! comma-separated, cells may carry padding whitespace. Annotation files are
//! plain text: a single header line, then one `valence,arousal` line per
//! frame. Alignment is positional (row i pairs with line i); frames the
//! detector failed on and labels outside `[-1, 1]` are dropped, never
//! imputed.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::featvec::{FeatureVector, CANONICAL_COLUMNS, FEATURE_DIM};
use crate::Target;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("malformed annotation line {line}: expected `valence,arousal`, got {content:?}")]
    MalformedLine { line: u64, content: String },
}

/// One video frame as parsed from a feature CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRecord {
    pub frame_index: u32,
    pub features: FeatureVector,
    /// Detector success flag for the frame.
    pub success: bool,
    /// Detector confidence in `[0, 1]`.
    pub confidence: f64,
}

/// Ground-truth affect pair for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffectLabel {
    pub valence: f64,
    pub arousal: f64,
    pub valid: bool,
}

impl AffectLabel {
    /// Builds a label, marking it invalid when either target falls outside
    /// `[-1, 1]` (out-of-range sentinels, whatever their value, all land
    /// here; non-finite values fail the range check too).
    pub fn new(valence: f64, arousal: f64) -> Self {
        let in_range = |v: f64| (-1.0..=1.0).contains(&v);
        AffectLabel {
            valence,
            arousal,
            valid: in_range(valence) && in_range(arousal),
        }
    }
}

/// A filtered, frame-aligned sequence: every record has a successful
/// detection and a valid label, sorted by frame index.
#[derive(Debug, Clone)]
pub struct Dataset {
    sequence_id: String,
    records: Vec<(FrameRecord, AffectLabel)>,
}

impl Dataset {
    pub fn sequence_id(&self) -> &str {
        &self.sequence_id
    }

    pub fn records(&self) -> &[(FrameRecord, AffectLabel)] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Drops records below a confidence floor; returns how many went.
    pub fn retain_min_confidence(&mut self, min_confidence: f64) -> usize {
        let before = self.records.len();
        self.records.retain(|(f, _)| f.confidence >= min_confidence);
        before - self.records.len()
    }

    pub fn feature_rows(&self) -> impl Iterator<Item = &FeatureVector> {
        self.records.iter().map(|(f, _)| &f.features)
    }

    pub fn targets(&self, target: Target) -> Vec<f64> {
        self.records
            .iter()
            .map(|(_, l)| match target {
                Target::Valence => l.valence,
                Target::Arousal => l.arousal,
            })
            .collect()
    }
}

/// Counts of what [`align`] discarded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AlignReport {
    /// |len(frames) − len(labels)|: pairs that never existed.
    pub length_discrepancy: usize,
    pub dropped_failed_detection: usize,
    pub dropped_invalid_label: usize,
    pub dropped_duplicate_frame: usize,
}

impl AlignReport {
    pub fn total_dropped(&self) -> usize {
        self.dropped_failed_detection + self.dropped_invalid_label + self.dropped_duplicate_frame
    }
}

/// Parses a feature CSV into one record per data row, in file order.
///
/// Columns are located by header name, so column order in the file is
/// irrelevant and extra columns are ignored. The `frame` column supplies
/// frame indices when present; otherwise the 0-based row position is used.
pub fn parse_openface_csv(path: &Path) -> Result<Vec<FrameRecord>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => io_error(path, e),
            _ => IngestError::Csv(e),
        })?;

    let headers = reader.headers()?.clone();
    let position = |name: &str| headers.iter().position(|h| h == name);

    let success_col = position("success")
        .ok_or_else(|| IngestError::MissingColumn("success".into()))?;
    let confidence_col = position("confidence")
        .ok_or_else(|| IngestError::MissingColumn("confidence".into()))?;
    let mut feature_cols = [0usize; FEATURE_DIM];
    for (i, &name) in CANONICAL_COLUMNS.iter().enumerate() {
        feature_cols[i] =
            position(name).ok_or_else(|| IngestError::MissingColumn(name.into()))?;
    }
    let frame_col = position("frame");

    let mut records = Vec::new();
    for (row, result) in reader.records().enumerate() {
        let record = result?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |col: usize| -> Result<f64, IngestError> {
            let text = record.get(col).ok_or_else(|| IngestError::MalformedRow {
                line,
                reason: format!("row has only {} fields", record.len()),
            })?;
            text.parse::<f64>().map_err(|_| IngestError::MalformedRow {
                line,
                reason: format!("non-numeric value {text:?} in column {}", headers[col].to_owned()),
            })
        };

        let frame_index = match frame_col {
            Some(col) => {
                let v = field(col)?;
                if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
                    return Err(IngestError::MalformedRow {
                        line,
                        reason: format!("frame number {v} is not a non-negative integer"),
                    });
                }
                v as u32
            }
            None => row as u32,
        };
        let success = field(success_col)? != 0.0;
        let confidence = field(confidence_col)?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(IngestError::MalformedRow {
                line,
                reason: format!("confidence {confidence} outside [0, 1]"),
            });
        }

        let mut values = [0.0; FEATURE_DIM];
        for (i, &col) in feature_cols.iter().enumerate() {
            values[i] = field(col)?;
        }
        let features = FeatureVector::from_canonical(values)
            .map_err(|e| IngestError::MalformedRow { line, reason: e.to_string() })?;

        records.push(FrameRecord { frame_index, features, success, confidence });
    }
    Ok(records)
}

/// Parses an annotation file: one header line, then `valence,arousal` lines.
/// Out-of-range pairs come back with `valid = false` rather than erroring.
pub fn parse_annotations(path: &Path) -> Result<Vec<AffectLabel>, IngestError> {
    let content = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let mut lines: Vec<&str> = content.lines().map(str::trim).collect();
    while lines.last() == Some(&"") {
        lines.pop();
    }
    if lines.is_empty() {
        return Err(IngestError::MalformedLine {
            line: 1,
            content: "<missing header line>".into(),
        });
    }

    let mut labels = Vec::with_capacity(lines.len().saturating_sub(1));
    for (i, text) in lines.iter().enumerate().skip(1) {
        let line = (i + 1) as u64;
        let malformed = || IngestError::MalformedLine { line, content: (*text).to_string() };
        let mut parts = text.split(',');
        let valence = parts.next().and_then(|s| s.trim().parse::<f64>().ok());
        let arousal = parts.next().and_then(|s| s.trim().parse::<f64>().ok());
        match (valence, arousal, parts.next()) {
            (Some(v), Some(a), None) => labels.push(AffectLabel::new(v, a)),
            _ => return Err(malformed()),
        }
    }
    Ok(labels)
}

/// Pairs frame i with label i, drops failed detections and invalid labels,
/// and returns the filtered dataset plus counts of everything discarded.
///
/// Length mismatches are reported, not fatal: pairing stops at the shorter
/// list. Duplicate frame indices keep their first occurrence so the
/// uniqueness invariant holds.
pub fn align(
    frames: Vec<FrameRecord>,
    labels: Vec<AffectLabel>,
    sequence_id: impl Into<String>,
) -> (Dataset, AlignReport) {
    let mut report = AlignReport {
        length_discrepancy: frames.len().abs_diff(labels.len()),
        ..AlignReport::default()
    };

    let mut records: Vec<(FrameRecord, AffectLabel)> = Vec::new();
    for (frame, label) in frames.into_iter().zip(labels) {
        if !frame.success {
            report.dropped_failed_detection += 1;
        } else if !label.valid {
            report.dropped_invalid_label += 1;
        } else {
            records.push((frame, label));
        }
    }

    records.sort_by_key(|(f, _)| f.frame_index);
    let before = records.len();
    records.dedup_by_key(|(f, _)| f.frame_index);
    report.dropped_duplicate_frame = before - records.len();

    (Dataset { sequence_id: sequence_id.into(), records }, report)
}

fn io_error(path: &Path, source: impl Into<std::io::Error>) -> IngestError {
    IngestError::Io { path: path.to_path_buf(), source: source.into() }
}
