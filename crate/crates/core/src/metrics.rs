//! Concordance correlation coefficient and model evaluation.
//!
//! CCC here is Lin's agreement coefficient with *population* (divide-by-n)
//! moments throughout:
//!
//! ```text
//! ccc = 2·s_xy / (s_x² + s_y² + (x̄ − ȳ)²)
//! ```
//!
//! The n-vs-(n−1) choice matters because the squared mean difference in the
//! denominator is unscaled; sample moments would shift every score. Scores
//! are computed once over all evaluated frames concatenated, not averaged
//! per sequence.

use thiserror::Error;

use crate::forest::{MultiOutputModel, PredictError};
use crate::ingest::Dataset;
use crate::Target;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("prediction and truth lengths differ: {predictions} vs {truth}")]
    LengthMismatch { predictions: usize, truth: usize },
    #[error("need at least 2 samples, got {0}")]
    TooShort(usize),
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
    #[error("both sequences are constant with equal means; CCC denominator is zero")]
    DegenerateInput,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot evaluate on an empty dataset")]
    EmptyData,
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Scores for one evaluation run; the mean is exactly
/// `mean_ccc(ccc_valence, ccc_arousal)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub ccc_valence: f64,
    pub ccc_arousal: f64,
    pub mean_ccc: f64,
    pub n_frames: usize,
}

/// Concordance correlation coefficient over paired sequences.
///
/// When exactly one sequence is constant the covariance is zero and the
/// result is 0 — a constant predictor is a legitimate degenerate model.
/// Only a zero denominator (both constant, equal means) is an error.
pub fn ccc(predictions: &[f64], truth: &[f64]) -> Result<f64, MetricsError> {
    if predictions.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: predictions.len(),
            truth: truth.len(),
        });
    }
    let n = predictions.len();
    if n < 2 {
        return Err(MetricsError::TooShort(n));
    }
    for (i, (&p, &t)) in predictions.iter().zip(truth).enumerate() {
        if !p.is_finite() || !t.is_finite() {
            return Err(MetricsError::NonFinite(i));
        }
    }

    let n_f = n as f64;
    let mean_p = predictions.iter().sum::<f64>() / n_f;
    let mean_t = truth.iter().sum::<f64>() / n_f;

    let mut cov = 0.0;
    let mut var_p = 0.0;
    let mut var_t = 0.0;
    for (&p, &t) in predictions.iter().zip(truth) {
        let dp = p - mean_p;
        let dt = t - mean_t;
        cov += dp * dt;
        var_p += dp * dp;
        var_t += dt * dt;
    }
    cov /= n_f;
    var_p /= n_f;
    var_t /= n_f;

    let denominator = var_p + var_t + (mean_p - mean_t).powi(2);
    if denominator == 0.0 {
        return Err(MetricsError::DegenerateInput);
    }
    Ok((2.0 * cov / denominator).clamp(-1.0, 1.0))
}

/// The challenge's summary score: arithmetic mean of the two CCCs.
pub fn mean_ccc(ccc_valence: f64, ccc_arousal: f64) -> f64 {
    (ccc_valence + ccc_arousal) / 2.0
}

/// Predicts every frame of every dataset (in order) and scores each target
/// over the concatenated frames.
pub fn evaluate(
    model: &MultiOutputModel,
    datasets: &[Dataset],
) -> Result<EvalReport, EvalError> {
    let n_frames: usize = datasets.iter().map(|d| d.len()).sum();
    if n_frames == 0 {
        return Err(EvalError::EmptyData);
    }

    let mut pred_valence = Vec::with_capacity(n_frames);
    let mut pred_arousal = Vec::with_capacity(n_frames);
    for dataset in datasets {
        for x in dataset.feature_rows() {
            let (v, a) = model.predict(x)?;
            pred_valence.push(v);
            pred_arousal.push(a);
        }
    }

    let truth_valence: Vec<f64> =
        datasets.iter().flat_map(|d| d.targets(Target::Valence)).collect();
    let truth_arousal: Vec<f64> =
        datasets.iter().flat_map(|d| d.targets(Target::Arousal)).collect();

    let ccc_valence = ccc(&pred_valence, &truth_valence)?;
    let ccc_arousal = ccc(&pred_arousal, &truth_arousal)?;
    Ok(EvalReport {
        ccc_valence,
        ccc_arousal,
        mean_ccc: mean_ccc(ccc_valence, ccc_arousal),
        n_frames,
    })
}
