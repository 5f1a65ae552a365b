//! Implementations of the train / predict / evaluate subcommands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use affect_forest::forest::{fit_multioutput, ForestParams, MultiOutputModel};
use affect_forest::ingest::{self, AlignReport, Dataset};
use affect_forest::metrics::{evaluate as evaluate_model, EvalReport};
use affect_forest::model_io;
use affect_forest::tree::{MaxFeatures, TreeParams};

use crate::{EvaluateArgs, PredictArgs, TrainArgs};

/// Feature CSVs in `dir`, as (stem, path), sorted by stem so every run
/// visits sequences in the same order.
fn feature_files(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut files = Vec::new();
    let entries = fs::read_dir(dir)
        .with_context(|| format!("cannot read features directory {}", dir.display()))?;
    for entry in entries {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                files.push((stem.to_string(), path.clone()));
            }
        }
    }
    files.sort();
    if files.is_empty() {
        bail!("no sequences found in {}", dir.display());
    }
    Ok(files)
}

struct IngestTotals {
    sequences: usize,
    kept: usize,
    report: AlignReport,
    low_confidence: usize,
}

/// Parses and aligns every sequence, applying the optional confidence floor.
fn load_annotated_sequences(
    features_dir: &Path,
    annotations_dir: &Path,
    min_confidence: Option<f64>,
) -> Result<(Vec<Dataset>, IngestTotals)> {
    let mut datasets = Vec::new();
    let mut totals = IngestTotals {
        sequences: 0,
        kept: 0,
        report: AlignReport::default(),
        low_confidence: 0,
    };
    for (stem, feature_path) in feature_files(features_dir)? {
        let annotation_path = annotations_dir.join(format!("{stem}.txt"));
        if !annotation_path.exists() {
            bail!(
                "sequence {stem}: no annotation file {}",
                annotation_path.display()
            );
        }
        let frames = ingest::parse_openface_csv(&feature_path)
            .with_context(|| format!("sequence {stem}"))?;
        let labels = ingest::parse_annotations(&annotation_path)
            .with_context(|| format!("sequence {stem}"))?;
        let (mut dataset, report) = ingest::align(frames, labels, stem);
        if let Some(min) = min_confidence {
            totals.low_confidence += dataset.retain_min_confidence(min);
        }
        totals.sequences += 1;
        totals.kept += dataset.len();
        totals.report.length_discrepancy += report.length_discrepancy;
        totals.report.dropped_failed_detection += report.dropped_failed_detection;
        totals.report.dropped_invalid_label += report.dropped_invalid_label;
        totals.report.dropped_duplicate_frame += report.dropped_duplicate_frame;
        datasets.push(dataset);
    }
    Ok((datasets, totals))
}

fn describe_max_features(mf: MaxFeatures) -> String {
    match mf {
        MaxFeatures::All => "all".into(),
        MaxFeatures::Sqrt => "sqrt".into(),
        MaxFeatures::Third => "third".into(),
        MaxFeatures::Fixed(k) => k.to_string(),
    }
}

pub fn train(args: TrainArgs) -> Result<()> {
    let (datasets, totals) =
        load_annotated_sequences(&args.features, &args.annotations, args.min_confidence)?;

    let params = ForestParams {
        n_trees: args.trees,
        bootstrap: !args.no_bootstrap,
        tree: TreeParams {
            max_depth: args.max_depth,
            min_samples_leaf: args.min_leaf,
            max_features: args.max_features,
            ..TreeParams::default()
        },
        master_seed: args.seed,
    };

    let model = fit_multioutput(&datasets, &params).context("training failed")?;
    model_io::save_model(&model, &args.model)
        .with_context(|| format!("cannot write model to {}", args.model.display()))?;
    let size = fs::metadata(&args.model).map(|m| m.len()).unwrap_or(0);

    println!("sequences: {}", totals.sequences);
    println!("frames kept: {}", totals.kept);
    println!(
        "frames dropped: {} (failed detection: {}, invalid label: {}, duplicate frame: {}, low confidence: {})",
        totals.report.total_dropped() + totals.low_confidence,
        totals.report.dropped_failed_detection,
        totals.report.dropped_invalid_label,
        totals.report.dropped_duplicate_frame,
        totals.low_confidence,
    );
    println!("alignment discrepancies: {}", totals.report.length_discrepancy);
    println!("trees per forest: {}", params.n_trees);
    println!("max features: {}", describe_max_features(params.tree.max_features));
    println!(
        "max depth: {}",
        params.tree.max_depth.map_or("unlimited".into(), |d| d.to_string())
    );
    println!("min samples leaf: {}", params.tree.min_samples_leaf);
    println!("min samples split: {}", params.tree.min_samples_split);
    println!("bootstrap: {}", if params.bootstrap { "on" } else { "off" });
    println!("master seed: {}", args.seed);
    println!("model written: {} ({size} bytes)", args.model.display());
    Ok(())
}

pub fn predict(args: PredictArgs) -> Result<()> {
    let model = model_io::load_model(&args.model)
        .with_context(|| format!("cannot load model {}", args.model.display()))?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create output directory {}", args.out.display()))?;
    print_model_seeds(&model);

    for (stem, feature_path) in feature_files(&args.features)? {
        let frames = ingest::parse_openface_csv(&feature_path)
            .with_context(|| format!("sequence {stem}"))?;

        let mut rows = String::from("frame,valence,arousal\n");
        let mut dropped = String::new();
        let mut n_rows = 0usize;
        let mut n_dropped = 0usize;
        for frame in &frames {
            if !frame.success {
                writeln!(dropped, "frame={} reason=failed_detection", frame.frame_index)?;
                n_dropped += 1;
                continue;
            }
            if let Some(min) = args.min_confidence {
                if frame.confidence < min {
                    writeln!(
                        dropped,
                        "frame={} reason=low_confidence ({} < {min})",
                        frame.frame_index, frame.confidence
                    )?;
                    n_dropped += 1;
                    continue;
                }
            }
            let (valence, arousal) = model
                .predict(&frame.features)
                .with_context(|| format!("sequence {stem}, frame {}", frame.frame_index))?;
            writeln!(rows, "{},{valence},{arousal}", frame.frame_index)?;
            n_rows += 1;
        }

        let out_csv = args.out.join(format!("{stem}.csv"));
        fs::write(&out_csv, rows)
            .with_context(|| format!("cannot write {}", out_csv.display()))?;
        if n_dropped > 0 {
            let sidecar = args.out.join(format!("{stem}.dropped.txt"));
            fs::write(&sidecar, dropped)
                .with_context(|| format!("cannot write {}", sidecar.display()))?;
        }
        println!("{stem}: {n_rows} predictions, {n_dropped} frames dropped");
    }
    Ok(())
}

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    let model = model_io::load_model(&args.model)
        .with_context(|| format!("cannot load model {}", args.model.display()))?;
    let (datasets, totals) =
        load_annotated_sequences(&args.features, &args.annotations, args.min_confidence)?;

    let report = evaluate_model(&model, &datasets).context("evaluation failed")?;

    print_model_seeds(&model);
    println!(
        "frames evaluated: {} (dropped during ingest: {})",
        report.n_frames,
        totals.report.total_dropped() + totals.low_confidence,
    );
    print!("{}", render_table(&report));
    if let Some(out) = &args.out {
        fs::write(out, render_key_values(&report))
            .with_context(|| format!("cannot write report to {}", out.display()))?;
        println!("report written: {}", out.display());
    }
    Ok(())
}

fn print_model_seeds(model: &MultiOutputModel) {
    println!(
        "model seeds: valence={:#018x} arousal={:#018x}",
        model.valence().params().master_seed,
        model.arousal().params().master_seed,
    );
}

/// Fixed-width score row, one line per header and values.
fn render_table(report: &EvalReport) -> String {
    format!(
        "{:<12} {:<12} {:<12}\n{:<12.6} {:<12.6} {:<12.6}\n",
        "CCC-Valence",
        "CCC-Arousal",
        "Mean",
        report.ccc_valence,
        report.ccc_arousal,
        report.mean_ccc,
    )
}

/// Machine-readable form; values keep full round-trip precision.
fn render_key_values(report: &EvalReport) -> String {
    format!(
        "n_frames={}\nccc_valence={}\nccc_arousal={}\nmean_ccc={}\n",
        report.n_frames, report.ccc_valence, report.ccc_arousal, report.mean_ccc,
    )
}
