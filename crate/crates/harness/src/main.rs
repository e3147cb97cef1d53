//! `actlearn` — train activation-maximization networks and poke at them.
//!
//! Every subcommand reads/writes plain artifacts (CSV, JSON, portable
//! pixmaps) so runs can be inspected and replayed without extra tooling.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use actlearn::data::LabelCodec;
use actlearn::inference::{
    anomaly_score, class_scores, classify, complete, generate, typicality_score, GenerateConfig,
};
use actlearn::network::load_checkpoint;
use actlearn::Model32;
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use actlearn_harness::config::Config;
use actlearn_harness::datasets::{self, DatasetKind, DatasetSpec, LoadedData};
use actlearn_harness::experiments::{
    classification_error, run_train, write_manifest, ExperimentSpec,
};
use actlearn_harness::features::{self, FeatureSelection};
use actlearn_harness::images;
use actlearn_harness::properties;
use actlearn_harness::report;

#[derive(Parser)]
#[command(
    name = "actlearn",
    version,
    about = "Networks trained by a local competitive rule; inference by activation maximization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
struct Common {
    /// Experiment config file (strict key = value).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default depends on the subcommand).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Model checkpoint to load.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Directory holding the dataset files.
    #[arg(long)]
    dataset_dir: Option<PathBuf>,
    /// Zero wall-clock columns so repeated runs are byte-identical.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model per a config file; writes metrics, checkpoints, and a
    /// manifest into the output directory.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a checkpoint on the test set, optionally corrupted.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Zero the bottom fraction of each test image.
        #[arg(long, default_value_t = 0.0)]
        mask_ratio: f64,
        /// Add one random horizontal and one vertical bar of this width.
        #[arg(long, default_value_t = 0)]
        line_width: usize,
    },
    /// Classify single test images, printing per-class activations.
    Classify {
        #[command(flatten)]
        common: Common,
        /// Test-set index of the image.
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Classify this many consecutive images starting at --index.
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Generate images of a class by activation ascent.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Class to condition on; omit to generate every class.
        #[arg(long)]
        class: Option<usize>,
        /// Images per class.
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        #[arg(long, default_value_t = 0.05)]
        step_size: f64,
        #[arg(long, default_value_t = 0.003)]
        l1_beta: f64,
        #[arg(long, default_value_t = 0.03)]
        noise_std: f64,
    },
    /// Complete masked test images: classify from the visible part, then
    /// infer the hidden pixels.
    Complete {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Fraction of bottom rows hidden before completion.
        #[arg(long, default_value_t = 0.5)]
        mask_ratio: f64,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        #[arg(long, default_value_t = 0.05)]
        step_size: f64,
        #[arg(long, default_value_t = 0.003)]
        l1_beta: f64,
        #[arg(long, default_value_t = 0.03)]
        noise_std: f64,
    },
    /// Anomaly/typicality scores for test samples.
    Score {
        #[command(flatten)]
        common: Common,
        /// Score this many test samples (0 = all).
        #[arg(long, default_value_t = 0)]
        count: usize,
        /// Flag samples whose activation falls below this threshold.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Input-gradient images of the most active units.
    Features {
        #[command(flatten)]
        common: Common,
        /// Layer to visualize (0-based).
        #[arg(long, default_value_t = 0)]
        layer: usize,
        /// How many units (most active first).
        #[arg(long, default_value_t = 36)]
        units: usize,
    },
    /// Run the five-property verification suite on synthetic data.
    #[command(name = "verify-properties")]
    VerifyProperties {
        #[command(flatten)]
        common: Common,
    },
    /// Merge run summaries under a directory into one CSV table.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common } => cmd_train(common),
        Command::Eval {
            common,
            mask_ratio,
            line_width,
        } => cmd_eval(common, mask_ratio, line_width),
        Command::Classify {
            common,
            index,
            count,
        } => cmd_classify(common, index, count),
        Command::Generate {
            common,
            class,
            count,
            steps,
            step_size,
            l1_beta,
            noise_std,
        } => cmd_generate(common, class, count, steps, step_size, l1_beta, noise_std),
        Command::Complete {
            common,
            index,
            count,
            mask_ratio,
            steps,
            step_size,
            l1_beta,
            noise_std,
        } => cmd_complete(
            common, index, count, mask_ratio, steps, step_size, l1_beta, noise_std,
        ),
        Command::Score {
            common,
            count,
            threshold,
        } => cmd_score(common, count, threshold),
        Command::Features {
            common,
            layer,
            units,
        } => cmd_features(common, layer, units),
        Command::VerifyProperties { common } => cmd_verify_properties(common),
        Command::Report { common } => cmd_report(common),
    }
}

/// Resolve the config file into an experiment, with CLI overrides applied.
fn resolve_experiment(common: &Common) -> Result<(ExperimentSpec, BTreeMap<String, String>)> {
    let Some(path) = &common.config else {
        bail!("--config is required for this subcommand");
    };
    let mut cfg = Config::from_file(path)?;
    if let Some(seed) = common.seed {
        cfg.set("seed", seed);
    }
    let resolved = cfg.resolved();
    let spec = ExperimentSpec::resolve(&mut cfg, common.seed)?;
    Ok((spec, resolved))
}

fn default_dataset_dir(kind: DatasetKind) -> PathBuf {
    match kind {
        DatasetKind::Mnist => PathBuf::from("data/mnist"),
        DatasetKind::Cifar10 => PathBuf::from("data/cifar10"),
    }
}

fn dataset_dir(common: &Common, kind: DatasetKind) -> PathBuf {
    common
        .dataset_dir
        .clone()
        .unwrap_or_else(|| default_dataset_dir(kind))
}

fn cmd_train(common: Common) -> Result<()> {
    let (spec, resolved) = resolve_experiment(&common)?;
    let dir = dataset_dir(&common, spec.dataset.kind);
    let out = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(&spec.name));
    std::fs::create_dir_all(&out)?;

    let mut inputs = datasets::content_hashes(&spec.dataset, &dir)?;
    if let Some(cfg_path) = &common.config {
        let bytes = std::fs::read(cfg_path)?;
        inputs.insert(
            format!("config:{}", cfg_path.display()),
            format!("{:x}", Sha256::digest(&bytes)),
        );
    }
    write_manifest(
        &out,
        "train",
        &spec.name,
        spec.seed,
        common.deterministic,
        &resolved,
        &inputs,
    )?;

    let data = datasets::load(&spec.dataset, &dir, spec.seed)?;
    eprintln!(
        "[{}] {} train / {} validation / {} test samples",
        spec.name,
        data.train.len(),
        data.validation.len(),
        data.test.len()
    );
    let (summary, _) = run_train(&spec, &data, &out, common.deterministic)?;
    println!(
        "{}: test error {:.2}% after {} epochs ({:.0}s){}",
        summary.experiment,
        100.0 * summary.test_error,
        summary.epochs_run,
        summary.wall_seconds,
        if summary.stopped_early {
            ", stopped early"
        } else {
            ""
        }
    );
    Ok(())
}

/// Load the model a subcommand operates on, plus the data it was meant
/// for. The codec is `None` for models trained without a label block.
fn load_model_and_data(common: &Common) -> Result<(Model32, LoadedData, Option<LabelCodec>)> {
    let Some(ckpt) = &common.checkpoint else {
        bail!("--checkpoint is required for this subcommand");
    };
    let model = load_checkpoint::<f32>(ckpt)
        .with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
    // Infer the dataset from the checkpoint's input width.
    let data_len = model.layout().data_len();
    let kind = match data_len {
        784 => DatasetKind::Mnist,
        3072 => DatasetKind::Cifar10,
        other => bail!("checkpoint data width {other} matches no known dataset"),
    };
    let labeled = model.layout().label_len() > 0;
    let spec = DatasetSpec {
        kind,
        labeled,
        classes: vec![],
        per_class: 0,
        train_limit: 0,
        validation: 0,
    };
    let dir = dataset_dir(common, kind);
    let data = datasets::load(&spec, &dir, common.seed.unwrap_or(0))?;
    Ok((model, data, spec.codec()))
}

/// Same, but for subcommands that cannot work without labels.
fn load_labeled(common: &Common) -> Result<(Model32, LoadedData, LabelCodec)> {
    let (model, data, codec) = load_model_and_data(common)?;
    let codec = codec.context("this subcommand needs a labeled model (label block present)")?;
    Ok((model, data, codec))
}

#[derive(Serialize)]
struct EvalOutput {
    checkpoint: String,
    samples: usize,
    mask_ratio: f64,
    line_width: usize,
    test_error: f64,
}

fn write_json_out(common: &Common, name: &str, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    println!("{text}");
    if let Some(out) = &common.out {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join(name), text + "\n")?;
    }
    Ok(())
}

fn cmd_eval(common: Common, mask_ratio: f64, line_width: usize) -> Result<()> {
    let (model, data, codec) = load_labeled(&common)?;
    let seed = common.seed.unwrap_or(0);
    let test = if mask_ratio > 0.0 || line_width > 0 {
        datasets::corrupted_test(&data, mask_ratio, line_width, seed)?
    } else {
        data.test.clone()
    };
    let err = classification_error(&model, &codec, &test, 0)?;
    let output = EvalOutput {
        checkpoint: common.checkpoint.as_ref().unwrap().display().to_string(),
        samples: test.len(),
        mask_ratio,
        line_width,
        test_error: err,
    };
    write_json_out(&common, "eval.json", &output)
}

#[derive(Serialize)]
struct ClassifyOutput {
    index: usize,
    true_label: Option<u8>,
    predicted: usize,
    activations: Vec<f64>,
}

fn cmd_classify(common: Common, index: usize, count: usize) -> Result<()> {
    let (model, data, codec) = load_labeled(&common)?;
    if index + count > data.test.len() {
        bail!(
            "indices {index}..{} exceed the test set ({} samples)",
            index + count,
            data.test.len()
        );
    }
    let mut outputs = Vec::with_capacity(count);
    for i in index..index + count {
        let sample = &data.test[i];
        let scores = class_scores(&model, &codec, &sample.data)?;
        let predicted = classify(&model, &codec, &sample.data)?;
        outputs.push(ClassifyOutput {
            index: i,
            true_label: sample.class,
            predicted,
            activations: scores,
        });
    }
    write_json_out(&common, "classify.json", &outputs)
}

#[derive(Serialize)]
struct GenerateOutput {
    class: usize,
    seed: u64,
    reclassified: usize,
    self_consistent: bool,
    image_pgm: Option<String>,
}

#[allow(clippy::too_many_arguments)]
fn cmd_generate(
    common: Common,
    class: Option<usize>,
    count: usize,
    steps: usize,
    step_size: f64,
    l1_beta: f64,
    noise_std: f64,
) -> Result<()> {
    let (model, data, codec) = load_labeled(&common)?;
    let shape = data.raw_test.shape;
    let classes: Vec<usize> = match class {
        Some(c) => vec![c],
        None => (0..codec.classes()).collect(),
    };
    let base_seed = common.seed.unwrap_or(0);
    let mut outputs = Vec::new();
    for &c in &classes {
        for k in 0..count {
            let seed = base_seed
                .wrapping_add(1_000_003u64.wrapping_mul(c as u64))
                .wrapping_add(k as u64);
            let cfg = GenerateConfig {
                steps,
                step_size,
                l1_beta,
                noise_std,
                seed,
            };
            let img = generate(&model, &codec, c, &cfg)?;
            let reclassified = classify(&model, &codec, &img)?;
            let image_pgm = match &common.out {
                Some(out) => {
                    std::fs::create_dir_all(out)?;
                    let name = format!("generated_c{c}_{k}.pgm");
                    images::write_pgm(&out.join(&name), &img, shape)?;
                    images::write_csv(&out.join(format!("generated_c{c}_{k}.csv")), &img, shape)?;
                    Some(name)
                }
                None => None,
            };
            outputs.push(GenerateOutput {
                class: c,
                seed,
                reclassified,
                self_consistent: reclassified == c,
                image_pgm,
            });
        }
    }
    let consistent = outputs.iter().filter(|o| o.self_consistent).count();
    eprintln!(
        "self-consistent: {consistent}/{} ({:.0}%)",
        outputs.len(),
        100.0 * consistent as f64 / outputs.len() as f64
    );
    write_json_out(&common, "generate.json", &outputs)
}

#[derive(Serialize)]
struct CompleteOutput {
    index: usize,
    true_label: Option<u8>,
    predicted: usize,
    degenerate: bool,
    completed_pgm: Option<String>,
}

#[allow(clippy::too_many_arguments)]
fn cmd_complete(
    common: Common,
    index: usize,
    count: usize,
    mask_ratio: f64,
    steps: usize,
    step_size: f64,
    l1_beta: f64,
    noise_std: f64,
) -> Result<()> {
    let (model, data, codec) = load_labeled(&common)?;
    let shape = data.raw_test.shape;
    if index + count > data.raw_test.len() {
        bail!("indices exceed the test set");
    }
    let hidden_rows = (mask_ratio * shape.height as f64).round() as usize;
    let first_hidden = (shape.height - hidden_rows) * shape.width * shape.channels;
    let mut outputs = Vec::new();
    for i in index..index + count {
        let raw = data.raw_test.get(i);
        // The visible part keeps its raw pixels; `complete` renormalizes.
        let visible: Vec<f32> = raw.pixels.clone();
        let known: Vec<bool> = (0..visible.len()).map(|p| p < first_hidden).collect();
        let cfg = GenerateConfig {
            steps,
            step_size,
            l1_beta,
            noise_std,
            seed: common.seed.unwrap_or(0).wrapping_add(i as u64),
        };
        let res = complete(&model, &codec, &visible, &known, &cfg)?;
        let completed_pgm = match &common.out {
            Some(out) => {
                std::fs::create_dir_all(out)?;
                let name = format!("completed_{i}.pgm");
                images::write_pgm(&out.join(&name), &res.data, shape)?;
                images::write_pgm(
                    &out.join(format!("masked_{i}.pgm")),
                    &visible
                        .iter()
                        .enumerate()
                        .map(|(p, &v)| if known[p] { v } else { 0.0 })
                        .collect::<Vec<f32>>(),
                    shape,
                )?;
                Some(name)
            }
            None => None,
        };
        outputs.push(CompleteOutput {
            index: i,
            true_label: raw.label,
            predicted: res.class,
            degenerate: res.degenerate,
            completed_pgm,
        });
    }
    write_json_out(&common, "complete.json", &outputs)
}

#[derive(Serialize)]
struct ScoreRow {
    index: usize,
    label: Option<u8>,
    activation: f64,
    typicality: f64,
    anomalous: Option<bool>,
}

fn cmd_score(common: Common, count: usize, threshold: Option<f64>) -> Result<()> {
    let (model, data, _codec) = load_model_and_data(&common)?;
    let n = if count == 0 {
        data.test.len()
    } else {
        count.min(data.test.len())
    };
    let mut rows = Vec::with_capacity(n);
    for (i, sample) in data.test[..n].iter().enumerate() {
        let act = anomaly_score(&model, sample)?;
        rows.push(ScoreRow {
            index: i,
            label: sample.class,
            activation: act,
            typicality: typicality_score(&model, sample)?,
            anomalous: threshold.map(|t| actlearn::inference::is_anomalous(act, t)),
        });
    }
    write_json_out(&common, "scores.json", &rows)
}

fn cmd_features(common: Common, layer: usize, units: usize) -> Result<()> {
    let (model, data, _codec) = load_model_and_data(&common)?;
    let out = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs/features"));
    std::fs::create_dir_all(&out)?;
    let selection = FeatureSelection {
        layer,
        units,
        probe_samples: 2000,
    };
    let report = features::visualize(&model, &data, &selection, &out)?;
    let text = serde_json::to_string_pretty(&report)?;
    println!("{text}");
    std::fs::write(out.join("features.json"), text + "\n")?;
    Ok(())
}

fn cmd_verify_properties(common: Common) -> Result<()> {
    let seed = common.seed.unwrap_or(7);
    let report = properties::run_property_suite(seed)?;
    let text = serde_json::to_string_pretty(&report)?;
    println!("{text}");
    if let Some(out) = &common.out {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("properties.json"), text + "\n")?;
    }
    if report.all_pass() {
        Ok(())
    } else {
        bail!("one or more properties failed");
    }
}

fn cmd_report(common: Common) -> Result<()> {
    let root = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs"));
    let table = report::merge_runs(Path::new(&root))?;
    print!("{table}");
    Ok(())
}
