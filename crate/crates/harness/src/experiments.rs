//! Experiment resolution and the training runner.
//!
//! An experiment is a config file resolved into an [`ExperimentSpec`]:
//! dataset, model shape, training switches. [`run_train`] executes it and
//! leaves a self-describing run directory behind:
//!
//! ```text
//! out/
//!   manifest.json     resolved config + input hashes; replays the run
//!   metrics.csv       epoch,train_acc,test_acc,norm_activation,seconds
//!   checkpoint.ckpt   final model
//!   best.ckpt         best-validation model (only with a validation split)
//!   summary.json      final numbers for `report`
//! ```

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use actlearn::data::{EncodedSample, LabelCodec, NormPolicy};
use actlearn::inference::classify_batch;
use actlearn::layers::{Activation, Connectivity, LayerState, LocalPattern};
use actlearn::network::{
    save_checkpoint, train_unsupervised, train_with_feedback, BlockLayout, FeedbackConfig,
    TrainConfig, TrainMode,
};
use actlearn::numerics::{Mat, SeededRng};
use actlearn::Model32;
use anyhow::{bail, Context, Result};
use serde::Serialize;

use crate::config::Config;
use crate::datasets::{DatasetSpec, LoadedData};

/// Model shape, resolved from config keys under `model.`.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    /// Layer count; every layer is input-width (square).
    pub layers: usize,
    pub activation: Activation,
    pub init_sigma: f64,
    /// Locally connected instead of fully connected (image-shaped layers).
    pub local: bool,
    /// Receptive field side for local layers.
    pub field: usize,
    /// Units per grid site for local layers.
    pub units_per_site: usize,
}

impl ModelSpec {
    pub fn resolve(cfg: &mut Config) -> Result<ModelSpec> {
        let act_name = cfg.str_or("model.activation", "std_abs");
        let Some(activation) = Activation::parse(&act_name) else {
            bail!(
                "model.activation: `{act_name}` is not one of \
                 identity, abs, std_abs, square_norm"
            );
        };
        let spec = ModelSpec {
            layers: cfg.usize_or("model.layers", 2)?,
            activation,
            init_sigma: cfg.f64_or("model.init_sigma", 0.01)?,
            local: cfg.bool_or("model.local", false)?,
            field: cfg.usize_or("model.field", 9)?,
            units_per_site: cfg.usize_or("model.units_per_site", 3)?,
        };
        if spec.layers == 0 {
            bail!("model.layers: at least one layer");
        }
        if spec.init_sigma <= 0.0 {
            bail!("model.init_sigma: must be positive");
        }
        Ok(spec)
    }

    /// Build the initial model for a layout. `grid` carries the image
    /// dimensions `(height, width, channels)` and is required for local
    /// connectivity. Seeded, so the same spec and seed always start from
    /// the same weights.
    pub fn build(
        &self,
        layout: &BlockLayout,
        grid: Option<(usize, usize, usize)>,
        seed: u64,
    ) -> Result<Model32> {
        let mut rng = SeededRng::new(seed);
        if !self.local {
            return Ok(Model32::fully_connected(
                layout.clone(),
                NormPolicy::PerBlock,
                self.layers,
                self.activation,
                self.init_sigma,
                &mut rng,
            )?);
        }
        // Locally connected stack on the image grid; the label block (if
        // any) is broadcast to every unit's receptive field.
        let Some((h, w, ch)) = grid else {
            bail!("model.local needs an image-shaped dataset");
        };
        let broadcast = layout.label_len();
        let mut layers = Vec::with_capacity(self.layers);
        let mut in_ch = ch;
        for _ in 0..self.layers {
            let pattern =
                LocalPattern::new(h, w, in_ch, self.units_per_site, self.field, broadcast)?;
            layers.push(LayerState::init(
                Connectivity::Local(pattern),
                self.activation,
                &mut rng,
                self.init_sigma,
            ));
            in_ch = self.units_per_site;
        }
        Ok(Model32::new(layout.clone(), NormPolicy::PerBlock, layers)?)
    }
}

/// Training switches, resolved from config keys under `train.` and `eval.`.
#[derive(Debug, Clone)]
pub struct TrainSpec {
    pub cfg: TrainConfig,
    pub feedback: Option<FeedbackConfig>,
    /// Stop after this many epochs without a validation improvement
    /// (0 = never; requires a validation split).
    pub patience: usize,
    /// Evaluate train accuracy on this many samples (0 = all).
    pub train_subset: usize,
    /// Compute train/test accuracy every N epochs (the final epoch is
    /// always evaluated; rows in between repeat the latest measurement).
    /// Validation for early stopping still runs every epoch.
    pub eval_every: usize,
}

impl TrainSpec {
    pub fn resolve(cfg: &mut Config, seed: u64) -> Result<TrainSpec> {
        let mode = match cfg.str_or("train.mode", "simultaneous").as_str() {
            "simultaneous" => TrainMode::Simultaneous,
            "layerwise" => TrainMode::Layerwise,
            other => bail!("train.mode: `{other}` is not `simultaneous` or `layerwise`"),
        };
        let train_cfg = TrainConfig {
            eta: cfg.f64_or("train.eta", 1e-3)?,
            epochs: cfg.usize_req("train.epochs")?,
            batch_size: cfg.usize_or("train.batch", 100)?,
            mode,
            eta_decay: cfg.f64_or("train.eta_decay", 0.0)?,
            shuffle: cfg.bool_or("train.shuffle", true)?,
            seed,
        };
        let feedback = if cfg.bool_or("train.feedback", false)? {
            Some(FeedbackConfig {
                lambda: cfg.f64_or("train.lambda", 0.9)?,
                gate_slope: cfg.f64_or("train.gate_slope", 5.0)?,
                gate_intercept: cfg.f64_or("train.gate_intercept", 1.0)?,
                start_threshold: cfg.f64_or("train.start_threshold", 0.0)?,
            })
        } else {
            None
        };
        let eval_every = cfg.usize_or("eval.every", 1)?;
        if eval_every == 0 {
            bail!("eval.every must be at least 1");
        }
        Ok(TrainSpec {
            cfg: train_cfg,
            feedback,
            patience: cfg.usize_or("train.patience", 0)?,
            train_subset: cfg.usize_or("eval.train_subset", 10000)?,
            eval_every,
        })
    }
}

/// A fully resolved experiment.
#[derive(Debug)]
pub struct ExperimentSpec {
    pub name: String,
    pub seed: u64,
    pub dataset: DatasetSpec,
    pub model: ModelSpec,
    pub train: TrainSpec,
}

impl ExperimentSpec {
    /// Resolve every key and reject leftovers. `seed_override` (a CLI flag)
    /// wins over the file's `seed`.
    pub fn resolve(cfg: &mut Config, seed_override: Option<u64>) -> Result<ExperimentSpec> {
        let name = cfg.str("experiment")?;
        let mut seed = cfg.u64_or("seed", 0)?;
        if let Some(s) = seed_override {
            seed = s;
        }
        let dataset = DatasetSpec::resolve(cfg)?;
        let model = ModelSpec::resolve(cfg)?;
        let train = TrainSpec::resolve(cfg, seed)?;
        if train.feedback.is_some() && !dataset.labeled {
            bail!("train.feedback needs a labeled dataset (dataset.labeled = true)");
        }
        if train.patience > 0 && dataset.validation == 0 {
            bail!("train.patience needs a validation split (dataset.validation > 0)");
        }
        cfg.finish()?;
        Ok(ExperimentSpec {
            name,
            seed,
            dataset,
            model,
            train,
        })
    }
}

/// Classification error rate over (at most `limit` of) the samples,
/// batched. `limit` 0 means all.
pub fn classification_error(
    model: &Model32,
    codec: &LabelCodec,
    samples: &[EncodedSample<f32>],
    limit: usize,
) -> Result<f64> {
    let n = if limit == 0 {
        samples.len()
    } else {
        limit.min(samples.len())
    };
    if n == 0 {
        bail!("classification_error: no samples");
    }
    let mut wrong = 0usize;
    for chunk in samples[..n].chunks(2000) {
        let rows: Vec<Vec<f32>> = chunk.iter().map(|s| s.data.clone()).collect();
        let mat = Mat::from_rows(&rows)?;
        let pred = classify_batch(model, codec, &mat)?;
        for (p, s) in pred.iter().zip(chunk) {
            if s.class != Some(*p as u8) {
                wrong += 1;
            }
        }
    }
    Ok(wrong as f64 / n as f64)
}

/// One row of `metrics.csv`.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub train_acc: f64,
    pub test_acc: f64,
    pub norm_activation: f64,
    pub seconds: f64,
}

pub const METRICS_HEADER: &str = "epoch,train_acc,test_acc,norm_activation,seconds";

fn format_row(row: &MetricsRow) -> String {
    format!(
        "{},{:.6},{:.6},{:.6},{:.3}",
        row.epoch, row.train_acc, row.test_acc, row.norm_activation, row.seconds
    )
}

/// What a finished run reports; serialized to `summary.json`.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct RunSummary {
    pub experiment: String,
    pub seed: u64,
    pub epochs_run: usize,
    pub stopped_early: bool,
    /// Final-model test error (best-validation model when a validation
    /// split exists).
    pub test_error: f64,
    pub best_val_error: Option<f64>,
    pub best_epoch: Option<usize>,
    pub final_norm_activation: f64,
    pub train_samples: usize,
    pub test_samples: usize,
    pub wall_seconds: f64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    experiment: &'a str,
    seed: u64,
    deterministic: bool,
    config: &'a BTreeMap<String, String>,
    inputs: &'a BTreeMap<String, String>,
}

/// Write the manifest that makes the run replayable: the full resolved
/// config and the hash of every input file.
pub fn write_manifest(
    out: &Path,
    command: &str,
    experiment: &str,
    seed: u64,
    deterministic: bool,
    config: &BTreeMap<String, String>,
    inputs: &BTreeMap<String, String>,
) -> Result<()> {
    let manifest = Manifest {
        command,
        experiment,
        seed,
        deterministic,
        config,
        inputs,
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(out.join("manifest.json"), text + "\n")
        .with_context(|| format!("writing manifest in {}", out.display()))?;
    Ok(())
}

/// Run a resolved experiment to completion. Writes the run directory
/// described in the module docs and returns the summary plus the model the
/// summary describes (the best-validation model when a split exists,
/// otherwise the final one).
pub fn run_train(
    spec: &ExperimentSpec,
    data: &LoadedData,
    out: &Path,
    deterministic: bool,
) -> Result<(RunSummary, Model32)> {
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    let mut model = spec
        .model
        .build(&data.layout, Some(spec.dataset.grid()), spec.seed)?;

    let mut csv = std::fs::File::create(out.join("metrics.csv"))?;
    writeln!(csv, "{METRICS_HEADER}")?;

    // Validation-based model selection needs labels; an unlabeled run with
    // a validation split simply trains on the reduced training set.
    let has_val = !data.validation.is_empty() && data.codec.is_some();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = None;
    let mut since_best = 0usize;
    let mut stopped_early = false;
    let mut rows: Vec<MetricsRow> = Vec::new();
    let started = Instant::now();
    let mut epoch_clock = Instant::now();
    // The observer can't propagate errors through the core trainer's bool
    // return, so failures land here and surface after.
    let mut observer_error: Option<anyhow::Error> = None;

    let mut last_train_acc = 0.0f64;
    let mut last_test_acc = 0.0f64;
    {
        let observe = |m: &Model32, stats: &actlearn::network::EpochStats| -> bool {
            let result = (|| -> Result<bool> {
                let epoch = rows.len() + 1;
                let eval_now =
                    epoch % spec.train.eval_every == 0 || epoch == spec.train.cfg.epochs;
                let (train_acc, test_acc) = match &data.codec {
                    Some(codec) if eval_now => {
                        let tr =
                            classification_error(m, codec, &data.train, spec.train.train_subset)?;
                        let te = classification_error(m, codec, &data.test, 0)?;
                        last_train_acc = 1.0 - tr;
                        last_test_acc = 1.0 - te;
                        (last_train_acc, last_test_acc)
                    }
                    Some(_) => (last_train_acc, last_test_acc),
                    None => (0.0, 0.0),
                };
                let seconds = if deterministic {
                    0.0
                } else {
                    epoch_clock.elapsed().as_secs_f64()
                };
                epoch_clock = Instant::now();
                let row = MetricsRow {
                    epoch,
                    train_acc,
                    test_acc,
                    norm_activation: stats.mean_normalized_activation,
                    seconds,
                };
                writeln!(csv, "{}", format_row(&row))?;
                csv.flush()?;
                eprintln!(
                    "[{}] epoch {epoch}: train_acc {:.4} test_acc {:.4} \
                     norm_act {:.4} ({:.1}s)",
                    spec.name, row.train_acc, row.test_acc, row.norm_activation, row.seconds
                );
                rows.push(row);

                if has_val {
                    let codec = data.codec.as_ref().expect("validation implies labels");
                    let val_err = classification_error(m, codec, &data.validation, 0)?;
                    if val_err < best_val {
                        best_val = val_err;
                        best_epoch = Some(epoch);
                        since_best = 0;
                        save_checkpoint(m, &out.join("best.ckpt"))?;
                    } else {
                        since_best += 1;
                        if spec.train.patience > 0 && since_best >= spec.train.patience {
                            return Ok(false);
                        }
                    }
                }
                Ok(true)
            })();
            match result {
                Ok(keep_going) => {
                    if !keep_going {
                        stopped_early = true;
                    }
                    keep_going
                }
                Err(e) => {
                    observer_error = Some(e);
                    false
                }
            }
        };

        match &spec.train.feedback {
            None => {
                train_unsupervised(&mut model, &data.train, &spec.train.cfg, observe)?;
            }
            Some(fb) => {
                let codec = data
                    .codec
                    .as_ref()
                    .context("feedback training needs labels")?;
                train_with_feedback(&mut model, &data.train, codec, &spec.train.cfg, fb, observe)?;
            }
        }
    }
    if let Some(e) = observer_error {
        return Err(e.context("per-epoch evaluation failed"));
    }

    save_checkpoint(&model, &out.join("checkpoint.ckpt"))
        .context("saving final checkpoint")?;

    // With a validation split the reported model is the best-validation
    // one; reload it so the summary and the returned model agree.
    let reported = if has_val && best_epoch.is_some() {
        actlearn::network::load_checkpoint::<f32>(&out.join("best.ckpt"))?
    } else {
        model
    };
    let test_error = match &data.codec {
        Some(codec) => classification_error(&reported, codec, &data.test, 0)?,
        None => 0.0,
    };

    let summary = RunSummary {
        experiment: spec.name.clone(),
        seed: spec.seed,
        epochs_run: rows.len(),
        stopped_early,
        test_error,
        best_val_error: has_val.then_some(best_val),
        best_epoch,
        final_norm_activation: rows.last().map_or(0.0, |r| r.norm_activation),
        train_samples: data.train.len(),
        test_samples: data.test.len(),
        wall_seconds: if deterministic {
            0.0
        } else {
            started.elapsed().as_secs_f64()
        },
    };
    let text = serde_json::to_string_pretty(&summary)?;
    std::fs::write(out.join("summary.json"), text + "\n")?;
    Ok((summary, reported))
}
