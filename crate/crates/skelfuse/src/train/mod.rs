//! Training loop, best-epoch selection, and the experiment driver.
//!
//! `train_model` runs a single seeded training: one-cycle learning rate,
//! Adam with decoupled weight decay, validation after every epoch, and test
//! evaluation with the best epoch's weights. A diverged run (non-finite
//! loss or logits) produces a `RunResult` with `status: failed` instead of an
//! error so
//! an experiment sweep keeps going. `run_experiment` trains an LR grid times
//! a repeat count, persists every run to its own directory, and aggregates
//! box statistics over the completed runs.

mod schedule;

pub use schedule::one_cycle_lr;

use std::path::{Path, PathBuf};

use ndarray::{Array4, ArrayD};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clip::Split;
use crate::encode::{encode_clip, EncodedImage, FusionConfig, FusionMode};
use crate::error::{Error, Result};
use crate::handprep::{process_clip, HandSelectConfig};
use crate::ingest::{load_clip, DatasetManifest};
use crate::model::{
    build_backbone, load_checkpoint, save_checkpoint, BackboneConfig, BackboneFamily, Classifier,
};
use crate::nn::{softmax_cross_entropy, Adam};
use crate::report::{boxplot_stats, confusion_matrix, mean_class_accuracy, top1_accuracy, BoxStats};

/// LR grid spanning the sweep range used for the published experiments.
pub const DEFAULT_LR_GRID: [f64; 6] = [5e-3, 2.5e-3, 1e-3, 5e-4, 1e-4, 5e-5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BestEpochMetric {
    ValMacc,
    ValTop1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub max_lr: f64,
    pub warmup_frac: f64,
    pub start_div: f64,
    pub final_div: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub best_epoch_metric: BestEpochMetric,
    pub fusion: FusionConfig,
    pub backbone: BackboneConfig,
}

impl TrainConfig {
    /// Defaults: 100 epochs, one-cycle with 10% warmup, Adam(0.9, 0.999),
    /// weight decay 0.01, batch 16. Optimizer extras beyond the epochs,
    /// scheduler, and LR range are exposed defaults, not published values.
    pub fn new(backbone: BackboneConfig, fusion: FusionConfig) -> Self {
        Self {
            epochs: 100,
            max_lr: 1e-3,
            warmup_frac: 0.1,
            start_div: 25.0,
            final_div: 1e4,
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: 0.01,
            batch_size: 16,
            seed: 0,
            best_epoch_metric: BestEpochMetric::ValMacc,
            fusion,
            backbone,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.max_lr > 0.0) || !self.max_lr.is_finite() {
            return Err(Error::Config(format!(
                "max_lr must be positive, got {}",
                self.max_lr
            )));
        }
        if !(self.warmup_frac > 0.0 && self.warmup_frac < 1.0) {
            return Err(Error::Config(format!(
                "warmup_frac must be in (0, 1), got {}",
                self.warmup_frac
            )));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {v}")));
            }
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be >= 0".into()));
        }
        self.fusion.validate()?;
        self.backbone.validate()?;
        if self.fusion.mode.image_count() != self.backbone.channel_split.image_count() {
            return Err(Error::Config(format!(
                "fusion mode {} produces {} images but the backbone channel split expects {}",
                self.fusion.mode,
                self.fusion.mode.image_count(),
                self.backbone.channel_split.image_count()
            )));
        }
        if self.fusion.input_hw != self.backbone.input_hw {
            return Err(Error::Config(format!(
                "fusion renders {:?} images but the backbone expects {:?}",
                self.fusion.input_hw, self.backbone.input_hw
            )));
        }
        if self.fusion.value_range != self.backbone.value_range {
            return Err(Error::Config(format!(
                "fusion value range {:?} differs from backbone value range {:?}",
                self.fusion.value_range, self.backbone.value_range
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_macc: f64,
    pub val_top1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub status: RunStatus,
    pub seed: u64,
    pub per_epoch: Vec<EpochMetrics>,
    /// Index into `per_epoch` of the epoch whose weights were tested.
    pub best_epoch: Option<usize>,
    pub test_macc: Option<f64>,
    pub test_top1: Option<f64>,
    pub confusion: Option<Vec<Vec<usize>>>,
    pub config_echo: TrainConfig,
}

/// One split of a dataset, already rendered to classifier inputs.
pub struct EncodedSplit {
    pub inputs: Vec<Vec<EncodedImage>>,
    pub labels: Vec<usize>,
}

pub struct EncodedDataset {
    pub train: EncodedSplit,
    pub val: EncodedSplit,
    pub test: EncodedSplit,
    pub num_classes: usize,
    /// Body coordinate dimensionality of the source layout (2 or 3).
    pub body_dims: usize,
}

fn encode_split(
    manifest: &DatasetManifest,
    fusion: &FusionConfig,
    split: Split,
) -> Result<EncodedSplit> {
    let ids = manifest.clip_ids_for_split(split);
    if ids.is_empty() {
        return Err(Error::Validation(format!(
            "split {split:?} has no clips in the manifest"
        )));
    }
    let layout = manifest.layout();
    let hand_cfg = HandSelectConfig::default();
    let mut inputs = Vec::with_capacity(ids.len());
    let mut labels = Vec::with_capacity(ids.len());
    for id in ids {
        let mut clip = load_clip(manifest, id)?;
        if fusion.mode.needs_hands() && clip.hand_frames.is_none() {
            let intrinsics = manifest.intrinsics_for(&clip.view_id);
            process_clip(&mut clip, &layout, intrinsics.as_ref(), &hand_cfg)?;
        }
        labels.push(clip.label);
        inputs.push(encode_clip(&clip, &layout, fusion)?);
    }
    Ok(EncodedSplit { inputs, labels })
}

/// Load, hand-prep (when the fusion mode uses hands), and encode all three
/// splits once. The result is read-only and can be shared across runs.
pub fn prepare_dataset(manifest: &DatasetManifest, fusion: &FusionConfig) -> Result<EncodedDataset> {
    fusion.validate()?;
    Ok(EncodedDataset {
        train: encode_split(manifest, fusion, Split::Train)?,
        val: encode_split(manifest, fusion, Split::Val)?,
        test: encode_split(manifest, fusion, Split::Test)?,
        num_classes: manifest.num_classes,
        body_dims: manifest.layout().dims,
    })
}

/// Stack the clips at `idxs` into one batched array per image position.
fn gather(split: &EncodedSplit, idxs: &[usize]) -> Vec<Array4<f64>> {
    let n_images = split.inputs[idxs[0]].len();
    (0..n_images)
        .map(|pos| {
            let (c, h, w) = split.inputs[idxs[0]][pos].data.dim();
            let mut arr = Array4::zeros((idxs.len(), c, h, w));
            for (bi, &i) in idxs.iter().enumerate() {
                arr.index_axis_mut(ndarray::Axis(0), bi)
                    .assign(&split.inputs[i][pos].data);
            }
            arr
        })
        .collect()
}

fn argmax(row: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Predicted class per clip of a split, evaluated in batches.
pub fn evaluate_split(
    model: &mut Classifier,
    split: &EncodedSplit,
    batch_size: usize,
) -> Result<Vec<usize>> {
    let idxs: Vec<usize> = (0..split.inputs.len()).collect();
    let mut preds = Vec::with_capacity(idxs.len());
    for chunk in idxs.chunks(batch_size.max(1)) {
        let logits = model.forward_arrays(&gather(split, chunk))?;
        for row in logits.rows() {
            preds.push(argmax(row));
        }
    }
    Ok(preds)
}

fn metric_of(m: &EpochMetrics, which: BestEpochMetric) -> f64 {
    match which {
        BestEpochMetric::ValMacc => m.val_macc,
        BestEpochMetric::ValTop1 => m.val_top1,
    }
}

/// Earliest epoch index maximizing the chosen metric.
pub(crate) fn pick_best(per_epoch: &[EpochMetrics], which: BestEpochMetric) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, m) in per_epoch.iter().enumerate() {
        if best.is_none() || metric_of(m, which) > metric_of(&per_epoch[best.unwrap()], which) {
            best = Some(i);
        }
    }
    best
}

fn snapshot(model: &mut Classifier) -> Vec<ArrayD<f64>> {
    model.params().iter().map(|p| p.value.clone()).collect()
}

fn restore(model: &mut Classifier, weights: &[ArrayD<f64>]) {
    for (p, w) in model.params().into_iter().zip(weights) {
        p.value = w.clone();
    }
}

fn failed_result(cfg: &TrainConfig, per_epoch: Vec<EpochMetrics>) -> RunResult {
    RunResult {
        status: RunStatus::Failed,
        seed: cfg.seed,
        per_epoch,
        best_epoch: None,
        test_macc: None,
        test_top1: None,
        confusion: None,
        config_echo: cfg.clone(),
    }
}

fn train_prepared(
    cfg: &TrainConfig,
    data: &EncodedDataset,
) -> Result<(RunResult, Option<Classifier>)> {
    cfg.validate()?;
    if cfg.backbone.num_classes != data.num_classes {
        return Err(Error::Config(format!(
            "backbone is configured for {} classes, dataset has {}",
            cfg.backbone.num_classes, data.num_classes
        )));
    }
    let mut model = build_backbone(&cfg.backbone, cfg.seed)?;
    let mut adam = Adam::new(cfg.beta1, cfg.beta2, cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let n_train = data.train.inputs.len();
    let steps_per_epoch = n_train.div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * steps_per_epoch;
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut gstep = 0usize;
    let mut per_epoch: Vec<EpochMetrics> = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, Vec<ArrayD<f64>>)> = None;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let inputs = gather(&data.train, chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| data.train.labels[i]).collect();
            let logits = model.forward_arrays(&inputs)?;
            let (loss, dlogits, _) = softmax_cross_entropy(&logits, &labels);
            // The cross-entropy clamps probabilities away from zero, so a
            // diverged model shows up as non-finite logits, not loss.
            if !loss.is_finite() || logits.iter().any(|v| !v.is_finite()) {
                return Ok((failed_result(cfg, per_epoch), None));
            }
            model.zero_grad();
            model.backward(&dlogits);
            let lr = one_cycle_lr(
                gstep,
                total_steps,
                cfg.max_lr,
                cfg.warmup_frac,
                cfg.start_div,
                cfg.final_div,
            )?;
            adam.step(&mut model.params(), lr);
            gstep += 1;
            loss_sum += loss * chunk.len() as f64;
        }
        let train_loss = loss_sum / n_train as f64;

        let val_preds = evaluate_split(&mut model, &data.val, cfg.batch_size)?;
        let val_macc = mean_class_accuracy(&val_preds, &data.val.labels, data.num_classes)?;
        let val_top1 = top1_accuracy(&val_preds, &data.val.labels)?;
        per_epoch.push(EpochMetrics {
            epoch,
            train_loss,
            val_macc,
            val_top1,
        });

        let current = metric_of(per_epoch.last().unwrap(), cfg.best_epoch_metric);
        let improved = match &best {
            None => true,
            Some((bi, _)) => current > metric_of(&per_epoch[*bi], cfg.best_epoch_metric),
        };
        if improved {
            best = Some((epoch, snapshot(&mut model)));
        }
    }

    let (best_epoch, weights) = best.expect("at least one epoch ran");
    debug_assert_eq!(
        Some(best_epoch),
        pick_best(&per_epoch, cfg.best_epoch_metric)
    );
    restore(&mut model, &weights);
    let test_preds = evaluate_split(&mut model, &data.test, cfg.batch_size)?;
    let test_macc = mean_class_accuracy(&test_preds, &data.test.labels, data.num_classes)?;
    let test_top1 = top1_accuracy(&test_preds, &data.test.labels)?;
    let confusion = confusion_matrix(&test_preds, &data.test.labels, data.num_classes)?;

    let result = RunResult {
        status: RunStatus::Completed,
        seed: cfg.seed,
        per_epoch,
        best_epoch: Some(best_epoch),
        test_macc: Some(test_macc),
        test_top1: Some(test_top1),
        confusion: Some(confusion),
        config_echo: cfg.clone(),
    };
    Ok((result, Some(model)))
}

/// Train once. Deterministic for a fixed config and seed.
pub fn train_model(cfg: &TrainConfig, manifest: &DatasetManifest) -> Result<RunResult> {
    let data = prepare_dataset(manifest, &cfg.fusion)?;
    Ok(train_prepared(cfg, &data)?.0)
}

/// Write a run directory: config echo, line-delimited per-epoch metrics,
/// best-weights checkpoint (completed runs), and the result document.
pub fn persist_run(
    run_dir: &Path,
    result: &RunResult,
    model: Option<&mut Classifier>,
) -> Result<()> {
    std::fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    let config_path = run_dir.join("config.json");
    let config_text = serde_json::to_string_pretty(&result.config_echo)
        .map_err(|e| Error::io(&config_path, std::io::Error::other(e)))?;
    std::fs::write(&config_path, config_text).map_err(|e| Error::io(&config_path, e))?;

    let epochs_path = run_dir.join("epochs.jsonl");
    let mut lines = String::new();
    for m in &result.per_epoch {
        lines.push_str(&serde_json::to_string(m).expect("metrics serialize"));
        lines.push('\n');
    }
    std::fs::write(&epochs_path, lines).map_err(|e| Error::io(&epochs_path, e))?;

    if let Some(model) = model {
        save_checkpoint(model, &run_dir.join("best.ckpt.json"))?;
    }

    let result_path = run_dir.join("result.json");
    let result_text = serde_json::to_string_pretty(result)
        .map_err(|e| Error::io(&result_path, std::io::Error::other(e)))?;
    std::fs::write(&result_path, result_text).map_err(|e| Error::io(&result_path, e))?;
    Ok(())
}

/// Train and persist into `run_dir`.
pub fn train_into_dir(
    cfg: &TrainConfig,
    manifest: &DatasetManifest,
    run_dir: &Path,
) -> Result<RunResult> {
    let data = prepare_dataset(manifest, &cfg.fusion)?;
    let (result, mut model) = train_prepared(cfg, &data)?;
    persist_run(run_dir, &result, model.as_mut())?;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub max_lrs: Vec<f64>,
    pub repeats: usize,
    pub base: TrainConfig,
}

impl ExperimentGrid {
    /// The default grid: six LRs, three repeats each.
    pub fn new(base: TrainConfig) -> Self {
        Self {
            max_lrs: DEFAULT_LR_GRID.to_vec(),
            repeats: 3,
            base,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_lrs.len() < 5 {
            return Err(Error::Config(format!(
                "experiment grid needs at least 5 learning rates, got {}",
                self.max_lrs.len()
            )));
        }
        if self.repeats < 3 {
            return Err(Error::Config(format!(
                "experiment grid needs at least 3 repeats, got {}",
                self.repeats
            )));
        }
        if self.max_lrs.iter().any(|lr| !(lr.is_finite() && *lr > 0.0)) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        self.base.validate()
    }
}

/// What one box in a report aggregates over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupKey {
    pub fusion: FusionMode,
    pub family: BackboneFamily,
    pub body_dims: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub group: GroupKey,
    pub run_dirs: Vec<String>,
    pub runs: Vec<RunResult>,
    pub failures: usize,
    pub box_test_macc: Option<BoxStats>,
    pub box_test_top1: Option<BoxStats>,
}

fn derive_seed(base: u64, lr_index: usize, repeat: usize) -> u64 {
    let mut z = base ^ 0x9E37_79B9_7F4A_7C15u64
        .wrapping_mul(1 + lr_index as u64 * 1_000_003 + repeat as u64);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn run_dir_name(lr_index: usize, repeat: usize) -> String {
    format!("run_lr{lr_index}_rep{repeat}")
}

/// Load a previously persisted run if its config matches `cfg`.
fn reusable_result(run_dir: &Path, cfg: &TrainConfig) -> Option<RunResult> {
    let text = std::fs::read_to_string(run_dir.join("result.json")).ok()?;
    let result: RunResult = serde_json::from_str(&text).ok()?;
    (result.config_echo == *cfg).then_some(result)
}

fn run_one(
    cfg: &TrainConfig,
    data: &EncodedDataset,
    run_dir: &Path,
) -> Result<RunResult> {
    if let Some(prev) = reusable_result(run_dir, cfg) {
        return Ok(prev);
    }
    let (result, mut model) = train_prepared(cfg, data)?;
    persist_run(run_dir, &result, model.as_mut())?;
    Ok(result)
}

/// Train `|max_lrs| * repeats` runs with distinct derived seeds, persisting
/// each into `out_dir/run_lr{i}_rep{j}`. Runs already on disk with a
/// matching config are reused, so an interrupted sweep can resume. With
/// `jobs > 1` independent runs execute concurrently.
pub fn run_experiment(
    grid: &ExperimentGrid,
    manifest: &DatasetManifest,
    out_dir: &Path,
    jobs: usize,
) -> Result<ExperimentSummary> {
    grid.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let data = prepare_dataset(manifest, &grid.base.fusion)?;

    let mut planned: Vec<(TrainConfig, PathBuf, String)> = Vec::new();
    for (li, &lr) in grid.max_lrs.iter().enumerate() {
        for rep in 0..grid.repeats {
            let mut cfg = grid.base.clone();
            cfg.max_lr = lr;
            cfg.seed = derive_seed(grid.base.seed, li, rep);
            let name = run_dir_name(li, rep);
            planned.push((cfg, out_dir.join(&name), name));
        }
    }

    let results: Vec<Result<RunResult>> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| {
            use rayon::prelude::*;
            planned
                .par_iter()
                .map(|(cfg, dir, _)| run_one(cfg, &data, dir))
                .collect()
        })
    } else {
        planned
            .iter()
            .map(|(cfg, dir, _)| run_one(cfg, &data, dir))
            .collect()
    };

    let mut runs = Vec::with_capacity(results.len());
    for r in results {
        runs.push(r?);
    }

    let failures = runs
        .iter()
        .filter(|r| r.status == RunStatus::Failed)
        .count();
    let maccs: Vec<f64> = runs.iter().filter_map(|r| r.test_macc).collect();
    let top1s: Vec<f64> = runs.iter().filter_map(|r| r.test_top1).collect();
    let summary = ExperimentSummary {
        group: GroupKey {
            fusion: grid.base.fusion.mode,
            family: grid.base.backbone.family,
            body_dims: data.body_dims,
        },
        run_dirs: planned.into_iter().map(|(_, _, name)| name).collect(),
        runs,
        failures,
        box_test_macc: (!maccs.is_empty())
            .then(|| boxplot_stats(&maccs))
            .transpose()?,
        box_test_top1: (!top1s.is_empty())
            .then(|| boxplot_stats(&top1s))
            .transpose()?,
    };

    let index_path = out_dir.join("experiment.json");
    let text = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::io(&index_path, std::io::Error::other(e)))?;
    std::fs::write(&index_path, text).map_err(|e| Error::io(&index_path, e))?;
    Ok(summary)
}

/// Re-evaluate a persisted run's best checkpoint on the test split.
pub fn reevaluate_run(run_dir: &Path, data: &EncodedDataset) -> Result<(f64, f64)> {
    let mut model = load_checkpoint(&run_dir.join("best.ckpt.json"))?;
    let preds = evaluate_split(&mut model, &data.test, 16)?;
    Ok((
        mean_class_accuracy(&preds, &data.test.labels, data.num_classes)?,
        top1_accuracy(&preds, &data.test.labels)?,
    ))
}
