//! Batch command surface over the library.
//!
//! Subcommands: synth | hands | encode-preview | train | experiment | report.
//! Train and experiment read one JSON config file plus any number of
//! `--set dotted.key=value` overrides; unknown keys are rejected and values
//! are type-checked when the merged document is deserialized. `SKELFUSE_OUT`
//! sets the default output root. Exit codes: 0 success, 1 infrastructure
//! error (I/O), 2 user or config error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::encode::{encode_clip, save_png, FusionConfig, FusionMode, ValueRange};
use crate::error::{Error, Result};
use crate::handprep::{process_clip, HandPrepStats, HandSelectConfig};
use crate::ingest::synth::{generate_synthetic_dataset, SynthSpec};
use crate::ingest::{load_clip, load_manifest, write_processed_hands, DatasetManifest};
use crate::model::{BackboneConfig, BackboneFamily};
use crate::report::render_report;
use crate::train::{
    run_experiment, train_into_dir, ExperimentGrid, ExperimentSummary, RunStatus, TrainConfig,
};

const OUT_ENV: &str = "SKELFUSE_OUT";

#[derive(Parser)]
#[command(name = "skelfuse", version, about = "Skeleton-fusion action recognition pipeline")]
struct Cli {
    /// Print more progress detail.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic labeled dataset with hand-dependent classes.
    Synth {
        /// Number of action classes.
        #[arg(long)]
        classes: usize,
        /// Clips per class.
        #[arg(long)]
        clips: usize,
        /// Frames per clip.
        #[arg(long)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Class pairs distinguishable only by hands; defaults to classes/4.
        #[arg(long)]
        hand_pairs: Option<usize>,
        /// Output dataset directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Post-process raw hand detections for every clip of a dataset.
    Hands {
        /// Path to manifest.json.
        #[arg(long)]
        manifest: PathBuf,
        /// Wrist-distance filter threshold, pixels.
        #[arg(long)]
        threshold: Option<f64>,
        /// Detector crop window side length, pixels.
        #[arg(long)]
        crop_size: Option<u32>,
    },

    /// Render one clip's fusion images and band metadata for inspection.
    EncodePreview {
        /// Path to manifest.json.
        #[arg(long)]
        manifest: PathBuf,
        /// Clip id to render.
        #[arg(long)]
        clip: String,
        #[arg(long, default_value = "body_only")]
        mode: FusionMode,
        /// Hand upscale factor for scaled_stack.
        #[arg(long, default_value_t = 4)]
        scale: u32,
        /// Square output size in pixels.
        #[arg(long, default_value_t = 224)]
        size: usize,
        #[arg(long, default_value = "byte")]
        range: ValueRange,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Train one model and persist the run directory.
    Train {
        /// Path to manifest.json.
        #[arg(long)]
        manifest: PathBuf,
        /// JSON training config; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override one config value, e.g. --set fusion.mode=scaled_stack.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        /// Run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Run a learning-rate grid with repeats, then render its report.
    Experiment {
        /// Path to manifest.json.
        #[arg(long)]
        manifest: PathBuf,
        /// JSON experiment config; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override one config value, e.g. --set base.epochs=3.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        /// Experiment output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Concurrent trainings.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },

    /// Render box plots and the best-results table from experiment dirs.
    Report {
        /// One or more experiment directories (containing experiment.json).
        #[arg(long = "experiment", value_name = "DIR", required = true)]
        experiments: Vec<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// `--out` if given, else `$SKELFUSE_OUT/<name>`, else `./<name>`.
fn resolve_out(explicit: Option<PathBuf>, name: &str) -> PathBuf {
    match explicit {
        Some(p) => p,
        None => match std::env::var_os(OUT_ENV) {
            Some(root) => PathBuf::from(root).join(name),
            None => PathBuf::from(name),
        },
    }
}

/// Reject any input key that does not exist in the schema document.
fn check_known(input: &Value, schema: &Value, path: &str) -> Result<()> {
    match (input, schema) {
        (Value::Object(inp), Value::Object(sch)) => {
            for (key, val) in inp {
                let here = if path.is_empty() {
                    key.clone()
                } else {
                    format!("{path}.{key}")
                };
                match sch.get(key) {
                    None => return Err(Error::Config(format!("unknown config key '{here}'"))),
                    Some(sval) => check_known(val, sval, &here)?,
                }
            }
            Ok(())
        }
        (Value::Array(inp), Value::Array(sch)) => {
            for (i, (val, sval)) in inp.iter().zip(sch).enumerate() {
                check_known(val, sval, &format!("{path}.{i}"))?;
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

fn deep_merge(dst: &mut Value, src: Value) {
    match (dst, src) {
        (Value::Object(d), Value::Object(s)) => {
            for (k, v) in s {
                match d.get_mut(&k) {
                    Some(slot) => deep_merge(slot, v),
                    None => {
                        d.insert(k, v);
                    }
                }
            }
        }
        (dst, src) => *dst = src,
    }
}

/// Values parse as JSON when they can; bare words become strings, so
/// `--set backbone.family=windowed_attention` needs no quoting.
fn parse_raw(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn descend<'a>(cur: &'a mut Value, part: &str, trail: &str) -> Result<&'a mut Value> {
    match cur {
        Value::Object(map) => map
            .get_mut(part)
            .ok_or_else(|| Error::Config(format!("unknown config key '{trail}'"))),
        Value::Array(items) => {
            let idx: usize = part
                .parse()
                .map_err(|_| Error::Config(format!("'{part}' is not an array index")))?;
            let len = items.len();
            items
                .get_mut(idx)
                .ok_or_else(|| Error::Config(format!("index {idx} out of range (len {len})")))
        }
        _ => Err(Error::Config(format!(
            "cannot descend into scalar at '{trail}'"
        ))),
    }
}

fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment.split_once('=').ok_or_else(|| {
        Error::Config(format!("override '{assignment}' is not of the form KEY=VALUE"))
    })?;
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = root;
    for (i, part) in parts.iter().enumerate() {
        cur = descend(cur, part, &parts[..=i].join("."))?;
    }
    *cur = parse_raw(raw);
    Ok(())
}

/// Defaults, then the config file, then `--set` overrides; the result is
/// deserialized against the schema so type errors surface here.
fn merged_config<T: Serialize + DeserializeOwned>(
    default: &T,
    config_path: Option<&Path>,
    sets: &[String],
) -> Result<T> {
    let mut doc = serde_json::to_value(default).expect("config serializes");
    if let Some(path) = config_path {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        check_known(&file, &doc, "")?;
        deep_merge(&mut doc, file);
    }
    for assignment in sets {
        apply_override(&mut doc, assignment)?;
    }
    serde_json::from_value(doc).map_err(|e| Error::Config(format!("config: {e}")))
}

fn default_train_config(manifest: &DatasetManifest) -> Result<TrainConfig> {
    let fusion = FusionConfig::default();
    let backbone = BackboneConfig::full(
        BackboneFamily::ConvResidual,
        manifest.num_classes,
        fusion.mode.image_count(),
    )?;
    Ok(TrainConfig::new(backbone, fusion))
}

fn cmd_synth(
    classes: usize,
    clips: usize,
    frames: usize,
    seed: u64,
    hand_pairs: Option<usize>,
    out: Option<PathBuf>,
) -> Result<()> {
    let out = resolve_out(out, "synth_data");
    let mut spec = SynthSpec::new(classes, clips, frames, seed);
    if hand_pairs.is_some() {
        spec.hand_pairs = hand_pairs;
    }
    generate_synthetic_dataset(&spec, &out)?;
    println!("{}", out.join("manifest.json").display());
    Ok(())
}

fn cmd_hands(
    manifest_path: &Path,
    threshold: Option<f64>,
    crop_size: Option<u32>,
    verbose: u8,
) -> Result<()> {
    let manifest = load_manifest(manifest_path)?;
    let layout = manifest.layout();
    let mut cfg = HandSelectConfig::default();
    if let Some(c) = crop_size {
        cfg.crop_size = c;
        cfg.wrist_dist_threshold = c as f64 / 2.0;
    }
    if let Some(t) = threshold {
        cfg.wrist_dist_threshold = t;
    }

    let mut totals = HandPrepStats::default();
    for entry in &manifest.clips {
        let mut clip = load_clip(&manifest, &entry.clip_id)?;
        let intrinsics = manifest.intrinsics_for(&clip.view_id);
        let stats = process_clip(&mut clip, &layout, intrinsics.as_ref(), &cfg)?;
        let frames = clip.hand_frames.as_ref().expect("processed");
        let mut out_path = manifest.hands_path(entry);
        out_path.set_extension("processed.jsonl");
        write_processed_hands(&out_path, frames)?;
        if verbose > 0 {
            println!(
                "{}: observed {} filled {} neutral {} discarded {}",
                entry.clip_id,
                stats.observed,
                stats.filled_from_past,
                stats.neutral,
                stats.discarded
            );
        }
        totals.observed += stats.observed;
        totals.filled_from_past += stats.filled_from_past;
        totals.neutral += stats.neutral;
        totals.discarded += stats.discarded;
    }
    println!(
        "{} clips: observed {} filled {} neutral {} discarded {}",
        manifest.clips.len(),
        totals.observed,
        totals.filled_from_past,
        totals.neutral,
        totals.discarded
    );
    Ok(())
}

#[derive(Serialize)]
struct PreviewImageMeta {
    file: String,
    height: usize,
    width: usize,
    value_range: ValueRange,
    bands: Vec<crate::encode::Band>,
}

fn cmd_encode_preview(
    manifest_path: &Path,
    clip_id: &str,
    fusion: &FusionConfig,
    out: Option<PathBuf>,
) -> Result<()> {
    fusion.validate()?;
    let out = resolve_out(out, "preview");
    let manifest = load_manifest(manifest_path)?;
    let layout = manifest.layout();
    let mut clip = load_clip(&manifest, clip_id)?;
    if fusion.mode.needs_hands() && clip.hand_frames.is_none() {
        let intrinsics = manifest.intrinsics_for(&clip.view_id);
        process_clip(
            &mut clip,
            &layout,
            intrinsics.as_ref(),
            &HandSelectConfig::default(),
        )?;
    }
    let images = encode_clip(&clip, &layout, fusion)?;

    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut metas = Vec::with_capacity(images.len());
    for (i, img) in images.iter().enumerate() {
        let name = format!("{clip_id}_{}_{i}.png", fusion.mode);
        save_png(img, &out.join(&name))?;
        let (_, h, w) = img.data.dim();
        metas.push(PreviewImageMeta {
            file: name,
            height: h,
            width: w,
            value_range: img.value_range,
            bands: img.bands.clone(),
        });
        println!("{}", out.join(&metas[i].file).display());
    }
    let meta_path = out.join(format!("{clip_id}_{}.json", fusion.mode));
    let text = serde_json::to_string_pretty(&metas).expect("metadata serializes");
    std::fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))?;
    println!("{}", meta_path.display());
    Ok(())
}

fn cmd_train(
    manifest_path: &Path,
    config: Option<&Path>,
    sets: &[String],
    out: Option<PathBuf>,
    verbose: u8,
) -> Result<()> {
    let out = resolve_out(out, "train_run");
    let manifest = load_manifest(manifest_path)?;
    let cfg: TrainConfig = merged_config(&default_train_config(&manifest)?, config, sets)?;
    cfg.validate()?;
    let result = train_into_dir(&cfg, &manifest, &out)?;
    if verbose > 0 {
        for m in &result.per_epoch {
            println!(
                "epoch {} loss {:.4} val_macc {:.4} val_top1 {:.4}",
                m.epoch, m.train_loss, m.val_macc, m.val_top1
            );
        }
    }
    match result.status {
        RunStatus::Completed => println!(
            "completed: best_epoch {} test_macc {:.4} test_top1 {:.4} ({})",
            result.best_epoch.unwrap(),
            result.test_macc.unwrap(),
            result.test_top1.unwrap(),
            out.display()
        ),
        RunStatus::Failed => println!(
            "failed: diverged after {} epochs ({})",
            result.per_epoch.len(),
            out.display()
        ),
    }
    Ok(())
}

fn cmd_experiment(
    manifest_path: &Path,
    config: Option<&Path>,
    sets: &[String],
    out: Option<PathBuf>,
    jobs: usize,
) -> Result<()> {
    let out = resolve_out(out, "experiment");
    let manifest = load_manifest(manifest_path)?;
    let grid: ExperimentGrid =
        merged_config(&ExperimentGrid::new(default_train_config(&manifest)?), config, sets)?;
    let summary = run_experiment(&grid, &manifest, &out, jobs)?;
    println!(
        "{} runs, {} failed ({})",
        summary.runs.len(),
        summary.failures,
        out.display()
    );
    if let Some(b) = &summary.box_test_macc {
        println!("test mAcc median {:.4} over n={}", b.median, b.n);
    }
    for path in render_report(&[summary], &out.join("report"))? {
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_report(experiments: &[PathBuf], out: Option<PathBuf>) -> Result<()> {
    let out = resolve_out(out, "report");
    let mut summaries = Vec::with_capacity(experiments.len());
    for dir in experiments {
        let path = dir.join("experiment.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let summary: ExperimentSummary =
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: path.clone(),
                message: e.to_string(),
            })?;
        summaries.push(summary);
    }
    for path in render_report(&summaries, &out)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Synth {
            classes,
            clips,
            frames,
            seed,
            hand_pairs,
            out,
        } => cmd_synth(classes, clips, frames, seed, hand_pairs, out),
        Cmd::Hands {
            manifest,
            threshold,
            crop_size,
        } => cmd_hands(&manifest, threshold, crop_size, cli.verbose),
        Cmd::EncodePreview {
            manifest,
            clip,
            mode,
            scale,
            size,
            range,
            out,
        } => {
            let fusion = FusionConfig {
                mode,
                scale_s: scale,
                input_hw: (size, size),
                value_range: range,
            };
            cmd_encode_preview(&manifest, &clip, &fusion, out)
        }
        Cmd::Train {
            manifest,
            config,
            sets,
            out,
        } => cmd_train(&manifest, config.as_deref(), &sets, out, cli.verbose),
        Cmd::Experiment {
            manifest,
            config,
            sets,
            out,
            jobs,
        } => cmd_experiment(&manifest, config.as_deref(), &sets, out, jobs),
        Cmd::Report { experiments, out } => cmd_report(&experiments, out),
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
