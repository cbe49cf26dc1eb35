//! Train a tiny model end to end on synthetic data, persist the run
//! directory, and re-evaluate the saved best checkpoint.
//!
//! Run with: cargo run --example train_tiny

use skelfuse::encode::{FusionConfig, FusionMode};
use skelfuse::ingest::synth::{generate_synthetic_dataset, SynthSpec};
use skelfuse::model::{BackboneConfig, BackboneFamily};
use skelfuse::train::{prepare_dataset, reevaluate_run, train_into_dir, RunStatus, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::path::PathBuf::from("target/example_out/train_tiny");
    if root.exists() {
        std::fs::remove_dir_all(&root)?;
    }
    let manifest = generate_synthetic_dataset(&SynthSpec::new(4, 8, 16, 5), &root.join("data"))?;

    let backbone = BackboneConfig::tiny_test(
        BackboneFamily::WindowedAttention,
        manifest.num_classes,
        (32, 32),
        2,
    )?;
    let fusion = FusionConfig {
        mode: FusionMode::MultiImage2,
        scale_s: 1,
        input_hw: (32, 32),
        value_range: backbone.value_range,
    };
    let mut cfg = TrainConfig::new(backbone, fusion);
    cfg.epochs = 6;
    cfg.batch_size = 8;
    cfg.max_lr = 2e-3;
    cfg.seed = 1;

    let run_dir = root.join("run");
    let started = std::time::Instant::now();
    let result = train_into_dir(&cfg, &manifest, &run_dir)?;
    println!("trained {} epochs in {:.1?}", cfg.epochs, started.elapsed());
    for m in &result.per_epoch {
        println!(
            "epoch {}  loss {:.4}  val mAcc {:.3}  val top1 {:.3}",
            m.epoch, m.train_loss, m.val_macc, m.val_top1
        );
    }
    assert_eq!(result.status, RunStatus::Completed);
    println!(
        "best epoch {}: test mAcc {:.3}, top1 {:.3}",
        result.best_epoch.unwrap(),
        result.test_macc.unwrap(),
        result.test_top1.unwrap()
    );

    // the run directory carries everything needed to reproduce the numbers
    for name in ["config.json", "epochs.jsonl", "best.ckpt.json", "result.json"] {
        println!("  {}", run_dir.join(name).display());
    }
    let data = prepare_dataset(&manifest, &cfg.fusion)?;
    let (macc, top1) = reevaluate_run(&run_dir, &data)?;
    println!("reloaded checkpoint: test mAcc {macc:.3}, top1 {top1:.3}");
    assert!((macc - result.test_macc.unwrap()).abs() < 1e-12);
    assert!((top1 - result.test_top1.unwrap()).abs() < 1e-12);
    Ok(())
}
