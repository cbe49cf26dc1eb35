// scratch probe, not committed
use skelfuse::encode::{FusionConfig, FusionMode};
use skelfuse::ingest::synth::{generate_synthetic_dataset, SynthSpec};
use skelfuse::model::{BackboneConfig, BackboneFamily};
use skelfuse::train::{train_model, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::path::PathBuf::from("target/example_out/probe_e2e");
    if root.exists() {
        std::fs::remove_dir_all(&root)?;
    }
    let manifest = generate_synthetic_dataset(&SynthSpec::new(4, 30, 32, 100), &root)?;

    let mut trials: Vec<(BackboneFamily, FusionMode, f64, usize, usize, u64)> = Vec::new();
    for seed in [1u64, 2] {
        for (family, mode, lr) in [
            (BackboneFamily::WindowedAttention, FusionMode::MultiImage2, 2e-3),
        ] {
            trials.push((family, mode, lr, 30, 16, seed));
        }
    }
    for (family, mode, lr, epochs, batch, seed) in trials {
        let images = mode.image_count();
        let backbone = BackboneConfig::tiny_test(family, 4, (64, 64), images)?;
        let fusion = FusionConfig {
            mode,
            scale_s: 4,
            input_hw: (64, 64),
            value_range: backbone.value_range,
        };
        let mut cfg = TrainConfig::new(backbone, fusion);
        cfg.epochs = epochs;
        cfg.batch_size = batch;
        cfg.max_lr = lr;
        cfg.seed = seed;

        let t0 = std::time::Instant::now();
        let result = train_model(&cfg, &manifest)?;
        println!(
            "{family} {mode} lr {lr} seed {seed}: {:.1?} best {:?} test_macc {:.3}",
            t0.elapsed(),
            result.best_epoch,
            result.test_macc.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
