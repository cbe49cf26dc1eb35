//! Learning-rate grid experiment with box-plot aggregation, resumable run
//! directories, and SVG + markdown report output.
//!
//! Run with: cargo run --example experiment_boxplot

use skelfuse::encode::FusionConfig;
use skelfuse::ingest::synth::{generate_synthetic_dataset, SynthSpec};
use skelfuse::model::{BackboneConfig, BackboneFamily};
use skelfuse::report::render_report;
use skelfuse::train::{run_experiment, ExperimentGrid, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::path::PathBuf::from("target/example_out/experiment_boxplot");
    if root.exists() {
        std::fs::remove_dir_all(&root)?;
    }
    let manifest = generate_synthetic_dataset(&SynthSpec::new(2, 6, 8, 21), &root.join("data"))?;

    let backbone = BackboneConfig::tiny_test(
        BackboneFamily::ConvResidual,
        manifest.num_classes,
        (32, 32),
        1,
    )?;
    let mut fusion = FusionConfig::default();
    fusion.input_hw = (32, 32);
    let mut base = TrainConfig::new(backbone, fusion);
    base.epochs = 2;
    base.batch_size = 4;

    // 5 learning rates x 3 repeats = 15 runs, each in its own directory
    let grid = ExperimentGrid {
        max_lrs: vec![5e-3, 2.5e-3, 1e-3, 5e-4, 1e-4],
        repeats: 3,
        base,
    };
    let out = root.join("exp");
    let summary = run_experiment(&grid, &manifest, &out, 1)?;
    println!(
        "{} runs ({} failed), dirs like {}",
        summary.runs.len(),
        summary.failures,
        summary.run_dirs[0]
    );
    let b = summary.box_test_macc.as_ref().unwrap();
    println!(
        "test mAcc over {} runs: median {:.3}, box [{:.3}, {:.3}], whiskers [{:.3}, {:.3}], {} outliers",
        b.n, b.median, b.q1, b.q3, b.whisker_lo, b.whisker_hi, b.outliers.len()
    );

    // a second invocation reuses every persisted run
    let started = std::time::Instant::now();
    let again = run_experiment(&grid, &manifest, &out, 1)?;
    println!("resumed sweep in {:.1?} (no retraining)", started.elapsed());
    assert_eq!(summary, again);

    for path in render_report(&[summary], &root.join("report"))? {
        println!("report: {}", path.display());
    }
    Ok(())
}
