//! Hand post-processing: wrist-distance filtering, left/right assignment,
//! 3D alignment, and temporal fill. Prints where every hand slot came from.
//!
//! Run with: cargo run --example hand_postprocess

use skelfuse::handprep::{process_clip, HandSelectConfig};
use skelfuse::ingest::synth::{generate_synthetic_dataset, SynthSpec};
use skelfuse::ingest::load_clip;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::path::PathBuf::from("target/example_out/hand_postprocess");
    if out.exists() {
        std::fs::remove_dir_all(&out)?;
    }
    let mut spec = SynthSpec::new(2, 4, 24, 3);
    spec.detection_dropout = 0.25; // force plenty of gaps to fill
    spec.distractor_rate = 0.2;
    let manifest = generate_synthetic_dataset(&spec, &out)?;
    let layout = manifest.layout();

    let cfg = HandSelectConfig::default();
    println!(
        "threshold {} px (half the {} px crop), at most {} hands per frame",
        cfg.wrist_dist_threshold, cfg.crop_size, cfg.max_hands
    );
    println!();
    println!("{:<10} {:>9} {:>7} {:>8} {:>10}", "clip", "observed", "filled", "neutral", "discarded");

    for entry in &manifest.clips {
        let mut clip = load_clip(&manifest, &entry.clip_id)?;
        let intrinsics = manifest.intrinsics_for(&clip.view_id);
        let stats = process_clip(&mut clip, &layout, intrinsics.as_ref(), &cfg)?;
        println!(
            "{:<10} {:>9} {:>7} {:>8} {:>10}",
            entry.clip_id, stats.observed, stats.filled_from_past, stats.neutral, stats.discarded
        );
        // slot accounting: every frame ends with exactly one left and one right hand
        let t = clip.body_frames.len();
        assert_eq!(stats.observed + stats.filled_from_past + stats.neutral, 2 * t);
        let frames = clip.hand_frames.as_ref().unwrap();
        assert!(frames.iter().all(|f| f.left.is_some() && f.right.is_some()));
    }

    println!();
    println!("observed + filled + neutral always equals 2 slots x T frames");
    Ok(())
}
