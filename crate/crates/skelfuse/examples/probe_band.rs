// scratch probe, not committed
use skelfuse::encode::{clip_parts, fuse_scaled_stack, FusionConfig, FusionMode, ValueRange};
use skelfuse::handprep::{process_clip, HandSelectConfig};
use skelfuse::ingest::synth::{generate_synthetic_dataset, SynthSpec};
use skelfuse::ingest::load_clip;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::path::PathBuf::from("target/example_out/probe_band");
    if root.exists() {
        std::fs::remove_dir_all(&root)?;
    }
    let manifest = generate_synthetic_dataset(&SynthSpec::new(4, 30, 32, 100), &root)?;
    let layout = manifest.layout();
    let cfg = FusionConfig {
        mode: FusionMode::ScaledStack,
        scale_s: 4,
        input_hw: (64, 64),
        value_range: ValueRange::Unit,
    };

    for class in 0..4 {
        let mut stats = Vec::new();
        for clip_idx in 0..3usize {
            let entry = manifest
                .clips
                .iter()
                .find(|c| c.label == class && c.clip_id.ends_with(&format!("{clip_idx:03}")))
                .unwrap();
            let mut clip = load_clip(&manifest, &entry.clip_id)?;
            let intr = manifest.intrinsics_for(&clip.view_id);
            if clip.hand_frames.is_none() {
                process_clip(&mut clip, &layout, intr.as_ref(), &HandSelectConfig::default())?;
            }
            let (body, right, left) = clip_parts(&clip, &layout)?;
            let img = fuse_scaled_stack(&body, &right, &left, &cfg)?;
            let body_rows = img.bands[0].rows.1;
            let (_, h, w) = img.data.dim();
            let mut sum = 0.0;
            let mut count = 0usize;
            for r in body_rows..h {
                for c in 0..w {
                    sum += img.data[[0, r, c]];
                    count += 1;
                }
            }
            let mean = sum / count as f64;
            let mut var = 0.0;
            for r in body_rows..h {
                for c in 0..w {
                    var += (img.data[[0, r, c]] - mean).powi(2);
                }
            }
            stats.push((mean, (var / count as f64).sqrt()));
        }
        print!("class {class} hand band: ");
        for (m, s) in &stats {
            print!("mean {m:.3} std {s:.3}  ");
        }
        println!();
    }
    Ok(())
}
