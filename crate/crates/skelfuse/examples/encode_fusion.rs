//! Render one clip in every fusion mode and print the exact band layout.
//!
//! The naive concatenation gives the body 32 of 74 rows (just under 43%).
//! The scaled stack keeps the body at H of H + 42*s rows. Multi-image modes
//! produce separate files per part group.
//!
//! Run with: cargo run --example encode_fusion

use skelfuse::encode::{encode_clip, save_png, FusionConfig, FusionMode};
use skelfuse::handprep::{process_clip, HandSelectConfig};
use skelfuse::ingest::synth::{generate_synthetic_dataset, SynthSpec};
use skelfuse::ingest::load_clip;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::path::PathBuf::from("target/example_out/encode_fusion");
    if out.exists() {
        std::fs::remove_dir_all(&out)?;
    }
    let manifest = generate_synthetic_dataset(&SynthSpec::new(4, 3, 32, 11), &out)?;
    let layout = manifest.layout();

    let id = manifest.clips.last().unwrap().clip_id.clone();
    let mut clip = load_clip(&manifest, &id)?;
    let intrinsics = manifest.intrinsics_for(&clip.view_id);
    process_clip(&mut clip, &layout, intrinsics.as_ref(), &HandSelectConfig::default())?;

    let modes = [
        FusionMode::BodyOnly,
        FusionMode::NaiveConcat,
        FusionMode::ScaledStack,
        FusionMode::MultiImage2,
        FusionMode::MultiImage3,
    ];
    for mode in modes {
        let cfg = FusionConfig {
            mode,
            scale_s: 4,
            ..FusionConfig::default()
        };
        let images = encode_clip(&clip, &layout, &cfg)?;
        println!("{mode}: {} image(s)", images.len());
        for (i, img) in images.iter().enumerate() {
            let (_, h, w) = img.data.dim();
            let path = out.join(format!("{id}_{mode}_{i}.png"));
            save_png(img, &path)?;
            println!("  [{i}] {h}x{w} -> {}", path.display());
            for band in &img.bands {
                println!(
                    "      {:<10} rows {:>3}..{:<3}  fraction {:.4}..{:.4}",
                    band.part.to_string(),
                    band.rows.0,
                    band.rows.1,
                    band.fraction.0,
                    band.fraction.1
                );
            }
        }
    }

    // the published row budgets, exact
    let naive = encode_clip(
        &clip,
        &layout,
        &FusionConfig { mode: FusionMode::NaiveConcat, ..FusionConfig::default() },
    )?;
    let body = &naive[0].bands[0];
    println!();
    println!(
        "naive concat body fraction = {} = 32/74 exactly: {}",
        body.fraction.1,
        body.fraction.1 == 32.0 / 74.0
    );
    for s in [1u32, 4, 8] {
        let cfg = FusionConfig { mode: FusionMode::ScaledStack, scale_s: s, ..FusionConfig::default() };
        let img = &encode_clip(&clip, &layout, &cfg)?[0];
        let (h, _) = cfg.input_hw;
        let want = h as f64 / (h + 42 * s as usize) as f64;
        println!(
            "scaled stack s={s}: body fraction {:.4} (H/(H+42s) = {:.4})",
            img.bands[0].fraction.1, want
        );
    }
    Ok(())
}
