//! Finite-difference gradient check for both backbone families.
//!
//! Run with: cargo run --example gradient_check

use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skelfuse::model::{
    build_backbone, gradient_check, BackboneConfig, BackboneFamily,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for family in [BackboneFamily::ConvResidual, BackboneFamily::WindowedAttention] {
        let cfg = BackboneConfig::tiny_test(family, 3, (16, 16), 1)?;
        let mut clf = build_backbone(&cfg, 42)?;
        println!("{family}: {} parameters", clf.param_count());

        // random batch in the backbone's declared value range
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let hi = cfg.value_range.max();
        let x = Array4::from_shape_fn((4, 3, 16, 16), |_| rng.gen_range(0.0..hi));
        let labels = [0usize, 1, 2, 0];

        let report = gradient_check(&mut clf, &[x], &labels, 120, 1)?;
        println!(
            "  checked {} of {} entries, max rel err {:.3e}, mean {:.3e} (worst: {})",
            report.checked,
            report.total_entries,
            report.max_rel_err,
            report.mean_rel_err,
            report.worst_param
        );
        assert!(report.max_rel_err <= 1e-3);
    }
    println!("analytic gradients match central differences at 1e-3");
    Ok(())
}
