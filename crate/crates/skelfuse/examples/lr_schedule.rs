//! One-cycle learning rate schedule: linear warmup to the peak, cosine
//! anneal to a small terminal value.
//!
//! Run with: cargo run --example lr_schedule

use skelfuse::train::one_cycle_lr;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let total = 100;
    let max_lr = 1e-3;
    let (warmup_frac, start_div, final_div) = (0.1, 25.0, 1e4);

    println!("total {total} steps, peak {max_lr}, 10% warmup");
    for step in [0, 5, 10, 30, 55, 80, 99] {
        let lr = one_cycle_lr(step, total, max_lr, warmup_frac, start_div, final_div)?;
        let bar = "#".repeat((lr / max_lr * 60.0).round() as usize);
        println!("step {step:>3}  lr {lr:.3e}  {bar}");
    }

    let peak_step = (warmup_frac * total as f64).floor() as usize;
    let first = one_cycle_lr(0, total, max_lr, warmup_frac, start_div, final_div)?;
    let peak = one_cycle_lr(peak_step, total, max_lr, warmup_frac, start_div, final_div)?;
    let last = one_cycle_lr(total - 1, total, max_lr, warmup_frac, start_div, final_div)?;
    println!();
    println!("step 0       = max_lr/start_div = {first:.3e}");
    println!("step {peak_step} (peak) = max_lr          = {peak:.3e}");
    println!("step {}      = max_lr/final_div = {last:.3e}", total - 1);
    assert_eq!(peak, max_lr);

    // out of range is an error, not a clamp
    assert!(one_cycle_lr(total, total, max_lr, warmup_frac, start_div, final_div).is_err());
    Ok(())
}
