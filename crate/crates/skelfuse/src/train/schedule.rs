//! One-cycle learning rate schedule.

use crate::error::{Error, Result};

/// Learning rate at `step` of a one-cycle schedule over `total_steps`:
/// linear ramp from `max_lr / start_div` up to `max_lr` at step
/// `floor(warmup_frac * total_steps)`, then cosine anneal down to
/// `max_lr / final_div` at the last step.
pub fn one_cycle_lr(
    step: usize,
    total_steps: usize,
    max_lr: f64,
    warmup_frac: f64,
    start_div: f64,
    final_div: f64,
) -> Result<f64> {
    if total_steps == 0 || step >= total_steps {
        return Err(Error::OutOfRange(format!(
            "schedule step {step} outside [0, {total_steps})"
        )));
    }
    if !(max_lr > 0.0) || !max_lr.is_finite() {
        return Err(Error::Config(format!("max_lr must be positive, got {max_lr}")));
    }
    if !(warmup_frac > 0.0 && warmup_frac < 1.0) {
        return Err(Error::Config(format!(
            "warmup_frac must be in (0, 1), got {warmup_frac}"
        )));
    }
    if start_div < 1.0 || final_div < 1.0 {
        return Err(Error::Config(format!(
            "start_div ({start_div}) and final_div ({final_div}) must be >= 1"
        )));
    }
    let warm_end = (warmup_frac * total_steps as f64).floor() as usize;
    if step <= warm_end {
        if warm_end == 0 {
            return Ok(max_lr);
        }
        let start = max_lr / start_div;
        let t = step as f64 / warm_end as f64;
        Ok(start + t * (max_lr - start))
    } else {
        let floor = max_lr / final_div;
        let t = (step - warm_end) as f64 / (total_steps - 1 - warm_end) as f64;
        Ok(floor + (max_lr - floor) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lr(step: usize, total: usize) -> f64 {
        one_cycle_lr(step, total, 1.0, 0.1, 25.0, 1e4).unwrap()
    }

    #[test]
    fn warmup_endpoint_hits_max() {
        // floor(0.1 * 100) = 10
        assert_eq!(lr(10, 100), 1.0);
        assert_eq!(one_cycle_lr(7, 75, 2.0, 0.1, 25.0, 1e4).unwrap(), 2.0);
    }

    #[test]
    fn first_step_is_max_over_start_div() {
        assert!((lr(0, 100) - 1.0 / 25.0).abs() < 1e-15);
        let v = one_cycle_lr(0, 200, 0.5, 0.1, 10.0, 1e4).unwrap();
        assert!((v - 0.05).abs() < 1e-15);
    }

    #[test]
    fn last_step_reaches_final_div_floor() {
        let v = lr(99, 100);
        assert!(((v - 1e-4) / 1e-4).abs() < 1e-9, "got {v}");
    }

    #[test]
    fn midpoints_match_hand_computed_reference() {
        // warmup half-way: 0.04 + 0.5 * 0.96
        assert!((lr(5, 100) - 0.52).abs() < 1e-12);
        // anneal: step 55, t = 45/89
        let t = 45.0 / 89.0;
        let want = 1e-4 + (1.0 - 1e-4) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos());
        assert!((lr(55, 100) - want).abs() < 1e-12);
    }

    #[test]
    fn domain_errors() {
        assert!(one_cycle_lr(100, 100, 1.0, 0.1, 25.0, 1e4).is_err());
        assert!(one_cycle_lr(0, 0, 1.0, 0.1, 25.0, 1e4).is_err());
        assert!(one_cycle_lr(0, 10, -1.0, 0.1, 25.0, 1e4).is_err());
        assert!(one_cycle_lr(0, 10, 1.0, 0.0, 25.0, 1e4).is_err());
        assert!(one_cycle_lr(0, 10, 1.0, 1.0, 25.0, 1e4).is_err());
        assert!(one_cycle_lr(0, 10, 1.0, 0.1, 0.5, 1e4).is_err());
    }

    #[test]
    fn tiny_totals_are_well_defined() {
        // total 5, warmup_frac 0.1: warm_end = 0, peak at step 0
        assert_eq!(lr(0, 5), 1.0);
        for s in 1..5 {
            assert!(lr(s, 5) < lr(s - 1, 5) + 1e-15);
        }
        assert!(((lr(4, 5) - 1e-4) / 1e-4).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn unimodal_and_continuous(
            total in 3usize..400,
            max_lr in 1e-5..1.0f64,
            warmup_frac in 0.05..0.5f64,
        ) {
            let warm_end = (warmup_frac * total as f64).floor() as usize;
            let values: Vec<f64> =
                (0..total).map(|s| one_cycle_lr(s, total, max_lr, warmup_frac, 25.0, 1e4).unwrap()).collect();
            // nondecreasing through warmup, nonincreasing after
            for s in 1..=warm_end {
                prop_assert!(values[s] >= values[s - 1] - 1e-15);
            }
            for s in (warm_end + 1)..total {
                prop_assert!(values[s] <= values[s - 1] + 1e-15);
            }
            // step-to-step jumps bounded by the larger of the two phase slopes
            let warm_slope = if warm_end > 0 {
                (max_lr - max_lr / 25.0) / warm_end as f64
            } else {
                0.0
            };
            let anneal_steps = (total - 1 - warm_end).max(1) as f64;
            let anneal_slope =
                (max_lr - max_lr / 1e4) * 0.5 * std::f64::consts::PI / anneal_steps;
            let bound = warm_slope.max(anneal_slope) * 1.000001 + 1e-15;
            for s in 1..total {
                prop_assert!(
                    (values[s] - values[s - 1]).abs() <= bound,
                    "jump {} at step {s} exceeds {bound}",
                    (values[s] - values[s - 1]).abs()
                );
            }
            prop_assert!(values.iter().cloned().fold(f64::NEG_INFINITY, f64::max) <= max_lr + 1e-15);
        }
    }
}
