//! Evaluation metrics: mean class accuracy, top-1, confusion matrix, and
//! the box-plot statistics used to aggregate repeated trainings.
//!
//! Run with: cargo run --example metrics_report

use skelfuse::report::{boxplot_stats, confusion_matrix, mean_class_accuracy, top1_accuracy};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // a deliberately unbalanced prediction set: class 2 is rare and missed
    let labels = [0, 0, 0, 0, 1, 1, 1, 1, 2];
    let preds = [0, 0, 0, 1, 1, 1, 1, 1, 0];

    let top1 = top1_accuracy(&preds, &labels)?;
    let macc = mean_class_accuracy(&preds, &labels, 3)?;
    println!("top1 {top1:.4}  (7 of 9 correct)");
    println!("mAcc {macc:.4}  (mean of per-class recall 3/4, 4/4, 0/1)");
    println!("top1 hides the rare class; mAcc does not");

    println!();
    println!("confusion (row = label, column = prediction):");
    let m = confusion_matrix(&preds, &labels, 3)?;
    for (i, row) in m.iter().enumerate() {
        println!("  class {i}: {row:?}");
    }

    // box statistics over repeated run accuracies, one far outlier
    let accs = [0.52, 0.55, 0.54, 0.58, 0.56, 0.53, 0.57, 0.31];
    let b = boxplot_stats(&accs)?;
    println!();
    println!(
        "{} runs: median {:.3}, quartiles [{:.3}, {:.3}]",
        b.n, b.median, b.q1, b.q3
    );
    println!(
        "whiskers [{:.3}, {:.3}] (1.5 IQR rule), outliers {:?}",
        b.whisker_lo, b.whisker_hi, b.outliers
    );
    assert_eq!(b.outliers, vec![0.31]);
    Ok(())
}
