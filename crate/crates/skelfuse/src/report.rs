//! Metrics, box-plot statistics, and report rendering.
//!
//! Mean class accuracy is the headline metric: the unweighted mean of
//! per-class recalls, skipping classes with no test instances. Box plots
//! summarize test metrics across the runs of an experiment; `render_report`
//! writes one grouped box-plot image per backbone family plus a best-results
//! table with "mAcc (top1)" cells.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::train::ExperimentSummary;

/// Entry (i, j) counts test items with label i predicted as j.
pub fn confusion_matrix(
    preds: &[usize],
    labels: &[usize],
    num_classes: usize,
) -> Result<Vec<Vec<usize>>> {
    if preds.len() != labels.len() {
        return Err(Error::LengthMismatch(format!(
            "{} predictions vs {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Validation("no predictions to score".into()));
    }
    let mut m = vec![vec![0usize; num_classes]; num_classes];
    for (&p, &l) in preds.iter().zip(labels) {
        if p >= num_classes || l >= num_classes {
            return Err(Error::OutOfRange(format!(
                "class index {} with num_classes {num_classes}",
                p.max(l)
            )));
        }
        m[l][p] += 1;
    }
    Ok(m)
}

/// Unweighted mean of per-class recalls. Classes that never occur in
/// `labels` are left out of the mean rather than counted as zero.
pub fn mean_class_accuracy(preds: &[usize], labels: &[usize], num_classes: usize) -> Result<f64> {
    let m = confusion_matrix(preds, labels, num_classes)?;
    let mut sum = 0.0;
    let mut present = 0usize;
    for (i, row) in m.iter().enumerate() {
        let support: usize = row.iter().sum();
        if support > 0 {
            sum += row[i] as f64 / support as f64;
            present += 1;
        }
    }
    if present == 0 {
        return Err(Error::Validation("no class has any test instance".into()));
    }
    Ok(sum / present as f64)
}

/// Fraction of predictions that match their label exactly.
pub fn top1_accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(Error::LengthMismatch(format!(
            "{} predictions vs {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Validation("no predictions to score".into()));
    }
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Five-number box-plot summary with outliers split off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub outliers: Vec<f64>,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Quartiles by linear interpolation; whiskers reach the furthest data point
/// within 1.5·IQR of the box; everything beyond is an outlier.
pub fn boxplot_stats(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::Validation("box plot of an empty sample".into()));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("box plot input {bad}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q1 = quantile(&sorted, 0.25);
    let median = quantile(&sorted, 0.5);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    let lo_fence = q1 - 1.5 * iqr;
    let hi_fence = q3 + 1.5 * iqr;
    let whisker_lo = sorted
        .iter()
        .copied()
        .find(|&v| v >= lo_fence)
        .unwrap_or(q1);
    let whisker_hi = sorted
        .iter()
        .rev()
        .copied()
        .find(|&v| v <= hi_fence)
        .unwrap_or(q3);
    let outliers = sorted
        .iter()
        .copied()
        .filter(|&v| v < lo_fence || v > hi_fence)
        .collect();
    Ok(BoxStats {
        n: values.len(),
        median,
        q1,
        q3,
        whisker_lo,
        whisker_hi,
        outliers,
    })
}

fn fmt_px(v: f64) -> String {
    format!("{v:.2}")
}

const PLOT_TOP: f64 = 30.0;
const PLOT_BOTTOM: f64 = 300.0;
const SLOT_W: f64 = 96.0;
const MARGIN_L: f64 = 56.0;

fn y_px(v: f64) -> f64 {
    PLOT_TOP + (1.0 - v.clamp(0.0, 1.0)) * (PLOT_BOTTOM - PLOT_TOP)
}

/// One grouped box plot: a slot per entry, labels beneath the axis.
fn box_plot_svg(title: &str, entries: &[(String, Option<&BoxStats>)]) -> String {
    let width = MARGIN_L + SLOT_W * entries.len() as f64 + 24.0;
    let height = PLOT_BOTTOM + 60.0;
    let mut s = String::new();
    let _ = write!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" \
         font-family=\"monospace\">\n",
        fmt_px(width),
        fmt_px(height)
    );
    let _ = write!(
        s,
        "<text x=\"{}\" y=\"18\" font-size=\"14\" text-anchor=\"middle\">{title}</text>\n",
        fmt_px(width / 2.0)
    );
    // frame and y ticks
    let _ = write!(
        s,
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n",
        fmt_px(MARGIN_L),
        fmt_px(PLOT_TOP),
        fmt_px(SLOT_W * entries.len() as f64),
        fmt_px(PLOT_BOTTOM - PLOT_TOP)
    );
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let y = y_px(v);
        let _ = write!(
            s,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#ccc\"/>\n",
            fmt_px(MARGIN_L),
            fmt_px(y),
            fmt_px(MARGIN_L + SLOT_W * entries.len() as f64),
            fmt_px(y)
        );
        let _ = write!(
            s,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{v:.1}</text>\n",
            fmt_px(MARGIN_L - 6.0),
            fmt_px(y + 4.0)
        );
    }
    for (i, (label, stats)) in entries.iter().enumerate() {
        let cx = MARGIN_L + SLOT_W * (i as f64 + 0.5);
        if let Some(b) = stats {
            let half = 26.0;
            // whisker stem and caps
            let _ = write!(
                s,
                "<line x1=\"{cx}\" y1=\"{}\" x2=\"{cx}\" y2=\"{}\" stroke=\"#000\"/>\n",
                fmt_px(y_px(b.whisker_hi)),
                fmt_px(y_px(b.whisker_lo)),
                cx = fmt_px(cx)
            );
            for w in [b.whisker_lo, b.whisker_hi] {
                let _ = write!(
                    s,
                    "<line x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#000\"/>\n",
                    fmt_px(cx - half / 2.0),
                    fmt_px(cx + half / 2.0),
                    y = fmt_px(y_px(w))
                );
            }
            let _ = write!(
                s,
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#9ecae1\" stroke=\"#000\"/>\n",
                fmt_px(cx - half),
                fmt_px(y_px(b.q3)),
                fmt_px(2.0 * half),
                fmt_px((y_px(b.q1) - y_px(b.q3)).max(0.5))
            );
            let _ = write!(
                s,
                "<line x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#000\" stroke-width=\"2\"/>\n",
                fmt_px(cx - half),
                fmt_px(cx + half),
                y = fmt_px(y_px(b.median))
            );
            for o in &b.outliers {
                let _ = write!(
                    s,
                    "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"none\" stroke=\"#000\"/>\n",
                    fmt_px(cx),
                    fmt_px(y_px(*o))
                );
            }
            let _ = write!(
                s,
                "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\">n={}</text>\n",
                fmt_px(cx),
                fmt_px(PLOT_BOTTOM + 34.0),
                b.n
            );
        } else {
            let _ = write!(
                s,
                "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\">no runs</text>\n",
                fmt_px(cx),
                fmt_px(PLOT_BOTTOM + 34.0)
            );
        }
        let _ = write!(
            s,
            "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\">{label}</text>\n",
            fmt_px(cx),
            fmt_px(PLOT_BOTTOM + 20.0)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn pct_cell(macc: f64, top1: f64) -> String {
    format!("{:.1} ({:.1})", 100.0 * macc, 100.0 * top1)
}

/// Best completed run of a summary by test mAcc, as (mAcc, top1).
fn best_of(summary: &ExperimentSummary) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for run in &summary.runs {
        if let (Some(macc), Some(top1)) = (run.test_macc, run.test_top1) {
            if best.map_or(true, |(bm, _)| macc > bm) {
                best = Some((macc, top1));
            }
        }
    }
    best
}

/// Write per-family box-plot SVGs and a best-results markdown table.
/// Output is fully deterministic: rendering the same summaries twice gives
/// byte-identical files.
pub fn render_report(summaries: &[ExperimentSummary], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if summaries.is_empty() {
        return Err(Error::Validation("nothing to report".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut files = Vec::new();

    let mut by_family: BTreeMap<String, Vec<&ExperimentSummary>> = BTreeMap::new();
    for s in summaries {
        by_family
            .entry(s.group.family.to_string())
            .or_default()
            .push(s);
    }
    for (family, mut group) in by_family {
        group.sort_by_key(|s| (s.group.fusion.to_string(), s.group.body_dims));
        let entries: Vec<(String, Option<&BoxStats>)> = group
            .iter()
            .map(|s| {
                (
                    format!("{} {}d", s.group.fusion, s.group.body_dims),
                    s.box_test_macc.as_ref(),
                )
            })
            .collect();
        let svg = box_plot_svg(&format!("test mAcc: {family}"), &entries);
        let path = out_dir.join(format!("box_{family}.svg"));
        std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
        files.push(path);
    }

    // best-results table: rows are fusion modes, columns are family + dims
    let mut cols: Vec<(String, usize)> = summaries
        .iter()
        .map(|s| (s.group.family.to_string(), s.group.body_dims))
        .collect();
    cols.sort();
    cols.dedup();
    let mut rows: Vec<String> = summaries
        .iter()
        .map(|s| s.group.fusion.to_string())
        .collect();
    rows.sort();
    rows.dedup();

    let mut md = String::from("# Best results\n\nmAcc (top1), percent, best run per cell.\n\n");
    md.push_str("| fusion |");
    for (fam, dims) in &cols {
        let _ = write!(md, " {fam} {dims}d |");
    }
    md.push('\n');
    md.push_str("|---|");
    for _ in &cols {
        md.push_str("---|");
    }
    md.push('\n');
    for fusion in &rows {
        let _ = write!(md, "| {fusion} |");
        for (fam, dims) in &cols {
            let cell = summaries
                .iter()
                .find(|s| {
                    s.group.fusion.to_string() == *fusion
                        && s.group.family.to_string() == *fam
                        && s.group.body_dims == *dims
                })
                .and_then(best_of)
                .map(|(m, t)| pct_cell(m, t))
                .unwrap_or_else(|| "n/a".to_string());
            let _ = write!(md, " {cell} |");
        }
        md.push('\n');
    }
    let table_path = out_dir.join("results.md");
    std::fs::write(&table_path, md).map_err(|e| Error::io(&table_path, e))?;
    files.push(table_path);
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn macc_oracles() {
        assert_eq!(mean_class_accuracy(&[0, 1, 2], &[0, 1, 2], 3).unwrap(), 1.0);
        assert_eq!(mean_class_accuracy(&[0, 0], &[0, 1], 2).unwrap(), 0.5);
        // per-class (correct/total) = (2/2, 1/3, 0/1)
        let labels = [0, 0, 1, 1, 1, 2];
        let preds = [0, 0, 1, 0, 2, 0];
        let got = mean_class_accuracy(&preds, &labels, 3).unwrap();
        assert!((got - 4.0 / 9.0).abs() < 1e-12, "got {got}");
    }

    #[test]
    fn macc_skips_absent_classes() {
        // class 2 never appears in labels; mean over classes 0 and 1 only
        let labels = [0, 0, 1];
        let preds = [0, 2, 1];
        let got = mean_class_accuracy(&preds, &labels, 3).unwrap();
        assert!((got - 0.75).abs() < 1e-12);
    }

    #[test]
    fn top1_oracles() {
        assert_eq!(top1_accuracy(&[1, 1, 0, 2], &[1, 1, 0, 0]).unwrap(), 0.75);
        assert_eq!(top1_accuracy(&[5], &[5]).unwrap(), 1.0);
        assert!(top1_accuracy(&[], &[]).is_err());
        assert!(top1_accuracy(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn balanced_equal_recalls_make_macc_equal_top1() {
        // 2 per class, exactly one right in each class
        let labels = [0, 0, 1, 1, 2, 2];
        let preds = [0, 1, 1, 2, 2, 0];
        let macc = mean_class_accuracy(&preds, &labels, 3).unwrap();
        let top1 = top1_accuracy(&preds, &labels).unwrap();
        assert!((macc - top1).abs() < 1e-12);
        assert!((macc - 0.5).abs() < 1e-12);
    }

    #[test]
    fn confusion_shape_and_sums() {
        let labels = [0, 1, 1, 2];
        let preds = [0, 1, 0, 2];
        let m = confusion_matrix(&preds, &labels, 4).unwrap();
        assert_eq!(m.len(), 4);
        let total: usize = m.iter().flatten().sum();
        assert_eq!(total, labels.len());
        let row1: usize = m[1].iter().sum();
        assert_eq!(row1, 2);
        assert_eq!(m[3], vec![0, 0, 0, 0]);
        assert!(confusion_matrix(&[4], &[0], 4).is_err());
    }

    #[test]
    fn macc_from_matrix_matches_direct() {
        // independent recomputation from the matrix itself
        let labels = [0, 0, 1, 1, 1, 2, 3, 3];
        let preds = [0, 1, 1, 1, 0, 2, 0, 0];
        let m = confusion_matrix(&preds, &labels, 4).unwrap();
        let mut acc = 0.0;
        let mut k = 0;
        for i in 0..4 {
            let support: usize = m[i].iter().sum();
            if support > 0 {
                acc += m[i][i] as f64 / support as f64;
                k += 1;
            }
        }
        let want = acc / k as f64;
        let got = mean_class_accuracy(&preds, &labels, 4).unwrap();
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn box_stats_five_point_oracle() {
        let b = boxplot_stats(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(b.median, 3.0);
        assert_eq!(b.q1, 2.0);
        assert_eq!(b.q3, 4.0);
        assert_eq!(b.whisker_lo, 1.0);
        assert_eq!(b.whisker_hi, 5.0);
        assert!(b.outliers.is_empty());
    }

    #[test]
    fn box_stats_all_equal() {
        let b = boxplot_stats(&[0.7; 9]).unwrap();
        assert_eq!(b.q1, 0.7);
        assert_eq!(b.median, 0.7);
        assert_eq!(b.q3, 0.7);
        assert_eq!(b.whisker_lo, 0.7);
        assert_eq!(b.whisker_hi, 0.7);
        assert!(b.outliers.is_empty());
    }

    #[test]
    fn box_stats_flags_far_outlier() {
        let mut v: Vec<f64> = (1..=15).map(|i| i as f64).collect();
        v.push(100.0);
        let b = boxplot_stats(&v).unwrap();
        // n=16: q1 = 4.75, q3 = 12.25, hi fence = 23.5
        assert!((b.q1 - 4.75).abs() < 1e-12);
        assert!((b.q3 - 12.25).abs() < 1e-12);
        assert_eq!(b.outliers, vec![100.0]);
        assert_eq!(b.whisker_hi, 15.0);
        assert_eq!(b.whisker_lo, 1.0);
    }

    #[test]
    fn box_stats_rejects_bad_input() {
        assert!(boxplot_stats(&[]).is_err());
        assert!(boxplot_stats(&[1.0, f64::NAN]).is_err());
    }

    use crate::encode::{FusionConfig, FusionMode};
    use crate::model::{BackboneConfig, BackboneFamily};
    use crate::train::{
        ExperimentSummary, GroupKey, RunResult, RunStatus, TrainConfig,
    };

    fn fake_summary(
        fusion: FusionMode,
        family: BackboneFamily,
        dims: usize,
        maccs: &[f64],
    ) -> ExperimentSummary {
        let backbone =
            BackboneConfig::tiny_test(family, 4, (32, 32), fusion.image_count()).unwrap();
        let fcfg = FusionConfig {
            mode: fusion,
            scale_s: 2,
            input_hw: (32, 32),
            value_range: backbone.value_range,
        };
        let cfg = TrainConfig::new(backbone, fcfg);
        let runs: Vec<RunResult> = maccs
            .iter()
            .enumerate()
            .map(|(i, &m)| RunResult {
                status: RunStatus::Completed,
                seed: i as u64,
                per_epoch: vec![],
                best_epoch: Some(0),
                test_macc: Some(m),
                test_top1: Some((m + 0.1).min(1.0)),
                confusion: None,
                config_echo: cfg.clone(),
            })
            .collect();
        ExperimentSummary {
            group: GroupKey {
                fusion,
                family,
                body_dims: dims,
            },
            run_dirs: (0..runs.len()).map(|i| format!("run{i}")).collect(),
            runs,
            failures: 0,
            box_test_macc: (!maccs.is_empty()).then(|| boxplot_stats(maccs).unwrap()),
            box_test_top1: None,
        }
    }

    #[test]
    fn render_writes_expected_files_and_cells() {
        let summaries = vec![
            fake_summary(
                FusionMode::BodyOnly,
                BackboneFamily::ConvResidual,
                3,
                &[0.5, 0.7, 0.6],
            ),
            fake_summary(
                FusionMode::ScaledStack,
                BackboneFamily::ConvResidual,
                3,
                &[0.8, 0.85, 0.9],
            ),
            fake_summary(
                FusionMode::BodyOnly,
                BackboneFamily::WindowedAttention,
                3,
                &[0.4, 0.45],
            ),
        ];
        let dir = tempfile::tempdir().unwrap();
        let files = render_report(&summaries, dir.path()).unwrap();
        let names: Vec<String> = files
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(
            names,
            vec![
                "box_conv_residual.svg",
                "box_windowed_attention.svg",
                "results.md"
            ]
        );

        let md = std::fs::read_to_string(dir.path().join("results.md")).unwrap();
        // best run of each cell, as percent: mAcc (top1)
        assert!(md.contains("70.0 (80.0)"), "{md}");
        assert!(md.contains("90.0 (100.0)"), "{md}");
        assert!(md.contains("45.0 (55.0)"), "{md}");
        // scaled_stack was never run under windowed_attention
        assert_eq!(md.matches("n/a").count(), 1, "{md}");

        let svg = std::fs::read_to_string(dir.path().join("box_conv_residual.svg")).unwrap();
        // frame rect plus one box rect per entry
        assert_eq!(svg.matches("<rect").count(), 3);
        assert_eq!(svg.matches("n=3</text>").count(), 2);
        assert!(svg.contains("body_only 3d"));
        assert!(svg.contains("scaled_stack 3d"));
    }

    #[test]
    fn render_is_byte_identical_across_calls() {
        let summaries = vec![
            fake_summary(
                FusionMode::NaiveConcat,
                BackboneFamily::ConvResidual,
                2,
                &[0.3, 0.6, 0.5, 0.55],
            ),
            fake_summary(FusionMode::MultiImage2, BackboneFamily::WindowedAttention, 3, &[]),
        ];
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let f1 = render_report(&summaries, d1.path()).unwrap();
        let f2 = render_report(&summaries, d2.path()).unwrap();
        assert_eq!(f1.len(), f2.len());
        for (a, b) in f1.iter().zip(&f2) {
            let ca = std::fs::read(a).unwrap();
            let cb = std::fs::read(b).unwrap();
            assert_eq!(ca, cb, "{} differs", a.display());
        }
        // the empty group renders a placeholder rather than a box
        let svg =
            std::fs::read_to_string(d1.path().join("box_windowed_attention.svg")).unwrap();
        assert!(svg.contains("no runs"));
        assert_eq!(svg.matches("<rect").count(), 1);
    }

    #[test]
    fn render_rejects_empty_input() {
        let dir = tempfile::tempdir().unwrap();
        assert!(render_report(&[], dir.path()).is_err());
    }

    proptest! {
        #[test]
        fn box_stats_invariants(values in proptest::collection::vec(-100.0..100.0f64, 1..40)) {
            let b = boxplot_stats(&values).unwrap();
            prop_assert!(b.q1 <= b.median + 1e-12);
            prop_assert!(b.median <= b.q3 + 1e-12);
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(b.whisker_lo >= lo - 1e-12 && b.whisker_hi <= hi + 1e-12);
            prop_assert!(b.whisker_lo <= b.whisker_hi);
            // every point is inside the whiskers or flagged
            for &v in &values {
                let inside = v >= b.whisker_lo - 1e-12 && v <= b.whisker_hi + 1e-12;
                let flagged = b.outliers.contains(&v);
                prop_assert!(inside || flagged, "value {v} neither inside nor outlier");
            }
        }

        #[test]
        fn macc_against_bruteforce(
            pairs in proptest::collection::vec((0usize..5, 0usize..5), 1..60)
        ) {
            let preds: Vec<usize> = pairs.iter().map(|(p, _)| *p).collect();
            let labels: Vec<usize> = pairs.iter().map(|(_, l)| *l).collect();
            let got = mean_class_accuracy(&preds, &labels, 5).unwrap();
            // brute force: recall per class present
            let mut acc = 0.0;
            let mut k = 0usize;
            for c in 0..5 {
                let total = labels.iter().filter(|&&l| l == c).count();
                if total > 0 {
                    let hit = preds.iter().zip(&labels).filter(|(p, l)| **l == c && p == l).count();
                    acc += hit as f64 / total as f64;
                    k += 1;
                }
            }
            prop_assert!((got - acc / k as f64).abs() < 1e-12);
        }
    }
}
