//! Hand post-processing: raw per-frame detections to exactly-two-slot streams.
//!
//! A detector emits zero or more candidate hands per frame with unreliable
//! handedness. This module filters them by 2D wrist distance to the body,
//! assigns survivors to the left/right slot by minimum-cost matching, aligns
//! the 3D hand to the body wrist, and forward-fills gaps so every frame ends
//! up with both slots present.

use ndarray::Array2;
use serde::Serialize;

use crate::clip::{BodyFrame, CameraIntrinsics, Clip, FillSource, HandDetection, HandFrame, HandSlot};
use crate::error::{Error, Result};
use crate::ingest::project_point;
use crate::layout::{JointLayout, HAND_WRIST_IDX};

/// Filtering and assignment parameters.
#[derive(Debug, Clone, Serialize)]
pub struct HandSelectConfig {
    /// Maximum 2D distance (pixels) between a detection's wrist and the
    /// nearer body wrist. Defaults to half the crop window.
    pub wrist_dist_threshold: f64,
    /// Side length of the square patch the detector sees, pixels.
    pub crop_size: u32,
    /// Fixed at 2 (one left, one right).
    pub max_hands: usize,
}

impl Default for HandSelectConfig {
    fn default() -> Self {
        Self {
            wrist_dist_threshold: 150.0,
            crop_size: 300,
            max_hands: 2,
        }
    }
}

impl HandSelectConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.wrist_dist_threshold > 0.0) {
            return Err(Error::Validation(
                "wrist_dist_threshold must be > 0".into(),
            ));
        }
        if self.crop_size == 0 {
            return Err(Error::Validation("crop_size must be > 0".into()));
        }
        if self.max_hands != 2 {
            return Err(Error::Validation("max_hands is fixed at 2".into()));
        }
        Ok(())
    }
}

/// Axis-aligned pixel rectangle, end-exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

/// Square window of `crop_size` centered on the wrist, translated (never
/// shrunk) to stay inside the frame; a frame smaller than `crop_size` in a
/// dimension clamps to the full extent in that dimension.
pub fn crop_window(frame_size: (u32, u32), wrist_2d: [f64; 2], crop_size: u32) -> CropRect {
    fn axis(extent: u32, center: f64, size: u32) -> (u32, u32) {
        if extent <= size {
            return (0, extent);
        }
        let half = size as i64 / 2;
        let start = (center.round() as i64 - half).clamp(0, (extent - size) as i64) as u32;
        (start, start + size)
    }
    let (w, h) = frame_size;
    let (x0, x1) = axis(w, wrist_2d[0], crop_size);
    let (y0, y1) = axis(h, wrist_2d[1], crop_size);
    CropRect { x0, y0, x1, y1 }
}

/// Translate patch-local 2D keypoints into full-image pixels. 3D coordinates
/// are untouched (they live in the hand-local metric frame).
pub fn map_detection_to_full_image(det: &HandDetection, rect: CropRect) -> HandDetection {
    let mut out = det.clone();
    for j in 0..out.coords_2d.nrows() {
        out.coords_2d[[j, 0]] += rect.x0 as f64;
        out.coords_2d[[j, 1]] += rect.y0 as f64;
    }
    out
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Filter detections by wrist distance and assign them to left/right slots.
///
/// A detection survives only if its wrist is within `cfg.wrist_dist_threshold`
/// of at least one body wrist, and may be assigned only to a slot whose wrist
/// is within threshold. Among one-to-one assignments the one covering the
/// most slots wins; ties go to the smaller total wrist distance, then the
/// higher total score, then the earliest input positions.
pub fn select_hands(
    dets: &[HandDetection],
    left_wrist_2d: [f64; 2],
    right_wrist_2d: [f64; 2],
    cfg: &HandSelectConfig,
) -> HandFrame {
    let thr = cfg.wrist_dist_threshold;
    let candidates: Vec<(usize, f64, f64)> = dets
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let w = d.wrist_2d();
            (i, dist2(w, left_wrist_2d), dist2(w, right_wrist_2d))
        })
        .filter(|&(_, dl, dr)| dl.min(dr) <= thr)
        .collect();

    // exhaustive over (left choice, right choice); candidate lists are tiny
    let mut best: Option<(usize, f64, f64, (usize, usize), Option<usize>, Option<usize>)> = None;
    let mut consider = |l: Option<&(usize, f64, f64)>, r: Option<&(usize, f64, f64)>| {
        if let (Some(a), Some(b)) = (l, r) {
            if a.0 == b.0 {
                return;
            }
        }
        let count = l.is_some() as usize + r.is_some() as usize;
        let total_dist = l.map_or(0.0, |c| c.1) + r.map_or(0.0, |c| c.2);
        let total_score =
            l.map_or(0.0, |c| dets[c.0].score) + r.map_or(0.0, |c| dets[c.0].score);
        let order = (
            l.map_or(usize::MAX, |c| c.0),
            r.map_or(usize::MAX, |c| c.0),
        );
        let better = match &best {
            None => true,
            Some((bc, bd, bs, bo, _, _)) => {
                count > *bc
                    || (count == *bc
                        && (total_dist < *bd
                            || (total_dist == *bd
                                && (total_score > *bs || (total_score == *bs && order < *bo)))))
            }
        };
        if better {
            best = Some((
                count,
                total_dist,
                total_score,
                order,
                l.map(|c| c.0),
                r.map(|c| c.0),
            ));
        }
    };
    let left_ok: Vec<_> = candidates.iter().filter(|c| c.1 <= thr).collect();
    let right_ok: Vec<_> = candidates.iter().filter(|c| c.2 <= thr).collect();
    consider(None, None);
    for l in &left_ok {
        consider(Some(l), None);
        for r in &right_ok {
            consider(Some(l), Some(r));
        }
    }
    for r in &right_ok {
        consider(None, Some(r));
    }

    let (_, _, _, _, l_idx, r_idx) = best.expect("at least the empty assignment");
    let to_slot = |i: Option<usize>| {
        i.map(|i| HandSlot {
            coords_2d: dets[i].coords_2d.clone(),
            coords_3d: dets[i].coords_3d.clone(),
            fill: FillSource::Observed,
        })
    };
    HandFrame {
        left: to_slot(l_idx),
        right: to_slot(r_idx),
    }
}

/// Rigid translation placing the hand wrist on the body wrist. Inter-joint
/// distances are preserved exactly.
pub fn align_hand_to_body_frame(hand_3d: &Array2<f64>, body_wrist_3d: [f64; 3]) -> Array2<f64> {
    let mut out = hand_3d.clone();
    let wrist = [
        hand_3d[[HAND_WRIST_IDX, 0]],
        hand_3d[[HAND_WRIST_IDX, 1]],
        hand_3d[[HAND_WRIST_IDX, 2]],
    ];
    for j in 0..out.nrows() {
        for c in 0..3 {
            out[[j, c]] += body_wrist_3d[c] - wrist[c];
        }
    }
    out
}

/// Per-side body-wrist anchor: always a 2D pixel position, plus the 3D wrist
/// when the body layout is 3D.
#[derive(Debug, Clone, Copy)]
pub struct WristAnchor {
    pub px: [f64; 2],
    pub xyz: Option<[f64; 3]>,
}

/// Extract (left, right) wrist anchors from a body frame. 3D layouts require
/// camera intrinsics to project the wrist into pixels.
pub fn wrist_anchors(
    body: &BodyFrame,
    layout: &JointLayout,
    intrinsics: Option<&CameraIntrinsics>,
) -> Result<(WristAnchor, WristAnchor)> {
    let anchor = |idx: usize| -> Result<WristAnchor> {
        let j = body.joint(idx);
        if layout.dims == 3 {
            let intr = intrinsics.ok_or_else(|| {
                Error::Config(format!(
                    "layout {} is 3D; camera intrinsics are required to project wrists",
                    layout.name
                ))
            })?;
            let xyz = [j[0], j[1], j[2]];
            Ok(WristAnchor {
                px: project_point(xyz, intr)?,
                xyz: Some(xyz),
            })
        } else {
            Ok(WristAnchor {
                px: [j[0], j[1]],
                xyz: None,
            })
        }
    };
    Ok((
        anchor(layout.left_wrist_idx)?,
        anchor(layout.right_wrist_idx)?,
    ))
}

fn neutral_slot(anchor: &WristAnchor) -> HandSlot {
    let mut coords_2d = Array2::zeros((21, 2));
    let mut coords_3d = Array2::zeros((21, 3));
    for j in 0..21 {
        coords_2d[[j, 0]] = anchor.px[0];
        coords_2d[[j, 1]] = anchor.px[1];
        if let Some(xyz) = anchor.xyz {
            for c in 0..3 {
                coords_3d[[j, c]] = xyz[c];
            }
        }
    }
    HandSlot {
        coords_2d,
        coords_3d,
        fill: FillSource::Neutral,
    }
}

/// Fill absent slots from the past, independently per side. With no past
/// observation a neutral hand is synthesized at that frame's body wrist.
/// Output frames always have both slots present; idempotent.
pub fn forward_fill(
    frames: &[HandFrame],
    body_frames: &[BodyFrame],
    layout: &JointLayout,
    intrinsics: Option<&CameraIntrinsics>,
) -> Result<Vec<HandFrame>> {
    if frames.len() != body_frames.len() {
        return Err(Error::LengthMismatch(format!(
            "{} hand frames vs {} body frames",
            frames.len(),
            body_frames.len()
        )));
    }
    let mut out = Vec::with_capacity(frames.len());
    let mut last_left: Option<HandSlot> = None;
    let mut last_right: Option<HandSlot> = None;
    for (frame, body) in frames.iter().zip(body_frames) {
        let (la, ra) = wrist_anchors(body, layout, intrinsics)?;
        let fill_side = |slot: &Option<HandSlot>, last: &mut Option<HandSlot>, anchor: &WristAnchor| {
            match slot {
                Some(s) => {
                    if s.fill == FillSource::Observed {
                        *last = Some(HandSlot {
                            fill: FillSource::FilledFromPast,
                            ..s.clone()
                        });
                    }
                    s.clone()
                }
                None => match last {
                    Some(prev) => prev.clone(),
                    None => neutral_slot(anchor),
                },
            }
        };
        let left = fill_side(&frame.left, &mut last_left, &la);
        let right = fill_side(&frame.right, &mut last_right, &ra);
        out.push(HandFrame {
            left: Some(left),
            right: Some(right),
        });
    }
    Ok(out)
}

/// Per-clip bookkeeping of where the final hand slots came from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct HandPrepStats {
    /// Slots taken from a detection in their own frame.
    pub observed: usize,
    /// Slots copied from a past frame.
    pub filled_from_past: usize,
    /// Slots synthesized at the body wrist.
    pub neutral: usize,
    /// Raw detections that ended up in no slot (filtered or unassigned).
    pub discarded: usize,
}

/// Run the full post-processing chain on a clip: select per frame, align 3D
/// hands to the body wrists, forward-fill, and store the result in
/// `clip.hand_frames`.
pub fn process_clip(
    clip: &mut Clip,
    layout: &JointLayout,
    intrinsics: Option<&CameraIntrinsics>,
    cfg: &HandSelectConfig,
) -> Result<HandPrepStats> {
    cfg.validate()?;
    let total_dets: usize = clip.raw_detections.iter().map(Vec::len).sum();
    let mut selected = Vec::with_capacity(clip.len());
    for (dets, body) in clip.raw_detections.iter().zip(&clip.body_frames) {
        let (la, ra) = wrist_anchors(body, layout, intrinsics)?;
        let mut frame = select_hands(dets, la.px, ra.px, cfg);
        let align = |slot: &mut Option<HandSlot>, anchor: &WristAnchor| {
            if let (Some(s), Some(xyz)) = (slot.as_mut(), anchor.xyz) {
                s.coords_3d = align_hand_to_body_frame(&s.coords_3d, xyz);
            }
        };
        align(&mut frame.left, &la);
        align(&mut frame.right, &ra);
        selected.push(frame);
    }
    let filled = forward_fill(&selected, &clip.body_frames, layout, intrinsics)?;
    let mut stats = HandPrepStats::default();
    for frame in &filled {
        for slot in [frame.left.as_ref(), frame.right.as_ref()] {
            match slot.expect("forward_fill leaves no absent slot").fill {
                FillSource::Observed => stats.observed += 1,
                FillSource::FilledFromPast => stats.filled_from_past += 1,
                FillSource::Neutral => stats.neutral += 1,
            }
        }
    }
    stats.discarded = total_dets - stats.observed;
    clip.hand_frames = Some(filled);
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clip::HandednessHint;
    use crate::ingest::{generate_synthetic_dataset, load_clip, load_manifest, SynthSpec};
    use crate::layout::get_layout;
    use proptest::prelude::*;
    use tempfile::TempDir;

    fn det_at(wrist: [f64; 2], score: f64) -> HandDetection {
        let mut coords_2d = Array2::zeros((21, 2));
        for j in 0..21 {
            coords_2d[[j, 0]] = wrist[0] + j as f64 * 0.5;
            coords_2d[[j, 1]] = wrist[1] - j as f64 * 0.3;
        }
        let mut coords_3d = Array2::zeros((21, 3));
        for j in 0..21 {
            coords_3d[[j, 0]] = j as f64 * 0.01;
            coords_3d[[j, 1]] = -(j as f64) * 0.005;
            coords_3d[[j, 2]] = 0.002 * j as f64;
        }
        HandDetection::new(HandednessHint::Unknown, coords_2d, coords_3d, score).unwrap()
    }

    #[test]
    fn crop_centered() {
        let r = crop_window((1920, 1080), [960.0, 540.0], 300);
        assert_eq!(r, CropRect { x0: 810, y0: 390, x1: 1110, y1: 690 });
    }

    #[test]
    fn crop_corner_clamp() {
        let r = crop_window((1920, 1080), [10.0, 10.0], 300);
        assert_eq!(r, CropRect { x0: 0, y0: 0, x1: 300, y1: 300 });
    }

    #[test]
    fn crop_undersized_frame() {
        let r = crop_window((200, 200), [999.0, -50.0], 300);
        assert_eq!(r, CropRect { x0: 0, y0: 0, x1: 200, y1: 200 });
    }

    #[test]
    fn map_translates_2d_only() {
        let det = det_at([0.0, 0.0], 0.9);
        let rect = CropRect { x0: 810, y0: 390, x1: 1110, y1: 690 };
        let mapped = map_detection_to_full_image(&det, rect);
        assert_eq!(mapped.coords_2d[[0, 0]], 810.0);
        assert_eq!(mapped.coords_2d[[0, 1]], 390.0);
        assert_eq!(mapped.coords_2d[[5, 0]], det.coords_2d[[5, 0]] + 810.0);
        assert_eq!(mapped.coords_3d, det.coords_3d);
        let identity = map_detection_to_full_image(&det, CropRect { x0: 0, y0: 0, x1: 300, y1: 300 });
        assert_eq!(identity.coords_2d, det.coords_2d);
    }

    #[test]
    fn select_single_near_left() {
        let cfg = HandSelectConfig { wrist_dist_threshold: 50.0, ..Default::default() };
        let frame = select_hands(&[det_at([110.0, 100.0], 0.9)], [100.0, 100.0], [500.0, 100.0], &cfg);
        assert!(frame.left.is_some());
        assert!(frame.right.is_none());
        assert_eq!(frame.left.unwrap().fill, FillSource::Observed);
    }

    #[test]
    fn select_discards_far() {
        let cfg = HandSelectConfig { wrist_dist_threshold: 50.0, ..Default::default() };
        let frame = select_hands(&[det_at([300.0, 100.0], 0.9)], [100.0, 100.0], [700.0, 100.0], &cfg);
        assert!(frame.left.is_none());
        assert!(frame.right.is_none());
    }

    #[test]
    fn select_min_total_distance() {
        // dets 5 px from one wrist and 95 from the other; the crossed
        // assignment costs 190 vs 10, so each det goes to its near wrist
        let cfg = HandSelectConfig::default();
        let d1 = det_at([5.0, 0.0], 0.6);
        let d2 = det_at([95.0, 0.0], 0.6);
        let frame = select_hands(&[d1.clone(), d2.clone()], [0.0, 0.0], [100.0, 0.0], &cfg);
        assert_eq!(frame.left.unwrap().coords_2d, d1.coords_2d);
        assert_eq!(frame.right.unwrap().coords_2d, d2.coords_2d);
    }

    #[test]
    fn select_three_near_right() {
        // distances to the right wrist: 12, 5, 30; all far from the left
        let cfg = HandSelectConfig { wrist_dist_threshold: 50.0, ..Default::default() };
        let dets = vec![
            det_at([512.0, 100.0], 0.9),
            det_at([505.0, 100.0], 0.7),
            det_at([530.0, 100.0], 0.8),
        ];
        let frame = select_hands(&dets, [100.0, 100.0], [500.0, 100.0], &cfg);
        assert!(frame.left.is_none());
        assert_eq!(frame.right.unwrap().coords_2d, dets[1].coords_2d);
    }

    #[test]
    fn select_tie_breaks_score_then_order() {
        let cfg = HandSelectConfig { wrist_dist_threshold: 60.0, ..Default::default() };
        // identical positions: distance ties, score 0.9 beats 0.5
        let hi = det_at([30.0, 0.0], 0.9);
        let lo = det_at([30.0, 0.0], 0.5);
        let frame = select_hands(&[lo.clone(), hi.clone()], [0.0, 0.0], [200.0, 0.0], &cfg);
        assert_eq!(frame.left.unwrap().coords_2d, hi.coords_2d);
        // equal scores: first input position wins
        let a = det_at([30.0, 0.0], 0.7);
        let b = det_at([30.0, 0.0], 0.7);
        let frame = select_hands(&[a.clone(), b], [0.0, 0.0], [200.0, 0.0], &cfg);
        assert_eq!(frame.left.unwrap().coords_2d, a.coords_2d);
    }

    /// Brute force over every subset-to-slot mapping, written independently
    /// of the implementation's search order.
    fn oracle_select(
        dets: &[HandDetection],
        lw: [f64; 2],
        rw: [f64; 2],
        thr: f64,
    ) -> (Option<usize>, Option<usize>) {
        let n = dets.len();
        let mut options: Vec<(Option<usize>, Option<usize>)> = vec![];
        for l in std::iter::once(None).chain((0..n).map(Some)) {
            for r in std::iter::once(None).chain((0..n).map(Some)) {
                if l.is_some() && l == r {
                    continue;
                }
                let ok = |i: Option<usize>, w: [f64; 2]| {
                    i.map_or(true, |i| dist2(dets[i].wrist_2d(), w) <= thr)
                };
                if ok(l, lw) && ok(r, rw) {
                    options.push((l, r));
                }
            }
        }
        options
            .into_iter()
            .min_by(|&(l1, r1), &(l2, r2)| {
                let key = |l: Option<usize>, r: Option<usize>| {
                    let count = l.is_some() as i64 + r.is_some() as i64;
                    let dist = l.map_or(0.0, |i| dist2(dets[i].wrist_2d(), lw))
                        + r.map_or(0.0, |i| dist2(dets[i].wrist_2d(), rw));
                    let score = l.map_or(0.0, |i| dets[i].score) + r.map_or(0.0, |i| dets[i].score);
                    (
                        -count,
                        dist,
                        -score,
                        l.unwrap_or(usize::MAX),
                        r.unwrap_or(usize::MAX),
                    )
                };
                let (c1, d1, s1, l1k, r1k) = key(l1, r1);
                let (c2, d2, s2, l2k, r2k) = key(l2, r2);
                c1.cmp(&c2)
                    .then(d1.partial_cmp(&d2).unwrap())
                    .then(s1.partial_cmp(&s2).unwrap())
                    .then(l1k.cmp(&l2k))
                    .then(r1k.cmp(&r2k))
            })
            .unwrap()
    }

    proptest! {
        #[test]
        fn select_matches_brute_force(
            positions in prop::collection::vec((0.0f64..400.0, 0.0f64..300.0), 0..5),
            scores in prop::collection::vec(0.0f64..1.0, 5),
            thr in 20.0f64..200.0,
        ) {
            let dets: Vec<_> = positions
                .iter()
                .zip(&scores)
                .map(|(&(x, y), &s)| det_at([x, y], s))
                .collect();
            let lw = [120.0, 150.0];
            let rw = [280.0, 150.0];
            let cfg = HandSelectConfig { wrist_dist_threshold: thr, ..Default::default() };
            let got = select_hands(&dets, lw, rw, &cfg);
            let (ol, or) = oracle_select(&dets, lw, rw, thr);
            let got_l = got.left.map(|s| s.coords_2d);
            let got_r = got.right.map(|s| s.coords_2d);
            prop_assert_eq!(got_l, ol.map(|i| dets[i].coords_2d.clone()));
            prop_assert_eq!(got_r, or.map(|i| dets[i].coords_2d.clone()));
        }
    }

    fn body17_frames(t: usize) -> (JointLayout, Vec<BodyFrame>) {
        let layout = get_layout("body17").unwrap();
        let frames = (0..t)
            .map(|i| {
                let mut coords = Array2::zeros((17, 2));
                for j in 0..17 {
                    coords[[j, 0]] = 50.0 * j as f64 + i as f64;
                    coords[[j, 1]] = 100.0 + i as f64;
                }
                BodyFrame::new(coords, i as f64 / 30.0, true, &layout).unwrap()
            })
            .collect();
        (layout, frames)
    }

    #[test]
    fn fill_example_sequence() {
        let (layout, body) = body17_frames(4);
        let h1 = det_at([800.0, 100.0], 0.9);
        let h2 = det_at([820.0, 110.0], 0.9);
        let observed = |d: &HandDetection| HandSlot {
            coords_2d: d.coords_2d.clone(),
            coords_3d: d.coords_3d.clone(),
            fill: FillSource::Observed,
        };
        let frames = vec![
            HandFrame::empty(),
            HandFrame { left: None, right: Some(observed(&h1)) },
            HandFrame::empty(),
            HandFrame { left: None, right: Some(observed(&h2)) },
        ];
        let filled = forward_fill(&frames, &body, &layout, None).unwrap();
        let fills: Vec<_> = filled.iter().map(|f| f.right.as_ref().unwrap().fill).collect();
        assert_eq!(
            fills,
            vec![
                FillSource::Neutral,
                FillSource::Observed,
                FillSource::FilledFromPast,
                FillSource::Observed
            ]
        );
        assert_eq!(filled[2].right.as_ref().unwrap().coords_2d, h1.coords_2d);
        // left side had no observation: neutral hands track the moving wrist
        let l0 = filled[0].left.as_ref().unwrap();
        let l3 = filled[3].left.as_ref().unwrap();
        assert_eq!(l0.fill, FillSource::Neutral);
        assert_eq!(l3.fill, FillSource::Neutral);
        assert_ne!(l0.coords_2d, l3.coords_2d);
        assert_eq!(l0.coords_2d[[7, 0]], body[0].joint(layout.left_wrist_idx)[0]);
    }

    #[test]
    fn fill_idempotent_and_counts() {
        let (layout, body) = body17_frames(6);
        let observed = HandSlot {
            coords_2d: det_at([400.0, 120.0], 0.8).coords_2d,
            coords_3d: Array2::zeros((21, 3)),
            fill: FillSource::Observed,
        };
        let mut frames = vec![HandFrame::empty(); 6];
        frames[2].left = Some(observed.clone());
        frames[4].right = Some(observed);
        let once = forward_fill(&frames, &body, &layout, None).unwrap();
        let twice = forward_fill(&once, &body, &layout, None).unwrap();
        assert_eq!(once, twice);
        let observed_count = once
            .iter()
            .flat_map(|f| [f.left.as_ref().unwrap().fill, f.right.as_ref().unwrap().fill])
            .filter(|&f| f == FillSource::Observed)
            .count();
        assert_eq!(observed_count, 2);
        assert!(once.iter().all(|f| f.left.is_some() && f.right.is_some()));
    }

    #[test]
    fn fill_length_mismatch() {
        let (layout, body) = body17_frames(3);
        let frames = vec![HandFrame::empty(); 4];
        assert!(forward_fill(&frames, &body, &layout, None).is_err());
    }

    #[test]
    fn align_translation() {
        let hand = det_at([0.0, 0.0], 0.5).coords_3d;
        let out = align_hand_to_body_frame(&hand, [1.0, 2.0, 3.0]);
        // hand wrist (joint 0) sat at the origin, so every joint shifts
        for j in 0..21 {
            assert_eq!(out[[j, 0]], hand[[j, 0]] + 1.0);
            assert_eq!(out[[j, 1]], hand[[j, 1]] + 2.0);
            assert_eq!(out[[j, 2]], hand[[j, 2]] + 3.0);
        }
        let same = align_hand_to_body_frame(&hand, [0.0, 0.0, 0.0]);
        assert_eq!(same, hand);
    }

    #[test]
    fn align_preserves_pairwise_distances() {
        let mut hand = Array2::zeros((21, 3));
        for j in 0..21 {
            hand[[j, 0]] = (j as f64 * 0.7).sin() * 0.05;
            hand[[j, 1]] = (j as f64 * 1.3).cos() * 0.04;
            hand[[j, 2]] = j as f64 * 0.003 + 0.01;
        }
        let out = align_hand_to_body_frame(&hand, [0.3, -0.2, 2.4]);
        let mut pairs = 0;
        for a in 0..21 {
            for b in (a + 1)..21 {
                let d = |m: &Array2<f64>| {
                    ((m[[a, 0]] - m[[b, 0]]).powi(2)
                        + (m[[a, 1]] - m[[b, 1]]).powi(2)
                        + (m[[a, 2]] - m[[b, 2]]).powi(2))
                    .sqrt()
                };
                let before = d(&hand);
                let after = d(&out);
                assert!(((before - after) / before.max(1e-300)).abs() <= 1e-9);
                pairs += 1;
            }
        }
        assert_eq!(pairs, 210);
    }

    #[test]
    fn process_synthetic_clip() {
        let dir = TempDir::new().unwrap();
        let spec = SynthSpec::new(2, 3, 24, 5);
        generate_synthetic_dataset(&spec, dir.path()).unwrap();
        let manifest = load_manifest(&dir.path().join("manifest.json")).unwrap();
        let layout = manifest.layout();
        let intr = manifest.intrinsics_for("cam0").unwrap();
        let mut clip = load_clip(&manifest, "c00_000").unwrap();
        let total_dets: usize = clip.raw_detections.iter().map(Vec::len).sum();
        let cfg = HandSelectConfig::default();
        let stats = process_clip(&mut clip, &layout, Some(&intr), &cfg).unwrap();
        let frames = clip.hand_frames.as_ref().unwrap();
        assert_eq!(frames.len(), 24);
        assert!(frames.iter().all(|f| f.left.is_some() && f.right.is_some()));
        assert_eq!(stats.observed + stats.filled_from_past + stats.neutral, 48);
        assert_eq!(stats.observed + stats.discarded, total_dets);
        assert!(stats.observed > 30, "most slots observed, got {stats:?}");
        // assigned hands stay within threshold of their slot's wrist
        for (frame, body) in frames.iter().zip(&clip.body_frames) {
            let (la, ra) = wrist_anchors(body, &layout, Some(&intr)).unwrap();
            for (slot, anchor) in [(&frame.left, la), (&frame.right, ra)] {
                let s = slot.as_ref().unwrap();
                if s.fill == FillSource::Observed {
                    let w = [s.coords_2d[[0, 0]], s.coords_2d[[0, 1]]];
                    assert!(dist2(w, anchor.px) <= cfg.wrist_dist_threshold);
                }
                // 3D hands are wrist-anchored in the body frame
                if s.fill != FillSource::FilledFromPast {
                    let xyz = anchor.xyz.unwrap();
                    if s.fill == FillSource::Observed {
                        assert!((s.coords_3d[[0, 0]] - xyz[0]).abs() < 1e-9);
                        assert!((s.coords_3d[[0, 2]] - xyz[2]).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(HandSelectConfig::default().validate().is_ok());
        let bad = HandSelectConfig { wrist_dist_threshold: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = HandSelectConfig { max_hands: 3, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
