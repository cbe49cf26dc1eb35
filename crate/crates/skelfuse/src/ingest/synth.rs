//! Synthetic desk-scale dataset generator.
//!
//! Classes come in two kinds:
//!
//! * **body-distinguishable** classes move distinct sets of body joints with
//!   distinct frequencies — separable from the body stream alone;
//! * **hand-only pairs** share one body motion stream (byte-identical files
//!   for the same clip index) and differ only in finger trajectories, so a
//!   body-only model cannot tell the pair members apart.
//!
//! Everything is derived from the seed through per-stream counter RNGs, so
//! repeated generation is byte-identical.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clip::{CameraIntrinsics, HandednessHint, Split};
use crate::error::{Error, Result};
use crate::ingest::files::{write_body_file, write_hands_file, DetectionRecord, HandsRecord};
use crate::ingest::{write_manifest, ClipEntry, DatasetManifest};
use crate::layout::get_layout;

/// Parameters of the synthetic dataset.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub num_classes: usize,
    /// Clips generated per class; at least 3 so train/val/test are non-empty.
    pub clips_per_class: usize,
    /// Frames per clip (T).
    pub frames: usize,
    pub seed: u64,
    /// Number of hand-only pairs; defaults to `num_classes / 4`. Each pair
    /// consumes the two highest remaining class indices.
    pub hand_pairs: Option<usize>,
    /// Probability a hand detection is dropped in a frame (per side).
    pub detection_dropout: f64,
    /// Probability a far-away spurious detection is added to a frame.
    pub distractor_rate: f64,
}

impl SynthSpec {
    pub fn new(num_classes: usize, clips_per_class: usize, frames: usize, seed: u64) -> Self {
        Self {
            num_classes,
            clips_per_class,
            frames,
            seed,
            hand_pairs: None,
            detection_dropout: 0.08,
            distractor_rate: 0.05,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Validation("num_classes must be >= 2".into()));
        }
        if self.frames < 4 {
            return Err(Error::Validation("frames must be >= 4".into()));
        }
        if self.clips_per_class < 3 {
            return Err(Error::Validation(
                "clips_per_class must be >= 3 so every split is non-empty".into(),
            ));
        }
        if 2 * self.pairs() > self.num_classes {
            return Err(Error::Validation(format!(
                "{} hand pairs need {} classes but only {} exist",
                self.pairs(),
                2 * self.pairs(),
                self.num_classes
            )));
        }
        Ok(())
    }

    pub fn pairs(&self) -> usize {
        self.hand_pairs.unwrap_or(self.num_classes / 4)
    }

    /// Classes below this index are body-distinguishable.
    pub fn body_classes(&self) -> usize {
        self.num_classes - 2 * self.pairs()
    }

    /// For pair members, the lower class index of the pair; otherwise the
    /// class itself. Body streams are derived from this canonical index.
    fn canonical_body_class(&self, class: usize) -> usize {
        let body = self.body_classes();
        if class < body {
            class
        } else {
            body + (class - body) / 2 * 2
        }
    }
}

fn mix(parts: &[u64]) -> u64 {
    // splitmix64 over the concatenated parts
    let mut h = 0x9e37_79b9_7f4a_7c15u64;
    for &p in parts {
        h ^= p;
        h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h ^= h >> 27;
        h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    h
}

const STREAM_BODY: u64 = 1;
const STREAM_HANDS: u64 = 2;
const STREAM_DETECT: u64 = 3;
const STREAM_BODY_MOTIF: u64 = 4;
const STREAM_HAND_MOTIF: u64 = 5;

/// Neutral standing pose, (x, y) meters relative to the chest; y grows
/// downward to match image coordinates. Depth is added at generation time.
const REST_POSE_XY: [[f64; 2]; 32] = [
    [0.00, 0.30],   // pelvis
    [0.00, 0.15],   // spine_navel
    [0.00, 0.00],   // spine_chest
    [0.00, -0.25],  // neck
    [0.08, -0.22],  // clavicle_left
    [0.22, -0.20],  // shoulder_left
    [0.32, 0.02],   // elbow_left
    [0.40, 0.22],   // wrist_left
    [0.43, 0.26],   // hand_left
    [0.46, 0.30],   // handtip_left
    [0.41, 0.28],   // thumb_left
    [-0.08, -0.22], // clavicle_right
    [-0.22, -0.20], // shoulder_right
    [-0.32, 0.02],  // elbow_right
    [-0.40, 0.22],  // wrist_right
    [-0.43, 0.26],  // hand_right
    [-0.46, 0.30],  // handtip_right
    [-0.41, 0.28],  // thumb_right
    [0.10, 0.35],   // hip_left
    [0.12, 0.70],   // knee_left
    [0.13, 1.05],   // ankle_left
    [0.18, 1.10],   // foot_left
    [-0.10, 0.35],  // hip_right
    [-0.12, 0.70],  // knee_right
    [-0.13, 1.05],  // ankle_right
    [-0.18, 1.10],  // foot_right
    [0.00, -0.45],  // head
    [0.00, -0.42],  // nose
    [0.03, -0.46],  // eye_left
    [0.07, -0.45],  // ear_left
    [-0.03, -0.46], // eye_right
    [-0.07, -0.45], // ear_right
];

const BODY_DEPTH: f64 = 2.5;

fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics {
        fx: 500.0,
        fy: 500.0,
        cx: 320.0,
        cy: 240.0,
    }
}

/// Per-class body motion pattern: which joints move, in which direction, at
/// which shared frequency.
struct BodyMotif {
    freq: f64,
    /// (amplitude, dir_x, dir_y, phase) per joint.
    per_joint: Vec<(f64, f64, f64, f64)>,
}

fn body_motif(spec: &SynthSpec, canonical_class: usize) -> BodyMotif {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[
        spec.seed,
        STREAM_BODY_MOTIF,
        canonical_class as u64,
    ]));
    let freq = 1.0 + canonical_class as f64;
    let per_joint = (0..32)
        .map(|_| {
            let moving = rng.gen_bool(0.5);
            let amp = if moving {
                rng.gen_range(0.10..0.22)
            } else {
                rng.gen_range(0.0..0.03)
            };
            let angle = rng.gen_range(0.0..TAU);
            let phase = rng.gen_range(0.0..TAU);
            (amp, angle.cos(), angle.sin(), phase)
        })
        .collect();
    BodyMotif { freq, per_joint }
}

/// Per-class finger motion pattern. Finger f follows
/// `centers[f] + amp * sin(...)`, so a class is characterised by its
/// resting pose as well as its dynamics. Note the part-wise min-max
/// normalisation in the encoder discards absolute hand extent, so only
/// relative structure (inter-finger spread, temporal pattern) can carry a
/// class signal.
struct HandMotif {
    freq: f64,
    base_phase: f64,
    /// Additional phase per finger index; spreads the curl pattern so two
    /// classes with the same frequency still look different.
    finger_spread: f64,
    centers: [f64; 5],
    amp: f64,
}

fn hand_motif(spec: &SynthSpec, class: usize) -> HandMotif {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[spec.seed, STREAM_HAND_MOTIF, class as u64]));
    let base_phase = rng.gen_range(0.0..TAU);
    let body = spec.body_classes();
    let (freq, finger_spread, centers, amp) = if class >= body {
        // Pair members share a body stream, so their hand patterns carry
        // the whole class signal. Give the two members contrasting poses
        // and motions: a slow unison grip (all fingers curl together) vs
        // a held splay (fingers staggered) with a fast shallow ripple.
        let k = (class - body) / 2;
        if (class - body) % 2 == 0 {
            (1.5 + k as f64, rng.gen_range(0.0..0.25), [0.45; 5], 0.35)
        } else {
            (
                5.0 + 1.5 * k as f64,
                rng.gen_range(2.0..2.6),
                [0.15, 0.35, 0.55, 0.75, 0.90],
                0.10,
            )
        }
    } else {
        (
            1.0 + (class as f64) * 1.5,
            rng.gen_range(0.6..2.6),
            [0.5; 5],
            0.5,
        )
    };
    HandMotif {
        freq,
        base_phase,
        finger_spread,
        centers,
        amp,
    }
}

/// Canonical hand-local skeleton: wrist at the origin, five finger chains in
/// the local x-y plane. `side_sign` mirrors x for the left (+1) vs right (-1)
/// hand. `curl[f]` in [0, 1] scales finger extension.
fn hand_local_pose(side_sign: f64, curl: &[f64; 5]) -> Array2<f64> {
    let finger_angles: [f64; 5] = [-1.05, -0.35, 0.0, 0.35, 0.70]; // thumb..pinky, radians
    let segment_lengths = [
        [0.030, 0.030, 0.025, 0.020], // thumb
        [0.070, 0.030, 0.025, 0.020],
        [0.075, 0.032, 0.026, 0.020],
        [0.070, 0.030, 0.025, 0.020],
        [0.060, 0.026, 0.022, 0.018],
    ];
    let mut coords = Array2::zeros((21, 3));
    for (f, (&angle, lengths)) in finger_angles.iter().zip(&segment_lengths).enumerate() {
        let dir = [side_sign * angle.cos(), -angle.sin().abs() - 0.4];
        let norm = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
        let dir = [dir[0] / norm, dir[1] / norm];
        let mut pos = [0.0f64, 0.0, 0.0];
        let scale = 0.35 + 0.65 * curl[f];
        for (seg, &len) in lengths.iter().enumerate() {
            pos[0] += dir[0] * len * scale;
            pos[1] += dir[1] * len * scale;
            pos[2] += 0.002 * (seg as f64);
            let joint = 1 + f * 4 + seg;
            coords[[joint, 0]] = pos[0];
            coords[[joint, 1]] = pos[1];
            coords[[joint, 2]] = pos[2];
        }
    }
    coords
}

struct ClipStreams {
    body: Vec<(f64, bool, Array2<f64>)>,
    /// True pose (ignores the invalid flag); hands track these wrists.
    true_wrists: Vec<([f64; 3], [f64; 3])>,
}

fn generate_body_stream(spec: &SynthSpec, class: usize, clip_idx: usize) -> ClipStreams {
    let canonical = spec.canonical_body_class(class);
    let motif = body_motif(spec, canonical);
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[
        spec.seed,
        STREAM_BODY,
        canonical as u64,
        clip_idx as u64,
    ]));
    let clip_phase: f64 = rng.gen_range(0.0..TAU);
    let amp_jitter: f64 = rng.gen_range(0.9..1.1);
    let t_count = spec.frames;
    let mut body = Vec::with_capacity(t_count);
    let mut true_wrists = Vec::with_capacity(t_count);
    let mut any_valid = false;
    for ti in 0..t_count {
        let tau = ti as f64 / t_count as f64;
        let mut coords = Array2::zeros((32, 3));
        for j in 0..32 {
            let (amp, dx, dy, phase) = motif.per_joint[j];
            let osc = (TAU * motif.freq * tau + phase + clip_phase).sin() * amp * amp_jitter;
            let x = REST_POSE_XY[j][0] + dx * osc + rng.gen_range(-0.004..0.004);
            let y = REST_POSE_XY[j][1] + dy * osc + rng.gen_range(-0.004..0.004);
            let z = BODY_DEPTH + 0.05 * (TAU * motif.freq * tau + phase).cos()
                + rng.gen_range(-0.004..0.004);
            coords[[j, 0]] = x;
            coords[[j, 1]] = y;
            coords[[j, 2]] = z;
        }
        let left_wrist = [coords[[7, 0]], coords[[7, 1]], coords[[7, 2]]];
        let right_wrist = [coords[[14, 0]], coords[[14, 1]], coords[[14, 2]]];
        true_wrists.push((left_wrist, right_wrist));
        // force the final frame valid so a clip can never be all-invalid
        let valid = !rng.gen_bool(0.03) || (ti + 1 == t_count && !any_valid);
        any_valid |= valid;
        let stored = if valid {
            coords
        } else {
            Array2::zeros((32, 3))
        };
        body.push((ti as f64 / 30.0, valid, stored));
    }
    ClipStreams { body, true_wrists }
}

fn generate_hands_stream(
    spec: &SynthSpec,
    class: usize,
    clip_idx: usize,
    streams: &ClipStreams,
    intr: &CameraIntrinsics,
) -> Vec<HandsRecord> {
    let motif = hand_motif(spec, class);
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[
        spec.seed,
        STREAM_HANDS,
        class as u64,
        clip_idx as u64,
    ]));
    let mut det_rng = ChaCha8Rng::seed_from_u64(mix(&[
        spec.seed,
        STREAM_DETECT,
        class as u64,
        clip_idx as u64,
    ]));
    let clip_phase: f64 = rng.gen_range(0.0..TAU);
    let t_count = spec.frames;
    let mut records = Vec::with_capacity(t_count);
    for ti in 0..t_count {
        let tau = ti as f64 / t_count as f64;
        let (left_wrist, right_wrist) = streams.true_wrists[ti];
        let mut detections = Vec::new();
        for (side_sign, wrist, truth_hint) in [
            (1.0, left_wrist, HandednessHint::Left),
            (-1.0, right_wrist, HandednessHint::Right),
        ] {
            let mut curl = [0.0f64; 5];
            for (f, c) in curl.iter_mut().enumerate() {
                let phase = motif.base_phase + motif.finger_spread * f as f64 + clip_phase;
                *c = (motif.centers[f] + motif.amp * (TAU * motif.freq * tau + phase).sin())
                    .clamp(0.0, 1.0);
            }
            let local = hand_local_pose(side_sign, &curl);
            let dropped = det_rng.gen_bool(spec.detection_dropout);
            // rngs below must advance identically whether or not the
            // detection is kept, so dropout does not reshuffle later frames
            let mut coords_2d = Vec::with_capacity(42);
            let mut coords_3d = Vec::with_capacity(63);
            for j in 0..21 {
                let world = [
                    local[[j, 0]] + wrist[0],
                    local[[j, 1]] + wrist[1],
                    local[[j, 2]] + wrist[2],
                ];
                let px = [
                    intr.fx * world[0] / world[2] + intr.cx + rng.gen_range(-1.0..1.0),
                    intr.fy * world[1] / world[2] + intr.cy + rng.gen_range(-1.0..1.0),
                ];
                coords_2d.extend_from_slice(&px);
                // detector-local frame: origin offset sits "on the hand"
                coords_3d.push(local[[j, 0]] + 0.004 + rng.gen_range(-0.0015..0.0015));
                coords_3d.push(local[[j, 1]] - 0.003 + rng.gen_range(-0.0015..0.0015));
                coords_3d.push(local[[j, 2]] + 0.002 + rng.gen_range(-0.0015..0.0015));
            }
            let score = det_rng.gen_range(0.55..0.98);
            let hint_roll: f64 = det_rng.gen();
            let hint = if hint_roll < 0.80 {
                truth_hint
            } else if hint_roll < 0.95 {
                HandednessHint::Unknown
            } else if truth_hint == HandednessHint::Left {
                HandednessHint::Right
            } else {
                HandednessHint::Left
            };
            if !dropped {
                detections.push(DetectionRecord {
                    handedness_hint: hint,
                    score,
                    coords_2d,
                    coords_3d,
                    slot: None,
                    fill_source: None,
                });
            }
        }
        if det_rng.gen_bool(spec.distractor_rate) {
            // spurious far detection: must exceed any sane wrist threshold
            let angle: f64 = det_rng.gen_range(0.0..TAU);
            let dist: f64 = det_rng.gen_range(400.0..700.0);
            let base = [
                intr.fx * left_wrist[0] / left_wrist[2] + intr.cx + dist * angle.cos(),
                intr.fy * left_wrist[1] / left_wrist[2] + intr.cy + dist * angle.sin(),
            ];
            let local = hand_local_pose(1.0, &[0.5; 5]);
            let mut coords_2d = Vec::with_capacity(42);
            let mut coords_3d = Vec::with_capacity(63);
            for j in 0..21 {
                coords_2d.push(base[0] + local[[j, 0]] * 200.0);
                coords_2d.push(base[1] + local[[j, 1]] * 200.0);
                coords_3d.push(local[[j, 0]]);
                coords_3d.push(local[[j, 1]]);
                coords_3d.push(local[[j, 2]]);
            }
            detections.push(DetectionRecord {
                handedness_hint: HandednessHint::Unknown,
                score: det_rng.gen_range(0.5..0.9),
                coords_2d,
                coords_3d,
                slot: None,
                fill_source: None,
            });
        }
        // occasionally shuffle detection order so slot assignment cannot
        // rely on it
        if detections.len() > 1 && det_rng.gen_bool(0.5) {
            detections.reverse();
        }
        records.push(HandsRecord { detections });
    }
    records
}

fn split_for(clip_idx: usize, n: usize) -> Split {
    let n_val = (n / 5).max(1);
    let n_test = (n / 5).max(1);
    let n_train = n - n_val - n_test;
    if clip_idx < n_train {
        Split::Train
    } else if clip_idx < n_train + n_val {
        Split::Val
    } else {
        Split::Test
    }
}

/// Generate a synthetic dataset under `out_dir` and return its manifest.
///
/// Deterministic: the same spec produces byte-identical files. Classes
/// `0..body_classes` are body-distinguishable; the remaining classes form
/// hand-only pairs whose body files are byte-identical within the pair for
/// equal clip indices.
pub fn generate_synthetic_dataset(spec: &SynthSpec, out_dir: &Path) -> Result<DatasetManifest> {
    spec.validate()?;
    let layout = get_layout("body32").expect("registered");
    let clips_dir = out_dir.join("clips");
    std::fs::create_dir_all(&clips_dir).map_err(|e| Error::io(&clips_dir, e))?;
    let intr = default_intrinsics();

    let mut entries = Vec::new();
    let body_classes = spec.body_classes();
    for class in 0..spec.num_classes {
        for k in 0..spec.clips_per_class {
            let clip_id = format!("c{class:02}_{k:03}");
            let body_rel = format!("clips/{clip_id}.body.jsonl");
            let hands_rel = format!("clips/{clip_id}.hands.jsonl");
            let streams = generate_body_stream(spec, class, k);
            write_body_file(&out_dir.join(&body_rel), &layout, &streams.body)?;
            let hands = generate_hands_stream(spec, class, k, &streams, &intr);
            write_hands_file(&out_dir.join(&hands_rel), &hands)?;
            entries.push(ClipEntry {
                clip_id,
                body_path: body_rel.into(),
                hands_path: hands_rel.into(),
                label: class,
                split: split_for(k, spec.clips_per_class),
                person_id: format!("p{:02}", k % 5),
                view_id: "cam0".to_string(),
            });
        }
    }

    let class_names = (0..spec.num_classes)
        .map(|c| {
            if c < body_classes {
                format!("body_{c:02}")
            } else {
                let pair = (c - body_classes) / 2;
                let member = if (c - body_classes) % 2 == 0 { 'a' } else { 'b' };
                format!("pair_{pair:02}_{member}")
            }
        })
        .collect();

    let manifest = DatasetManifest {
        num_classes: spec.num_classes,
        class_names,
        layout_name: "body32".to_string(),
        intrinsics: BTreeMap::from([("cam0".to_string(), intr)]),
        clips: entries,
        root: out_dir.to_path_buf(),
    };
    write_manifest(&out_dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
