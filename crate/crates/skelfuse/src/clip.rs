//! Domain types shared by the whole pipeline.
//!
//! All types are immutable after construction and safe to share across
//! concurrent workers.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::JointLayout;

/// Pinhole camera intrinsics (pixels). Extrinsics are assumed identity: 3D
/// body coordinates are already expressed in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::Validation(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        Ok(Self { fx, fy, cx, cy })
    }
}

/// One body skeleton observation: `joint_count × dims` coordinates.
///
/// 3D coordinates are meters in the camera frame; 2D coordinates are pixels.
/// A frame with `valid == false` carries the coordinates substituted at
/// ingest (the nearest valid frame's pose).
#[derive(Debug, Clone, PartialEq)]
pub struct BodyFrame {
    pub coords: Array2<f64>,
    /// Seconds from clip start.
    pub timestamp: f64,
    pub valid: bool,
}

impl BodyFrame {
    pub fn new(coords: Array2<f64>, timestamp: f64, valid: bool, layout: &JointLayout) -> Result<Self> {
        if coords.nrows() != layout.joint_count || coords.ncols() != layout.dims {
            return Err(Error::Validation(format!(
                "body frame shape {}x{} does not match layout {} ({}x{})",
                coords.nrows(),
                coords.ncols(),
                layout.name,
                layout.joint_count,
                layout.dims
            )));
        }
        if valid && !coords.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("body frame coordinates".into()));
        }
        Ok(Self {
            coords,
            timestamp,
            valid,
        })
    }

    /// Coordinates of one joint as a fixed-size slice.
    pub fn joint(&self, idx: usize) -> ndarray::ArrayView1<'_, f64> {
        self.coords.row(idx)
    }
}

/// Detector handedness output. A hint only: final left/right assignment is
/// owned by hand post-processing, which matches by body-wrist distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandednessHint {
    Left,
    Right,
    Unknown,
}

/// One raw hand detection: 21-joint 2D pixels plus 21-joint 3D coordinates in
/// a hand-local metric frame (origin on the hand surface, near the wrist).
#[derive(Debug, Clone, PartialEq)]
pub struct HandDetection {
    pub handedness_hint: HandednessHint,
    /// 21×2, pixels in the full image (or patch-local before
    /// [`crate::handprep::map_detection_to_full_image`]).
    pub coords_2d: Array2<f64>,
    /// 21×3, meters, hand-local frame.
    pub coords_3d: Array2<f64>,
    /// Detector confidence in [0, 1].
    pub score: f64,
}

impl HandDetection {
    pub fn new(
        handedness_hint: HandednessHint,
        coords_2d: Array2<f64>,
        coords_3d: Array2<f64>,
        score: f64,
    ) -> Result<Self> {
        if coords_2d.nrows() != 21 || coords_2d.ncols() != 2 {
            return Err(Error::Validation(format!(
                "hand detection coords_2d must be 21x2, got {}x{}",
                coords_2d.nrows(),
                coords_2d.ncols()
            )));
        }
        if coords_3d.nrows() != 21 || coords_3d.ncols() != 3 {
            return Err(Error::Validation(format!(
                "hand detection coords_3d must be 21x3, got {}x{}",
                coords_3d.nrows(),
                coords_3d.ncols()
            )));
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::OutOfRange(format!(
                "hand detection score {score} outside [0, 1]"
            )));
        }
        Ok(Self {
            handedness_hint,
            coords_2d,
            coords_3d,
            score,
        })
    }

    /// 2D wrist position (joint 0) in pixels.
    pub fn wrist_2d(&self) -> [f64; 2] {
        [self.coords_2d[[0, 0]], self.coords_2d[[0, 1]]]
    }
}

/// How a hand slot was filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillSource {
    /// Taken from a detection in this frame.
    Observed,
    /// Copied from this side's most recent observed hand.
    FilledFromPast,
    /// Synthesized: all 21 joints placed at the body wrist.
    Neutral,
}

/// One hand occupying a left or right slot. Carries both representations so a
/// downstream run can encode either 2D or 3D hands.
#[derive(Debug, Clone, PartialEq)]
pub struct HandSlot {
    /// 21×2 pixels, full image.
    pub coords_2d: Array2<f64>,
    /// 21×3 meters. Aligned to the body frame when the body is 3D, otherwise
    /// left in the detector's hand-local frame.
    pub coords_3d: Array2<f64>,
    pub fill: FillSource,
}

/// Per-frame pair of hand slots. After forward filling both slots are present
/// in every frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HandFrame {
    pub left: Option<HandSlot>,
    pub right: Option<HandSlot>,
}

impl HandFrame {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn slot(&self, side: Side) -> Option<&HandSlot> {
        match side {
            Side::Left => self.left.as_ref(),
            Side::Right => self.right.as_ref(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];
}

/// Dataset split membership.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Val => write!(f, "val"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// A trimmed, labeled action clip: per-frame body skeletons, raw hand
/// detections, and (after post-processing) the two-slot hand stream.
///
/// All per-frame lists share one length `T >= 1`.
#[derive(Debug, Clone)]
pub struct Clip {
    pub clip_id: String,
    pub person_id: String,
    pub view_id: String,
    /// Class index, `< num_classes` of the owning manifest.
    pub label: usize,
    pub split: Split,
    pub body_frames: Vec<BodyFrame>,
    /// Raw detections per frame; a frame may have none.
    pub raw_detections: Vec<Vec<HandDetection>>,
    /// Post-processing output; `None` until hand preparation has run.
    pub hand_frames: Option<Vec<HandFrame>>,
}

impl Clip {
    /// Number of frames.
    pub fn len(&self) -> usize {
        self.body_frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.body_frames.is_empty()
    }

    /// Check the per-frame list alignment invariant.
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        let t = self.body_frames.len();
        if t == 0 {
            return Err(Error::Validation(format!(
                "clip '{}' has zero frames",
                self.clip_id
            )));
        }
        if self.raw_detections.len() != t {
            return Err(Error::FrameCountMismatch {
                clip_id: self.clip_id.clone(),
                body_frames: t,
                hand_frames: self.raw_detections.len(),
            });
        }
        if let Some(hf) = &self.hand_frames {
            if hf.len() != t {
                return Err(Error::FrameCountMismatch {
                    clip_id: self.clip_id.clone(),
                    body_frames: t,
                    hand_frames: hf.len(),
                });
            }
        }
        if self.label >= num_classes {
            return Err(Error::Validation(format!(
                "clip '{}' label {} out of range for {} classes",
                self.clip_id, self.label, num_classes
            )));
        }
        Ok(())
    }
}
