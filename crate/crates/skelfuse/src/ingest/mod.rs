//! Dataset ingest: manifests, keypoint files, projection, synthesis.
//!
//! A dataset is a manifest document plus one body file and one hands file per
//! clip. The manifest is a single structured-text (JSON) document; keypoint
//! files are line-delimited with one record per frame (see [`files`]).
//! Loading validates aggressively: any invariant violation is an error, never
//! a warning.

mod files;
pub mod synth;

pub use files::{
    read_body_file, read_hands_file, write_body_file, write_hands_file, write_processed_hands,
    DetectionRecord, HandsRecord, SlotName,
};
pub use synth::{generate_synthetic_dataset, SynthSpec};

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::clip::{BodyFrame, CameraIntrinsics, Clip, Split};
use crate::error::{Error, Result};
use crate::layout::{get_layout, JointLayout};

/// One clip's descriptor inside a manifest. Paths are relative to the
/// manifest's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipEntry {
    pub clip_id: String,
    pub body_path: PathBuf,
    pub hands_path: PathBuf,
    pub label: usize,
    pub split: Split,
    pub person_id: String,
    pub view_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestDoc {
    num_classes: usize,
    class_names: Vec<String>,
    layout_name: String,
    #[serde(default)]
    intrinsics: BTreeMap<String, CameraIntrinsics>,
    clips: Vec<ClipEntry>,
}

/// A fully validated dataset manifest.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub num_classes: usize,
    pub class_names: Vec<String>,
    pub layout_name: String,
    /// Optional pinhole intrinsics keyed by view id.
    pub intrinsics: BTreeMap<String, CameraIntrinsics>,
    pub clips: Vec<ClipEntry>,
    /// Directory all clip paths are resolved against.
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn layout(&self) -> JointLayout {
        get_layout(&self.layout_name).expect("validated at load")
    }

    pub fn entry(&self, clip_id: &str) -> Result<&ClipEntry> {
        self.clips
            .iter()
            .find(|c| c.clip_id == clip_id)
            .ok_or_else(|| Error::Validation(format!("clip '{clip_id}' not in manifest")))
    }

    pub fn intrinsics_for(&self, view_id: &str) -> Option<CameraIntrinsics> {
        self.intrinsics.get(view_id).copied()
    }

    pub fn body_path(&self, entry: &ClipEntry) -> PathBuf {
        self.root.join(&entry.body_path)
    }

    pub fn hands_path(&self, entry: &ClipEntry) -> PathBuf {
        self.root.join(&entry.hands_path)
    }

    pub fn clip_ids_for_split(&self, split: Split) -> Vec<&str> {
        self.clips
            .iter()
            .filter(|c| c.split == split)
            .map(|c| c.clip_id.as_str())
            .collect()
    }
}

/// Load and fully validate a dataset manifest.
///
/// Validation covers: a registered `layout_name`, `class_names` matching
/// `num_classes`, labels within range, unique clip ids, positive focal
/// lengths, and existence of every referenced keypoint file.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: ManifestDoc = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let root = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));

    get_layout(&doc.layout_name)?;
    if doc.num_classes == 0 {
        return Err(Error::Validation("num_classes must be positive".into()));
    }
    if doc.class_names.len() != doc.num_classes {
        return Err(Error::Validation(format!(
            "class_names has {} entries but num_classes is {}",
            doc.class_names.len(),
            doc.num_classes
        )));
    }
    for (view, intr) in &doc.intrinsics {
        CameraIntrinsics::new(intr.fx, intr.fy, intr.cx, intr.cy)
            .map_err(|e| Error::Validation(format!("intrinsics for view '{view}': {e}")))?;
    }
    let mut seen = HashSet::new();
    for entry in &doc.clips {
        if !seen.insert(entry.clip_id.as_str()) {
            return Err(Error::Validation(format!(
                "duplicate clip_id '{}'",
                entry.clip_id
            )));
        }
        if entry.label >= doc.num_classes {
            return Err(Error::Validation(format!(
                "clip '{}' label {} out of range for {} classes",
                entry.clip_id, entry.label, doc.num_classes
            )));
        }
        for rel in [&entry.body_path, &entry.hands_path] {
            let p = root.join(rel);
            if !p.is_file() {
                return Err(Error::MissingFile(p));
            }
        }
    }
    Ok(DatasetManifest {
        num_classes: doc.num_classes,
        class_names: doc.class_names,
        layout_name: doc.layout_name,
        intrinsics: doc.intrinsics,
        clips: doc.clips,
        root,
    })
}

/// Write a manifest document. Used by the synthesizer and format converters.
pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    let doc = ManifestDoc {
        num_classes: manifest.num_classes,
        class_names: manifest.class_names.clone(),
        layout_name: manifest.layout_name.clone(),
        intrinsics: manifest.intrinsics.clone(),
        clips: manifest.clips.clone(),
    };
    let text = serde_json::to_string_pretty(&doc).expect("manifest serializes");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Load one clip with aligned per-frame lists.
///
/// Frames flagged invalid take the nearest earlier valid frame's coordinates
/// (leading invalid frames take the first valid frame's); a clip with zero
/// valid frames is rejected. Errors if the body and hands files disagree on
/// frame count.
pub fn load_clip(manifest: &DatasetManifest, clip_id: &str) -> Result<Clip> {
    let entry = manifest.entry(clip_id)?;
    let layout = manifest.layout();
    let body_path = manifest.body_path(entry);
    let raw_frames = read_body_file(&body_path, &layout)?;
    if raw_frames.is_empty() {
        return Err(Error::Validation(format!(
            "clip '{clip_id}' body file has zero frames"
        )));
    }
    let first_valid = raw_frames
        .iter()
        .position(|(_, valid, _)| *valid)
        .ok_or_else(|| {
            Error::Validation(format!("clip '{clip_id}' has zero valid body frames"))
        })?;

    let mut body_frames = Vec::with_capacity(raw_frames.len());
    let mut last_valid: Array2<f64> = raw_frames[first_valid].2.clone();
    for (t, valid, coords) in raw_frames {
        let coords = if valid {
            last_valid = coords.clone();
            coords
        } else {
            last_valid.clone()
        };
        body_frames.push(BodyFrame::new(coords, t, valid, &layout)?);
    }

    let hands_path = manifest.hands_path(entry);
    let hands = read_hands_file(&hands_path)?;
    if hands.per_frame.len() != body_frames.len() {
        return Err(Error::FrameCountMismatch {
            clip_id: clip_id.to_string(),
            body_frames: body_frames.len(),
            hand_frames: hands.per_frame.len(),
        });
    }

    let clip = Clip {
        clip_id: entry.clip_id.clone(),
        person_id: entry.person_id.clone(),
        view_id: entry.view_id.clone(),
        label: entry.label,
        split: entry.split,
        body_frames,
        raw_detections: hands.per_frame,
        hand_frames: hands.hand_frames,
    };
    clip.validate(manifest.num_classes)?;
    Ok(clip)
}

/// Project one 3D point (meters, camera frame) to pixels with the pinhole
/// model: `u = fx*x/z + cx`, `v = fy*y/z + cy`.
pub fn project_point(p: [f64; 3], intr: &CameraIntrinsics) -> Result<[f64; 2]> {
    let [x, y, z] = p;
    if z <= 0.0 {
        return Err(Error::NonPositiveDepth { joint: 0, z });
    }
    Ok([intr.fx * x / z + intr.cx, intr.fy * y / z + intr.cy])
}

/// Project a 3D body frame into the 2D image plane.
///
/// Requires every joint depth to be strictly positive.
pub fn project_body_3d_to_2d(frame: &BodyFrame, intr: &CameraIntrinsics) -> Result<BodyFrame> {
    if frame.coords.ncols() != 3 {
        return Err(Error::Validation(format!(
            "projection expects 3D coordinates, got {} dims",
            frame.coords.ncols()
        )));
    }
    let joints = frame.coords.nrows();
    let mut out = Array2::zeros((joints, 2));
    for j in 0..joints {
        let z = frame.coords[[j, 2]];
        if z <= 0.0 {
            return Err(Error::NonPositiveDepth { joint: j, z });
        }
        out[[j, 0]] = intr.fx * frame.coords[[j, 0]] / z + intr.cx;
        out[[j, 1]] = intr.fy * frame.coords[[j, 1]] / z + intr.cy;
    }
    Ok(BodyFrame {
        coords: out,
        timestamp: frame.timestamp,
        valid: frame.valid,
    })
}
