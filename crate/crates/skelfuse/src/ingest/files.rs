//! Line-delimited keypoint file formats.
//!
//! Both keypoint files open with a single header record naming the layout,
//! followed by one record per frame:
//!
//! * body file: `{"layout_name":...,"joint_count":...,"dims":...}` then
//!   `{"t":<seconds>,"valid":<bool>,"coords":[joint_count*dims floats]}`
//!   (row-major by joint);
//! * hands file: `{"layout_name":"hand21"}` then
//!   `{"detections":[{"handedness_hint":...,"score":...,"coords_2d":[42],
//!   "coords_3d":[63]}]}`.
//!
//! Hand post-processing writes the same format back with two extra fields per
//! detection (`slot`, `fill_source`); a file in which every frame carries
//! exactly one left-slot and one right-slot entry is recognized as processed
//! and also yields the per-frame hand stream on load.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::clip::{FillSource, HandDetection, HandFrame, HandSlot, HandednessHint};
use crate::error::{Error, Result};
use crate::layout::JointLayout;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyHeader {
    pub layout_name: String,
    pub joint_count: usize,
    pub dims: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyRecord {
    pub t: f64,
    pub valid: bool,
    pub coords: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandsHeader {
    pub layout_name: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub handedness_hint: HandednessHint,
    pub score: f64,
    pub coords_2d: Vec<f64>,
    pub coords_3d: Vec<f64>,
    /// Present only in processed files: which slot this entry occupies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<SlotName>,
    /// Present only in processed files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fill_source: Option<FillSource>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotName {
    Left,
    Right,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandsRecord {
    pub detections: Vec<DetectionRecord>,
}

fn parse_err(path: &Path, line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: format!("line {line}: {msg}"),
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let _ = i;
        lines.push(line);
    }
    Ok(lines)
}

/// Read a body keypoint file. Returns `(timestamp, valid, coords)` triples;
/// coordinates of invalid frames are passed through as stored.
pub fn read_body_file(path: &Path, layout: &JointLayout) -> Result<Vec<(f64, bool, Array2<f64>)>> {
    let lines = read_lines(path)?;
    if lines.is_empty() {
        return Err(parse_err(path, 1, "empty body file (missing header)"));
    }
    let header: BodyHeader =
        serde_json::from_str(&lines[0]).map_err(|e| parse_err(path, 1, e))?;
    if header.layout_name != layout.name
        || header.joint_count != layout.joint_count
        || header.dims != layout.dims
    {
        return Err(Error::Validation(format!(
            "body file {} declares layout {}/{}j/{}d but manifest expects {}/{}j/{}d",
            path.display(),
            header.layout_name,
            header.joint_count,
            header.dims,
            layout.name,
            layout.joint_count,
            layout.dims
        )));
    }
    let expect = layout.joint_count * layout.dims;
    let mut frames = Vec::with_capacity(lines.len() - 1);
    for (i, line) in lines.iter().enumerate().skip(1) {
        let rec: BodyRecord = serde_json::from_str(line).map_err(|e| parse_err(path, i + 1, e))?;
        if rec.coords.len() != expect {
            return Err(parse_err(
                path,
                i + 1,
                format!("expected {} coords, got {}", expect, rec.coords.len()),
            ));
        }
        let coords = Array2::from_shape_vec((layout.joint_count, layout.dims), rec.coords)
            .expect("shape checked above");
        frames.push((rec.t, rec.valid, coords));
    }
    Ok(frames)
}

pub fn write_body_file(
    path: &Path,
    layout: &JointLayout,
    frames: &[(f64, bool, Array2<f64>)],
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = BodyHeader {
        layout_name: layout.name.to_string(),
        joint_count: layout.joint_count,
        dims: layout.dims,
    };
    let mut write_line = |value: String| -> Result<()> {
        writeln!(w, "{value}").map_err(|e| Error::io(path, e))
    };
    write_line(serde_json::to_string(&header).expect("header serializes"))?;
    for (t, valid, coords) in frames {
        let rec = BodyRecord {
            t: *t,
            valid: *valid,
            coords: coords.iter().copied().collect(),
        };
        write_line(serde_json::to_string(&rec).expect("record serializes"))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Per-frame parse result of a hands file.
pub struct HandsFileContent {
    pub per_frame: Vec<Vec<HandDetection>>,
    /// Present when the file is a processed stream (every frame has exactly
    /// one left and one right slotted entry).
    pub hand_frames: Option<Vec<HandFrame>>,
}

fn detection_from_record(rec: &DetectionRecord, path: &Path, line: usize) -> Result<HandDetection> {
    if rec.coords_2d.len() != 42 {
        return Err(parse_err(
            path,
            line,
            format!("coords_2d must hold 42 floats, got {}", rec.coords_2d.len()),
        ));
    }
    if rec.coords_3d.len() != 63 {
        return Err(parse_err(
            path,
            line,
            format!("coords_3d must hold 63 floats, got {}", rec.coords_3d.len()),
        ));
    }
    let c2 = Array2::from_shape_vec((21, 2), rec.coords_2d.clone()).expect("len checked");
    let c3 = Array2::from_shape_vec((21, 3), rec.coords_3d.clone()).expect("len checked");
    HandDetection::new(rec.handedness_hint, c2, c3, rec.score)
}

pub fn read_hands_file(path: &Path) -> Result<HandsFileContent> {
    let lines = read_lines(path)?;
    if lines.is_empty() {
        return Err(parse_err(path, 1, "empty hands file (missing header)"));
    }
    let header: HandsHeader =
        serde_json::from_str(&lines[0]).map_err(|e| parse_err(path, 1, e))?;
    if header.layout_name != "hand21" {
        return Err(Error::Validation(format!(
            "hands file {} declares layout {}, expected hand21",
            path.display(),
            header.layout_name
        )));
    }
    let mut per_frame = Vec::with_capacity(lines.len() - 1);
    let mut slots: Vec<Option<HandFrame>> = Vec::with_capacity(lines.len() - 1);
    for (i, line) in lines.iter().enumerate().skip(1) {
        let rec: HandsRecord = serde_json::from_str(line).map_err(|e| parse_err(path, i + 1, e))?;
        let mut dets = Vec::with_capacity(rec.detections.len());
        let mut frame = HandFrame::empty();
        let mut slotted = 0usize;
        for d in &rec.detections {
            let det = detection_from_record(d, path, i + 1)?;
            if let (Some(slot), Some(fill)) = (d.slot, d.fill_source) {
                slotted += 1;
                let hand = HandSlot {
                    coords_2d: det.coords_2d.clone(),
                    coords_3d: det.coords_3d.clone(),
                    fill,
                };
                match slot {
                    SlotName::Left => frame.left = Some(hand),
                    SlotName::Right => frame.right = Some(hand),
                }
            }
            dets.push(det);
        }
        let processed =
            slotted == rec.detections.len() && frame.left.is_some() && frame.right.is_some();
        slots.push(processed.then_some(frame));
        per_frame.push(dets);
    }
    let hand_frames = if !slots.is_empty() && slots.iter().all(|s| s.is_some()) {
        Some(slots.into_iter().map(|s| s.unwrap()).collect())
    } else {
        None
    };
    Ok(HandsFileContent {
        per_frame,
        hand_frames,
    })
}

pub fn write_hands_file(path: &Path, frames: &[HandsRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = HandsHeader {
        layout_name: "hand21".to_string(),
    };
    writeln!(w, "{}", serde_json::to_string(&header).expect("header serializes"))
        .map_err(|e| Error::io(path, e))?;
    for rec in frames {
        writeln!(w, "{}", serde_json::to_string(rec).expect("record serializes"))
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Serialize a processed two-slot hand stream back into the hands-file format.
pub fn write_processed_hands(path: &Path, frames: &[HandFrame]) -> Result<()> {
    let records: Vec<HandsRecord> = frames
        .iter()
        .map(|frame| {
            let mut detections = Vec::with_capacity(2);
            for (slot_name, slot) in [
                (SlotName::Left, frame.left.as_ref()),
                (SlotName::Right, frame.right.as_ref()),
            ] {
                let slot = slot.expect("processed hand frames have both slots present");
                detections.push(DetectionRecord {
                    handedness_hint: match slot_name {
                        SlotName::Left => HandednessHint::Left,
                        SlotName::Right => HandednessHint::Right,
                    },
                    score: 1.0,
                    coords_2d: slot.coords_2d.iter().copied().collect(),
                    coords_3d: slot.coords_3d.iter().copied().collect(),
                    slot: Some(slot_name),
                    fill_source: Some(slot.fill),
                });
            }
            HandsRecord { detections }
        })
        .collect();
    write_hands_file(path, &records)
}
