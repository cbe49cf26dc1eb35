//! Joint-layout registry.
//!
//! A [`JointLayout`] fixes the name, ordering, and dimensionality of one
//! skeleton family. Three layouts are registered:
//!
//! * `body32` — the 32-joint depth-sensor body skeleton (3D, meters). Joint
//!   order follows the sensor SDK's published enumeration, which places
//!   `wrist_left` at index 7 and `wrist_right` at index 14.
//! * `body17` — the 17-joint 2D detector skeleton (COCO keypoint order;
//!   `left_wrist` 9, `right_wrist` 10).
//! * `hand21` — the 21-joint hand skeleton; joint 0 is the wrist.

use crate::error::{Error, Result};

/// Names, ordering, and dimensionality of one skeleton family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointLayout {
    pub name: &'static str,
    pub joint_count: usize,
    pub joint_names: Vec<&'static str>,
    /// Coordinate dimensionality: 2 (pixels) or 3 (meters).
    pub dims: usize,
    pub left_wrist_idx: usize,
    pub right_wrist_idx: usize,
}

impl JointLayout {
    fn validate(&self) {
        assert_eq!(
            self.joint_names.len(),
            self.joint_count,
            "layout {}: joint_names length must equal joint_count",
            self.name
        );
        assert!(
            self.dims == 2 || self.dims == 3,
            "layout {}: dims must be 2 or 3",
            self.name
        );
        assert!(
            self.left_wrist_idx < self.joint_count && self.right_wrist_idx < self.joint_count,
            "layout {}: wrist indices must be < joint_count",
            self.name
        );
    }
}

/// Depth-sensor body joint order (32 joints, 3D).
const BODY32_NAMES: [&str; 32] = [
    "pelvis",
    "spine_navel",
    "spine_chest",
    "neck",
    "clavicle_left",
    "shoulder_left",
    "elbow_left",
    "wrist_left",
    "hand_left",
    "handtip_left",
    "thumb_left",
    "clavicle_right",
    "shoulder_right",
    "elbow_right",
    "wrist_right",
    "hand_right",
    "handtip_right",
    "thumb_right",
    "hip_left",
    "knee_left",
    "ankle_left",
    "foot_left",
    "hip_right",
    "knee_right",
    "ankle_right",
    "foot_right",
    "head",
    "nose",
    "eye_left",
    "ear_left",
    "eye_right",
    "ear_right",
];

/// COCO keypoint order (17 joints, 2D).
const BODY17_NAMES: [&str; 17] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

/// 21-joint hand skeleton; joint 0 is the wrist, then four joints per finger.
const HAND21_NAMES: [&str; 21] = [
    "wrist",
    "thumb_cmc",
    "thumb_mcp",
    "thumb_ip",
    "thumb_tip",
    "index_mcp",
    "index_pip",
    "index_dip",
    "index_tip",
    "middle_mcp",
    "middle_pip",
    "middle_dip",
    "middle_tip",
    "ring_mcp",
    "ring_pip",
    "ring_dip",
    "ring_tip",
    "pinky_mcp",
    "pinky_pip",
    "pinky_dip",
    "pinky_tip",
];

/// Wrist joint index within a `hand21` skeleton.
pub const HAND_WRIST_IDX: usize = 0;

/// Joints contributed by two `hand21` hands.
pub const HAND_JOINTS_BOTH: usize = 42;

fn body32() -> JointLayout {
    JointLayout {
        name: "body32",
        joint_count: 32,
        joint_names: BODY32_NAMES.to_vec(),
        dims: 3,
        left_wrist_idx: 7,
        right_wrist_idx: 14,
    }
}

fn body17() -> JointLayout {
    JointLayout {
        name: "body17",
        joint_count: 17,
        joint_names: BODY17_NAMES.to_vec(),
        dims: 2,
        left_wrist_idx: 9,
        right_wrist_idx: 10,
    }
}

fn hand21() -> JointLayout {
    JointLayout {
        name: "hand21",
        joint_count: 21,
        joint_names: HAND21_NAMES.to_vec(),
        dims: 3,
        left_wrist_idx: HAND_WRIST_IDX,
        right_wrist_idx: HAND_WRIST_IDX,
    }
}

/// Look up a registered layout by name.
///
/// Registered names are `body32`, `body17`, and `hand21`; anything else is an
/// [`Error::UnknownLayout`]. Repeated calls return identical content.
pub fn get_layout(name: &str) -> Result<JointLayout> {
    let layout = match name {
        "body32" => body32(),
        "body17" => body17(),
        "hand21" => hand21(),
        other => return Err(Error::UnknownLayout(other.to_string())),
    };
    layout.validate();
    Ok(layout)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn body32_layout() {
        let l = get_layout("body32").unwrap();
        assert_eq!(l.joint_count, 32);
        assert_eq!(l.dims, 3);
        assert_eq!(l.joint_names[l.left_wrist_idx], "wrist_left");
        assert_eq!(l.joint_names[l.right_wrist_idx], "wrist_right");
    }

    #[test]
    fn hand21_layout() {
        let l = get_layout("hand21").unwrap();
        assert_eq!(l.joint_count, 21);
        assert_eq!(l.joint_names[HAND_WRIST_IDX], "wrist");
    }

    #[test]
    fn body17_layout() {
        let l = get_layout("body17").unwrap();
        assert_eq!(l.joint_count, 17);
        assert_eq!(l.dims, 2);
        assert_eq!(l.joint_names[l.left_wrist_idx], "left_wrist");
        assert_eq!(l.joint_names[l.right_wrist_idx], "right_wrist");
    }

    #[test]
    fn unknown_layout_errors() {
        assert!(matches!(get_layout("foo"), Err(Error::UnknownLayout(_))));
    }

    #[test]
    fn repeated_calls_identical() {
        assert_eq!(get_layout("body32").unwrap(), get_layout("body32").unwrap());
    }

    #[test]
    fn two_hands_total_42_joints() {
        let l = get_layout("hand21").unwrap();
        assert_eq!(2 * l.joint_count, HAND_JOINTS_BOTH);
    }
}
