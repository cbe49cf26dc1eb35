//! Skeleton-fusion action recognition.
//!
//! This crate recognizes trimmed action clips from human skeleton sequences by
//! fusing coarse body skeletons with detailed hand skeletons. The pipeline:
//!
//! 1. [`ingest`] — read dataset manifests and per-frame keypoint files, project
//!    3D bodies to the image plane, and synthesize desk-scale datasets.
//! 2. [`handprep`] — turn noisy per-frame hand detections into exactly-two-slot
//!    hand streams aligned to the body (wrist-distance filtering, minimum-cost
//!    left/right assignment, forward filling of gaps).
//! 3. [`encode`] — render a clip into one or more images (column = frame,
//!    row = joint) under several body/hand fusion layouts.
//! 4. [`model`] — image-classifier backbones (a conv-residual family and a
//!    hierarchical windowed-attention family) behind one interface, including a
//!    channel-split patch embedding that feeds multiple images into one
//!    attention backbone.
//! 5. [`train`] — one-cycle scheduled training with best-epoch selection and an
//!    LR-grid × repeats experiment driver.
//! 6. [`report`] — mean class accuracy / top-1 metrics, box-plot statistics and
//!    rendering, and best-results tables.
//!
//! Every stage is exercised by a runnable example under `examples/`; the
//! `skelfuse` binary exposes the same stages as subcommands for batch use.

pub mod clip;
pub mod encode;
pub mod error;
pub mod handprep;
pub mod ingest;
pub mod layout;
pub mod model;
pub mod nn;
pub mod report;
pub mod train;

pub mod cli;

pub use clip::{BodyFrame, CameraIntrinsics, Clip, FillSource, HandDetection, HandFrame, HandSlot};
pub use error::{Error, Result};
pub use layout::{get_layout, JointLayout};
