//! Clip-to-image encoding and body/hand fusion layouts.
//!
//! A clip becomes an image whose columns are frames and whose rows are joints;
//! the three channels carry the normalized coordinates (2D data leaves the
//! third channel zero). Fusion modes differ in how body and hand rows share
//! the picture:
//!
//! * `body_only` — 32 (or 17) body rows, no hands;
//! * `naive_concat` — body rows, then right hand, then left hand (74 rows for
//!   a 3D body), resized as one image;
//! * `scaled_stack` — body resized to the full input size, hands resized to
//!   `s`·42 rows and stacked below, then the stack is resized back;
//! * `multi_image_2` — separate body image and 42-row hands image;
//! * `multi_image_3` — separate body, right-hand and left-hand images.
//!
//! Every part is min-max normalized independently over the whole clip, so
//! rescaling one part never changes another part's pixels.

use std::fmt;
use std::path::Path;

use ndarray::{Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::clip::Clip;
use crate::error::{Error, Result};
use crate::layout::JointLayout;

/// Declared numeric range of an encoded image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueRange {
    /// Values in [0, 1].
    Unit,
    /// Values in [0, 255].
    Byte,
}

impl ValueRange {
    pub fn max(self) -> f64 {
        match self {
            ValueRange::Unit => 1.0,
            ValueRange::Byte => 255.0,
        }
    }
}

impl std::str::FromStr for ValueRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown value range {s:?}")))
    }
}

/// Which skeleton part a row band holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartName {
    Body,
    RightHand,
    LeftHand,
}

impl fmt::Display for PartName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PartName::Body => "body",
            PartName::RightHand => "right_hand",
            PartName::LeftHand => "left_hand",
        };
        f.write_str(s)
    }
}

/// A contiguous run of rows holding one part. `fraction` is the exact height
/// share at fusion time; it survives resizes unchanged while `rows` are
/// remapped, so area ratios like 32/74 can be asserted without rounding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub part: PartName,
    /// [start, end) in current image rows.
    pub rows: (usize, usize),
    /// [start, end) as exact fractions of the height.
    pub fraction: (f64, f64),
}

/// One encoded clip image: 3×H×W values in `value_range`, with `bands`
/// describing which rows belong to which part.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedImage {
    /// C×H×W, C == 3.
    pub data: Array3<f64>,
    pub value_range: ValueRange,
    pub bands: Vec<Band>,
}

impl EncodedImage {
    pub fn new(data: Array3<f64>, value_range: ValueRange, bands: Vec<Band>) -> Result<Self> {
        let img = Self { data, value_range, bands };
        img.validate()?;
        Ok(img)
    }

    pub fn validate(&self) -> Result<()> {
        let (c, h, _w) = self.data.dim();
        if c != 3 {
            return Err(Error::Validation(format!(
                "encoded image must have 3 channels, got {c}"
            )));
        }
        let max = self.value_range.max();
        if self.data.iter().any(|&v| !v.is_finite() || v < 0.0 || v > max) {
            return Err(Error::OutOfRange(format!(
                "encoded image values must lie in [0, {max}]"
            )));
        }
        let mut row = 0usize;
        for band in &self.bands {
            if band.rows.0 != row || band.rows.1 < band.rows.0 {
                return Err(Error::Validation(format!(
                    "bands must partition rows; found gap or overlap at row {row}"
                )));
            }
            row = band.rows.1;
        }
        if row != h {
            return Err(Error::Validation(format!(
                "bands cover {row} rows but image has {h}"
            )));
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.data.dim().0
    }

    pub fn height(&self) -> usize {
        self.data.dim().1
    }

    pub fn width(&self) -> usize {
        self.data.dim().2
    }

    /// Exact height fraction occupied by `part` (summed over its bands).
    pub fn part_fraction(&self, part: PartName) -> f64 {
        self.bands
            .iter()
            .filter(|b| b.part == part)
            .map(|b| b.fraction.1 - b.fraction.0)
            .sum()
    }

    /// Current integer rows occupied by `part`.
    pub fn part_rows(&self, part: PartName) -> usize {
        self.bands
            .iter()
            .filter(|b| b.part == part)
            .map(|b| b.rows.1 - b.rows.0)
            .sum()
    }
}

/// Body/hand fusion layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    BodyOnly,
    NaiveConcat,
    ScaledStack,
    MultiImage2,
    MultiImage3,
}

impl FusionMode {
    pub const ALL: [FusionMode; 5] = [
        FusionMode::BodyOnly,
        FusionMode::NaiveConcat,
        FusionMode::ScaledStack,
        FusionMode::MultiImage2,
        FusionMode::MultiImage3,
    ];

    /// Number of images fed to the classifier.
    pub fn image_count(self) -> usize {
        match self {
            FusionMode::MultiImage2 => 2,
            FusionMode::MultiImage3 => 3,
            _ => 1,
        }
    }

    pub fn needs_hands(self) -> bool {
        !matches!(self, FusionMode::BodyOnly)
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FusionMode::BodyOnly => "body_only",
            FusionMode::NaiveConcat => "naive_concat",
            FusionMode::ScaledStack => "scaled_stack",
            FusionMode::MultiImage2 => "multi_image_2",
            FusionMode::MultiImage3 => "multi_image_3",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown fusion mode {s:?}")))
    }
}

/// How a clip is rendered for the classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub mode: FusionMode,
    /// Hand upscale factor for `scaled_stack`, in [1, 8].
    pub scale_s: u32,
    /// Final (height, width) of every produced image.
    pub input_hw: (usize, usize),
    pub value_range: ValueRange,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            mode: FusionMode::BodyOnly,
            scale_s: 4,
            input_hw: (224, 224),
            value_range: ValueRange::Byte,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mode == FusionMode::ScaledStack && !(1..=8).contains(&self.scale_s) {
            return Err(Error::OutOfRange(format!(
                "scale_s must be in [1, 8], got {}",
                self.scale_s
            )));
        }
        if self.input_hw.0 < 8 || self.input_hw.1 < 8 {
            return Err(Error::Validation(format!(
                "input_hw {:?} is too small",
                self.input_hw
            )));
        }
        Ok(())
    }
}

/// Min-max normalize a part to [0, 1], per coordinate channel, with min/max
/// taken over the whole clip and all joints of the part. A constant channel
/// maps to 0.5.
pub fn normalize_part(coords: &Array3<f64>) -> Result<Array3<f64>> {
    if coords.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("part coordinates".into()));
    }
    let (_t, _j, d) = coords.dim();
    let mut out = coords.clone();
    for c in 0..d {
        let channel = coords.index_axis(Axis(2), c);
        let min = channel.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = channel.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut out_ch = out.index_axis_mut(Axis(2), c);
        if max > min {
            out_ch.mapv_inplace(|v| (v - min) / (max - min));
        } else {
            out_ch.fill(0.5);
        }
    }
    Ok(out)
}

/// Render normalized part coordinates as an image: H = joints, W = frames,
/// pixel (j, t) = norm[t, j, :]. Missing coordinate channels (2D data) leave
/// the corresponding image channel at zero.
pub fn encode_part(norm: &Array3<f64>, value_range: ValueRange, part: PartName) -> Result<EncodedImage> {
    let (t, j, d) = norm.dim();
    if d > 3 {
        return Err(Error::Validation(format!("parts have at most 3 dims, got {d}")));
    }
    if norm.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::OutOfRange(
            "encode_part expects normalized input in [0, 1]".into(),
        ));
    }
    let scale = value_range.max();
    let mut data = Array3::zeros((3, j, t));
    for c in 0..d {
        for row in 0..j {
            for col in 0..t {
                data[[c, row, col]] = norm[[col, row, c]] * scale;
            }
        }
    }
    let bands = vec![Band {
        part,
        rows: (0, j),
        fraction: (0.0, 1.0),
    }];
    EncodedImage::new(data, value_range, bands)
}

/// Bilinear resize to `target` (height, width). Band fractions are kept; band
/// rows are remapped proportionally. Values are clamped back into range after
/// interpolation.
pub fn resize_image(img: &EncodedImage, target: (usize, usize)) -> EncodedImage {
    let (c_n, h_s, w_s) = img.data.dim();
    let (h_t, w_t) = target;
    let mut data = Array3::zeros((c_n, h_t, w_t));
    let max = img.value_range.max();
    for y in 0..h_t {
        let sy = ((y as f64 + 0.5) * h_s as f64 / h_t as f64 - 0.5).clamp(0.0, (h_s - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h_s - 1);
        let fy = sy - y0 as f64;
        for x in 0..w_t {
            let sx =
                ((x as f64 + 0.5) * w_s as f64 / w_t as f64 - 0.5).clamp(0.0, (w_s - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w_s - 1);
            let fx = sx - x0 as f64;
            for c in 0..c_n {
                let v = img.data[[c, y0, x0]] * (1.0 - fy) * (1.0 - fx)
                    + img.data[[c, y0, x1]] * (1.0 - fy) * fx
                    + img.data[[c, y1, x0]] * fy * (1.0 - fx)
                    + img.data[[c, y1, x1]] * fy * fx;
                data[[c, y, x]] = v.clamp(0.0, max);
            }
        }
    }
    let bands = remap_bands(&img.bands, h_t);
    EncodedImage {
        data,
        value_range: img.value_range,
        bands,
    }
}

fn remap_bands(bands: &[Band], new_h: usize) -> Vec<Band> {
    // boundaries from the exact fractions; rounding keeps them monotone
    let mut out = Vec::with_capacity(bands.len());
    let mut prev_row = 0usize;
    for (i, band) in bands.iter().enumerate() {
        let end = if i + 1 == bands.len() {
            new_h
        } else {
            ((band.fraction.1 * new_h as f64).round() as usize).clamp(prev_row, new_h)
        };
        out.push(Band {
            part: band.part,
            rows: (prev_row, end),
            fraction: band.fraction,
        });
        prev_row = end;
    }
    out
}

fn check_equal_frames(parts: &[(&str, usize)]) -> Result<()> {
    let t0 = parts[0].1;
    for &(name, t) in parts {
        if t != t0 {
            return Err(Error::LengthMismatch(format!(
                "part {name} has {t} frames, expected {t0}"
            )));
        }
    }
    Ok(())
}

/// Stack already-encoded images vertically, concatenating their bands with
/// rescaled fractions.
fn vconcat(images: &[&EncodedImage]) -> EncodedImage {
    let value_range = images[0].value_range;
    let total_h: usize = images.iter().map(|i| i.height()).sum();
    let w = images[0].width();
    let mut data = Array3::zeros((3, total_h, w));
    let mut bands = Vec::new();
    let mut row = 0usize;
    for img in images {
        let h = img.height();
        data.slice_mut(ndarray::s![.., row..row + h, ..])
            .assign(&img.data);
        for band in &img.bands {
            let f0 = (row + band.rows.0) as f64 / total_h as f64;
            let f1 = (row + band.rows.1) as f64 / total_h as f64;
            bands.push(Band {
                part: band.part,
                rows: (row + band.rows.0, row + band.rows.1),
                fraction: (f0, f1),
            });
        }
        row += h;
    }
    EncodedImage { data, value_range, bands }
}

/// Normalize and encode the three parts at their native row counts.
fn encode_parts(
    body: &Array3<f64>,
    right: &Array3<f64>,
    left: &Array3<f64>,
    range: ValueRange,
) -> Result<(EncodedImage, EncodedImage, EncodedImage)> {
    check_equal_frames(&[
        ("body", body.dim().0),
        ("right_hand", right.dim().0),
        ("left_hand", left.dim().0),
    ])?;
    let b = encode_part(&normalize_part(body)?, range, PartName::Body)?;
    let r = encode_part(&normalize_part(right)?, range, PartName::RightHand)?;
    let l = encode_part(&normalize_part(left)?, range, PartName::LeftHand)?;
    Ok((b, r, l))
}

/// The unresized row-concatenated image: body rows, right-hand rows,
/// left-hand rows. Height = J_body + 42, width = T. Useful for inspecting
/// exact band contents before interpolation mixes neighboring rows.
pub fn fuse_naive_pre_resize(
    body: &Array3<f64>,
    right: &Array3<f64>,
    left: &Array3<f64>,
    range: ValueRange,
) -> Result<EncodedImage> {
    let (b, r, l) = encode_parts(body, right, left, range)?;
    Ok(vconcat(&[&b, &r, &l]))
}

/// Naive row concatenation fusion, resized to `cfg.input_hw`.
pub fn fuse_naive(
    body: &Array3<f64>,
    right: &Array3<f64>,
    left: &Array3<f64>,
    cfg: &FusionConfig,
) -> Result<EncodedImage> {
    cfg.validate()?;
    let pre = fuse_naive_pre_resize(body, right, left, cfg.value_range)?;
    Ok(resize_image(&pre, cfg.input_hw))
}

/// The stacked image before the final whole-image resize: body resized to
/// `input_hw`, hands (right above left, 42 rows) resized to (s·42)×W, stacked
/// below. Height = H + s·42.
pub fn fuse_scaled_stack_pre_resize(
    body: &Array3<f64>,
    right: &Array3<f64>,
    left: &Array3<f64>,
    cfg: &FusionConfig,
) -> Result<EncodedImage> {
    if !(1..=8).contains(&cfg.scale_s) {
        return Err(Error::OutOfRange(format!(
            "scale_s must be in [1, 8], got {}",
            cfg.scale_s
        )));
    }
    let (b, r, l) = encode_parts(body, right, left, cfg.value_range)?;
    let (h, w) = cfg.input_hw;
    let body_img = resize_image(&b, (h, w));
    let hands = vconcat(&[&r, &l]);
    let hands_img = resize_image(&hands, (cfg.scale_s as usize * 42, w));
    Ok(vconcat(&[&body_img, &hands_img]))
}

/// Scaled-stack fusion: the stack is resized back to `cfg.input_hw`, so the
/// body keeps an H/(H + 42·s) share of the height.
pub fn fuse_scaled_stack(
    body: &Array3<f64>,
    right: &Array3<f64>,
    left: &Array3<f64>,
    cfg: &FusionConfig,
) -> Result<EncodedImage> {
    cfg.validate()?;
    let pre = fuse_scaled_stack_pre_resize(body, right, left, cfg)?;
    Ok(resize_image(&pre, cfg.input_hw))
}

/// Body-only baseline image.
pub fn encode_body_only(body: &Array3<f64>, cfg: &FusionConfig) -> Result<EncodedImage> {
    cfg.validate()?;
    let b = encode_part(&normalize_part(body)?, cfg.value_range, PartName::Body)?;
    Ok(resize_image(&b, cfg.input_hw))
}

/// Separate-image fusion: `multi_image_2` gives [body, hands] and
/// `multi_image_3` gives [body, right, left], each resized to `cfg.input_hw`.
pub fn build_multi_images(
    body: &Array3<f64>,
    right: &Array3<f64>,
    left: &Array3<f64>,
    cfg: &FusionConfig,
) -> Result<Vec<EncodedImage>> {
    cfg.validate()?;
    let (b, r, l) = encode_parts(body, right, left, cfg.value_range)?;
    match cfg.mode {
        FusionMode::MultiImage2 => {
            let hands = vconcat(&[&r, &l]);
            Ok(vec![
                resize_image(&b, cfg.input_hw),
                resize_image(&hands, cfg.input_hw),
            ])
        }
        FusionMode::MultiImage3 => Ok(vec![
            resize_image(&b, cfg.input_hw),
            resize_image(&r, cfg.input_hw),
            resize_image(&l, cfg.input_hw),
        ]),
        other => Err(Error::Config(format!(
            "build_multi_images requires a multi-image mode, got {other}"
        ))),
    }
}

/// Extract part coordinate arrays from a processed clip. Hands use 3D
/// coordinates when the body layout is 3D, pixel coordinates otherwise, and
/// are re-centred on their wrist per frame: the body band already carries
/// wrist trajectories, so hand bands are left to show finger articulation
/// rather than a copy of the arm motion.
pub fn clip_parts(
    clip: &Clip,
    layout: &JointLayout,
) -> Result<(Array3<f64>, Array3<f64>, Array3<f64>)> {
    let t = clip.len();
    let d = layout.dims;
    let mut body = Array3::zeros((t, layout.joint_count, d));
    for (ti, frame) in clip.body_frames.iter().enumerate() {
        for j in 0..layout.joint_count {
            for c in 0..d {
                body[[ti, j, c]] = frame.coords[[j, c]];
            }
        }
    }
    let hand_frames = clip.hand_frames.as_ref().ok_or_else(|| {
        Error::Validation(format!(
            "clip {} has no processed hand frames; run hand post-processing first",
            clip.clip_id
        ))
    })?;
    let mut right = Array3::zeros((t, 21, d));
    let mut left = Array3::zeros((t, 21, d));
    for (ti, frame) in hand_frames.iter().enumerate() {
        for (slot, out) in [(&frame.right, &mut right), (&frame.left, &mut left)] {
            let slot = slot.as_ref().ok_or_else(|| {
                Error::Validation(format!(
                    "clip {} frame {ti} has an absent hand slot; forward fill first",
                    clip.clip_id
                ))
            })?;
            let coords: ArrayView2<f64> = if d == 3 {
                slot.coords_3d.view()
            } else {
                slot.coords_2d.view()
            };
            for j in 0..21 {
                for c in 0..d {
                    out[[ti, j, c]] = coords[[j, c]] - coords[[0, c]];
                }
            }
        }
    }
    Ok((body, right, left))
}

/// Encode a clip under `cfg`. Returns one image for single-image modes, two
/// or three for the multi-image modes.
pub fn encode_clip(clip: &Clip, layout: &JointLayout, cfg: &FusionConfig) -> Result<Vec<EncodedImage>> {
    cfg.validate()?;
    if cfg.mode == FusionMode::BodyOnly {
        let t = clip.len();
        let d = layout.dims;
        let mut body = Array3::zeros((t, layout.joint_count, d));
        for (ti, frame) in clip.body_frames.iter().enumerate() {
            for j in 0..layout.joint_count {
                for c in 0..d {
                    body[[ti, j, c]] = frame.coords[[j, c]];
                }
            }
        }
        return Ok(vec![encode_body_only(&body, cfg)?]);
    }
    let (body, right, left) = clip_parts(clip, layout)?;
    match cfg.mode {
        FusionMode::BodyOnly => unreachable!(),
        FusionMode::NaiveConcat => Ok(vec![fuse_naive(&body, &right, &left, cfg)?]),
        FusionMode::ScaledStack => Ok(vec![fuse_scaled_stack(&body, &right, &left, cfg)?]),
        FusionMode::MultiImage2 | FusionMode::MultiImage3 => {
            build_multi_images(&body, &right, &left, cfg)
        }
    }
}

/// Convert to an 8-bit RGB image (unit range is scaled up, byte range is
/// rounded).
pub fn to_rgb8(img: &EncodedImage) -> image::RgbImage {
    let (h, w) = (img.height(), img.width());
    let scale = match img.value_range {
        ValueRange::Unit => 255.0,
        ValueRange::Byte => 1.0,
    };
    image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let px = |c: usize| {
            (img.data[[c, y as usize, x as usize]] * scale)
                .round()
                .clamp(0.0, 255.0) as u8
        };
        image::Rgb([px(0), px(1), px(2)])
    })
}

/// Write the image as a PNG.
pub fn save_png(img: &EncodedImage, path: &Path) -> Result<()> {
    to_rgb8(img)
        .save(path)
        .map_err(|e| Error::Image(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_part(t: usize, j: usize, d: usize, seed: u64) -> Array3<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array3::from_shape_fn((t, j, d), |_| rng.gen_range(-3.0..5.0))
    }

    fn unit_cfg(mode: FusionMode) -> FusionConfig {
        FusionConfig {
            mode,
            scale_s: 4,
            input_hw: (224, 224),
            value_range: ValueRange::Unit,
        }
    }

    #[test]
    fn normalize_min_max() {
        let mut coords = Array3::zeros((3, 1, 3));
        for (t, v) in [0.0, 2.0, 4.0].iter().enumerate() {
            coords[[t, 0, 0]] = *v;
            coords[[t, 0, 1]] = 5.0; // constant channel
            coords[[t, 0, 2]] = -(*v);
        }
        let n = normalize_part(&coords).unwrap();
        assert_eq!(n[[0, 0, 0]], 0.0);
        assert_eq!(n[[1, 0, 0]], 0.5);
        assert_eq!(n[[2, 0, 0]], 1.0);
        for t in 0..3 {
            assert_eq!(n[[t, 0, 1]], 0.5);
        }
        // descending channel flips
        assert_eq!(n[[0, 0, 2]], 1.0);
        assert_eq!(n[[2, 0, 2]], 0.0);
    }

    #[test]
    fn normalize_rejects_non_finite() {
        let mut coords = random_part(4, 2, 3, 1);
        coords[[0, 0, 0]] = f64::NAN;
        assert!(normalize_part(&coords).is_err());
    }

    proptest! {
        #[test]
        fn normalize_affine_invariant(seed in 0u64..1000, a in 0.01f64..100.0, b in -50.0f64..50.0) {
            let coords = random_part(6, 4, 3, seed);
            let transformed = coords.mapv(|v| a * v + b);
            let n1 = normalize_part(&coords).unwrap();
            let n2 = normalize_part(&transformed).unwrap();
            for (x, y) in n1.iter().zip(n2.iter()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn encode_shape_and_scaling() {
        let coords = random_part(4, 32, 3, 2);
        let n = normalize_part(&coords).unwrap();
        let img = encode_part(&n, ValueRange::Byte, PartName::Body).unwrap();
        assert_eq!(img.data.dim(), (3, 32, 4));
        // min-max guarantees some value hits 1.0 → 255 in byte range
        let max = img.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(max, 255.0);
        // transposition: pixel (row j, col t) = norm[t, j, c]
        assert_eq!(img.data[[1, 5, 2]], n[[2, 5, 1]] * 255.0);
    }

    #[test]
    fn encode_2d_zero_third_channel() {
        let coords = random_part(5, 17, 2, 3);
        let n = normalize_part(&coords).unwrap();
        let img = encode_part(&n, ValueRange::Unit, PartName::Body).unwrap();
        assert!(img.data.index_axis(Axis(0), 2).iter().all(|&v| v == 0.0));
        assert!(img.data.index_axis(Axis(0), 0).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn encode_rejects_out_of_range() {
        let mut n = Array3::zeros((2, 2, 3));
        n[[0, 0, 0]] = 1.2;
        assert!(encode_part(&n, ValueRange::Unit, PartName::Body).is_err());
    }

    #[test]
    fn resize_shapes_and_identity() {
        let coords = random_part(16, 32, 3, 4);
        let img = encode_part(&normalize_part(&coords).unwrap(), ValueRange::Unit, PartName::Body)
            .unwrap();
        let big = resize_image(&img, (224, 224));
        assert_eq!(big.data.dim(), (3, 224, 224));
        big.validate().unwrap();
        let same = resize_image(&img, (32, 16));
        for (a, b) in same.data.iter().zip(img.data.iter()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn resize_clamps_to_range() {
        let coords = random_part(20, 74, 3, 5);
        let img = encode_part(&normalize_part(&coords).unwrap(), ValueRange::Unit, PartName::Body)
            .unwrap();
        let out = resize_image(&img, (256, 256));
        assert!(out.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn naive_band_budget() {
        let body = random_part(12, 32, 3, 6);
        let right = random_part(12, 21, 3, 7);
        let left = random_part(12, 21, 3, 8);
        let pre = fuse_naive_pre_resize(&body, &right, &left, ValueRange::Unit).unwrap();
        assert_eq!(pre.height(), 74);
        assert_eq!(pre.part_rows(PartName::Body), 32);
        assert_eq!(pre.part_fraction(PartName::Body), 32.0 / 74.0);
        let hands = pre.part_fraction(PartName::RightHand) + pre.part_fraction(PartName::LeftHand);
        assert!((hands - 42.0 / 74.0).abs() < 1e-15);
        // roughly 43% body, remaining ~57% hands
        assert!((pre.part_fraction(PartName::Body) - 0.432).abs() < 1e-3);
        assert!((hands - 0.568).abs() < 1e-3);

        let full = fuse_naive(&body, &right, &left, &unit_cfg(FusionMode::NaiveConcat)).unwrap();
        assert_eq!(full.data.dim(), (3, 224, 224));
        assert_eq!(full.part_fraction(PartName::Body), 32.0 / 74.0);
        assert_eq!(full.part_rows(PartName::Body), 97); // round(224·32/74)
    }

    #[test]
    fn naive_band_isolation_pre_resize() {
        let body = random_part(10, 32, 3, 9);
        let right = random_part(10, 21, 3, 10);
        let left = random_part(10, 21, 3, 11);
        let a = fuse_naive_pre_resize(&body, &right, &left, ValueRange::Unit).unwrap();
        let zero = Array3::zeros((10, 21, 3));
        let b = fuse_naive_pre_resize(&body, &zero, &zero, ValueRange::Unit).unwrap();
        let body_a = a.data.slice(ndarray::s![.., 0..32, ..]);
        let body_b = b.data.slice(ndarray::s![.., 0..32, ..]);
        assert_eq!(body_a, body_b);
        let hands_a = a.data.slice(ndarray::s![.., 32..74, ..]);
        let hands_b = b.data.slice(ndarray::s![.., 32..74, ..]);
        assert_ne!(hands_a, hands_b);
    }

    #[test]
    fn naive_frame_mismatch() {
        let body = random_part(10, 32, 3, 1);
        let right = random_part(9, 21, 3, 2);
        let left = random_part(10, 21, 3, 3);
        assert!(fuse_naive(&body, &right, &left, &unit_cfg(FusionMode::NaiveConcat)).is_err());
    }

    #[test]
    fn scaled_stack_geometry() {
        let body = random_part(16, 32, 3, 12);
        let right = random_part(16, 21, 3, 13);
        let left = random_part(16, 21, 3, 14);
        let mut cfg = unit_cfg(FusionMode::ScaledStack);
        cfg.scale_s = 8;
        let pre = fuse_scaled_stack_pre_resize(&body, &right, &left, &cfg).unwrap();
        assert_eq!(pre.height(), 224 + 336);
        assert_eq!(
            pre.part_rows(PartName::RightHand) + pre.part_rows(PartName::LeftHand),
            336
        );
        let out = fuse_scaled_stack(&body, &right, &left, &cfg).unwrap();
        assert_eq!(out.data.dim(), (3, 224, 224));
        assert_eq!(out.part_fraction(PartName::Body), 224.0 / (224.0 + 336.0));

        // body fraction strictly decreases with s
        let mut last = f64::INFINITY;
        for s in 1..=8u32 {
            cfg.scale_s = s;
            let img = fuse_scaled_stack(&body, &right, &left, &cfg).unwrap();
            let frac = img.part_fraction(PartName::Body);
            assert_eq!(frac, 224.0 / (224.0 + 42.0 * s as f64));
            assert!(frac < last);
            last = frac;
        }
        assert!((224.0_f64 / 266.0 - 0.842).abs() < 1e-3); // s=1 reference point

        cfg.scale_s = 9;
        assert!(fuse_scaled_stack(&body, &right, &left, &cfg).is_err());
        cfg.scale_s = 0;
        assert!(fuse_scaled_stack(&body, &right, &left, &cfg).is_err());
    }

    #[test]
    fn scaled_stack_s8_matches_body_upscale_on_256() {
        // with 256 input the body goes up 256/32 = 8×, same as the hands at s=8
        let mut cfg = unit_cfg(FusionMode::ScaledStack);
        cfg.input_hw = (256, 256);
        cfg.scale_s = 8;
        let body = random_part(16, 32, 3, 15);
        let right = random_part(16, 21, 3, 16);
        let left = random_part(16, 21, 3, 17);
        let pre = fuse_scaled_stack_pre_resize(&body, &right, &left, &cfg).unwrap();
        let body_scale = 256.0 / 32.0;
        let hand_scale = pre.part_rows(PartName::RightHand) as f64 / 21.0;
        assert_eq!(body_scale, hand_scale);
    }

    #[test]
    fn multi_image_modes() {
        let body = random_part(16, 32, 3, 18);
        let right = random_part(16, 21, 3, 19);
        let left = random_part(16, 21, 3, 20);
        let mut cfg = unit_cfg(FusionMode::MultiImage2);
        cfg.input_hw = (256, 256);
        let two = build_multi_images(&body, &right, &left, &cfg).unwrap();
        assert_eq!(two.len(), 2);
        for img in &two {
            assert_eq!(img.data.dim(), (3, 256, 256));
        }
        assert_eq!(two[0].part_fraction(PartName::Body), 1.0);
        // body image equals the body_only baseline bit for bit
        let mut body_cfg = cfg.clone();
        body_cfg.mode = FusionMode::BodyOnly;
        let baseline = encode_body_only(&body, &body_cfg).unwrap();
        assert_eq!(two[0].data, baseline.data);

        cfg.mode = FusionMode::MultiImage3;
        let three = build_multi_images(&body, &right, &left, &cfg).unwrap();
        assert_eq!(three.len(), 3);
        assert_eq!(three[1].part_fraction(PartName::RightHand), 1.0);
        assert_eq!(three[2].part_fraction(PartName::LeftHand), 1.0);

        cfg.mode = FusionMode::BodyOnly;
        assert!(build_multi_images(&body, &right, &left, &cfg).is_err());
    }

    proptest! {
        #[test]
        fn hand_scaling_leaves_body_band_unchanged(seed in 0u64..500, lambda in prop::sample::select(vec![0.1f64, 10.0])) {
            let body = random_part(12, 32, 3, seed);
            let right = random_part(12, 21, 3, seed + 1);
            let left = random_part(12, 21, 3, seed + 2);
            let r2 = right.mapv(|v| v * lambda);
            let l2 = left.mapv(|v| v * lambda);
            let a = fuse_naive_pre_resize(&body, &right, &left, ValueRange::Unit).unwrap();
            let b = fuse_naive_pre_resize(&body, &r2, &l2, ValueRange::Unit).unwrap();
            prop_assert_eq!(
                a.data.slice(ndarray::s![.., 0..32, ..]),
                b.data.slice(ndarray::s![.., 0..32, ..])
            );
        }

        #[test]
        fn frame_permutation_permutes_columns(seed in 0u64..500) {
            let t = 8usize;
            let body = random_part(t, 32, 3, seed);
            let right = random_part(t, 21, 3, seed + 1);
            let left = random_part(t, 21, 3, seed + 2);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 3);
            let mut perm: Vec<usize> = (0..t).collect();
            for i in (1..t).rev() {
                let j = rng.gen_range(0..=i);
                perm.swap(i, j);
            }
            let permute = |a: &Array3<f64>| {
                let mut out = a.clone();
                for (dst, &src) in perm.iter().enumerate() {
                    out.index_axis_mut(Axis(0), dst).assign(&a.index_axis(Axis(0), src));
                }
                out
            };
            let base = fuse_naive_pre_resize(&body, &right, &left, ValueRange::Unit).unwrap();
            let perm_img = fuse_naive_pre_resize(&permute(&body), &permute(&right), &permute(&left), ValueRange::Unit).unwrap();
            for (dst, &src) in perm.iter().enumerate() {
                prop_assert_eq!(
                    perm_img.data.slice(ndarray::s![.., .., dst]),
                    base.data.slice(ndarray::s![.., .., src])
                );
            }
        }
    }

    #[test]
    fn encode_clip_modes() {
        use crate::handprep::{process_clip, HandSelectConfig};
        use crate::ingest::{generate_synthetic_dataset, load_clip, load_manifest, SynthSpec};
        let dir = tempfile::TempDir::new().unwrap();
        generate_synthetic_dataset(&SynthSpec::new(2, 3, 12, 21), dir.path()).unwrap();
        let manifest = load_manifest(&dir.path().join("manifest.json")).unwrap();
        let layout = manifest.layout();
        let intr = manifest.intrinsics_for("cam0").unwrap();
        let mut clip = load_clip(&manifest, "c01_001").unwrap();

        // body_only works before hand processing, fused modes do not
        let cfg = unit_cfg(FusionMode::BodyOnly);
        assert_eq!(encode_clip(&clip, &layout, &cfg).unwrap().len(), 1);
        let cfg = unit_cfg(FusionMode::NaiveConcat);
        assert!(encode_clip(&clip, &layout, &cfg).is_err());

        process_clip(&mut clip, &layout, Some(&intr), &HandSelectConfig::default()).unwrap();
        for mode in FusionMode::ALL {
            let cfg = unit_cfg(mode);
            let images = encode_clip(&clip, &layout, &cfg).unwrap();
            assert_eq!(images.len(), mode.image_count());
            for img in &images {
                assert_eq!(img.data.dim(), (3, 224, 224));
                img.validate().unwrap();
            }
        }
    }

    #[test]
    fn png_round_trip() {
        let coords = random_part(16, 32, 3, 30);
        let img =
            encode_part(&normalize_part(&coords).unwrap(), ValueRange::Byte, PartName::Body).unwrap();
        let dir = tempfile::TempDir::new().unwrap();
        let path = dir.path().join("preview.png");
        save_png(&img, &path).unwrap();
        let loaded = image::open(&path).unwrap().to_rgb8();
        assert_eq!(loaded.dimensions(), (16, 32));
        let expected = img.data[[0, 3, 5]].round() as u8;
        assert_eq!(loaded.get_pixel(5, 3)[0], expected);
    }
}
