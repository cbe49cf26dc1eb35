//! Patch embedding with per-image channel splits.
//!
//! Each input image is independently projected patch-by-patch into its own
//! contiguous slice of the embedding channels; the slices are concatenated
//! and a single LayerNorm runs over the full concatenated width. With one
//! image and one slice this is the ordinary patch embedding.

use ndarray::{Array2, Array4};
use rand_chacha::ChaCha8Rng;

use super::{LayerNorm, Linear, Param};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SplitPatchEmbed {
    pub patch_size: usize,
    pub splits: Vec<usize>,
    pub projs: Vec<Linear>,
    pub norm: LayerNorm,
}

impl SplitPatchEmbed {
    pub fn new(name: &str, patch_size: usize, splits: &[usize], rng: &mut ChaCha8Rng) -> Self {
        assert!(!splits.is_empty() && splits.iter().all(|&s| s > 0));
        let in_dim = 3 * patch_size * patch_size;
        let projs = splits
            .iter()
            .enumerate()
            .map(|(i, &s)| Linear::new(&format!("{name}.proj{i}"), in_dim, s, rng))
            .collect();
        let total: usize = splits.iter().sum();
        Self {
            patch_size,
            splits: splits.to_vec(),
            projs,
            norm: LayerNorm::new(&format!("{name}.norm"), total, rng),
        }
    }

    pub fn total_channels(&self) -> usize {
        self.splits.iter().sum()
    }

    fn check_inputs(&self, images: &[Array4<f64>]) -> Result<(usize, usize, usize)> {
        if images.len() != self.splits.len() {
            return Err(Error::Validation(format!(
                "patch embed expects {} images, got {}",
                self.splits.len(),
                images.len()
            )));
        }
        let (b, c, h, w) = images[0].dim();
        for img in images {
            if img.dim() != (b, c, h, w) {
                return Err(Error::Validation("input images must share shape".into()));
            }
        }
        if c != 3 {
            return Err(Error::Validation(format!("images must have 3 channels, got {c}")));
        }
        let p = self.patch_size;
        if h % p != 0 || w % p != 0 {
            return Err(Error::Validation(format!(
                "spatial dims {h}×{w} not divisible by patch size {p}"
            )));
        }
        Ok((b, h / p, w / p))
    }

    /// Token grid before normalization: [B, H/p, W/p, total]. Channel slice i
    /// depends only on image i (plus its projection's own parameters).
    pub fn forward_pre_norm(&mut self, images: &[Array4<f64>]) -> Result<Array4<f64>> {
        let (b, hp, wp) = self.check_inputs(images)?;
        let total = self.total_channels();
        let mut pre = Array4::zeros((b, hp, wp, total));
        let mut offset = 0;
        for (img, proj) in images.iter().zip(&mut self.projs) {
            let tok = Self::patches_static(img, self.patch_size);
            let y = proj.forward(&tok);
            let width = y.dim().1;
            for bi in 0..b {
                for py in 0..hp {
                    for px in 0..wp {
                        let row = (bi * hp + py) * wp + px;
                        for ci in 0..width {
                            pre[[bi, py, px, offset + ci]] = y[[row, ci]];
                        }
                    }
                }
            }
            offset += width;
        }
        Ok(pre)
    }

    fn patches_static(img: &Array4<f64>, p: usize) -> Array2<f64> {
        let (b, _c, h, w) = img.dim();
        let (hp, wp) = (h / p, w / p);
        let mut out = Array2::zeros((b * hp * wp, 3 * p * p));
        for bi in 0..b {
            for py in 0..hp {
                for px in 0..wp {
                    let row = (bi * hp + py) * wp + px;
                    for ci in 0..3 {
                        for ky in 0..p {
                            for kx in 0..p {
                                out[[row, (ci * p + ky) * p + kx]] =
                                    img[[bi, ci, py * p + ky, px * p + kx]];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Normalized token grid: [B, H/p, W/p, total].
    pub fn forward(&mut self, images: &[Array4<f64>]) -> Result<Array4<f64>> {
        let pre = self.forward_pre_norm(images)?;
        let (b, hp, wp, total) = pre.dim();
        let flat = pre.into_shape_with_order((b * hp * wp, total)).unwrap();
        let normed = self.norm.forward(&flat);
        Ok(normed.into_shape_with_order((b, hp, wp, total)).unwrap())
    }

    /// Accumulates parameter gradients; input-image gradients are discarded
    /// (images are data, not parameters).
    pub fn backward(&mut self, dy: &Array4<f64>) {
        let (b, hp, wp, total) = dy.dim();
        let dflat = dy
            .to_owned()
            .into_shape_with_order((b * hp * wp, total))
            .unwrap();
        let dpre = self.norm.backward(&dflat);
        let mut offset = 0;
        for (proj, &width) in self.projs.iter_mut().zip(&self.splits) {
            let slice = dpre.slice(ndarray::s![.., offset..offset + width]).to_owned();
            let _ = proj.backward(&slice);
            offset += width;
        }
    }

    pub fn params(&mut self) -> Vec<&mut Param> {
        let mut p: Vec<&mut Param> = Vec::new();
        for proj in &mut self.projs {
            p.extend(proj.params());
        }
        p.extend(self.norm.params());
        p
    }
}
