//! Classifier backbones over encoded clip images.
//!
//! Two families share one interface: a conv-residual network for single-image
//! inputs and a windowed-attention network that accepts one or more images
//! through a split patch embedding. Each family comes in a `full` size and a
//! structurally faithful `tiny_test` size for fast pipelines.

mod attn;
mod checkpoint;
mod conv;

pub use checkpoint::{load_checkpoint, load_weights_into, save_checkpoint};

use std::collections::BTreeSet;
use std::path::PathBuf;

use ndarray::{Array2, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encode::{EncodedImage, ValueRange};
use crate::error::{Error, Result};
use crate::nn::{softmax_cross_entropy, Param};

use attn::{AttnNet, AttnPlan};
use conv::{ConvNet, ConvPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneFamily {
    ConvResidual,
    WindowedAttention,
}

impl std::fmt::Display for BackboneFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BackboneFamily::ConvResidual => write!(f, "conv_residual"),
            BackboneFamily::WindowedAttention => write!(f, "windowed_attention"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeClass {
    /// Reduced depth and width for fast tests; same structure as `Full`.
    TinyTest,
    Full,
}

/// How the embedding channel budget is divided across input images.
///
/// One entry per image; entries sum to the embedding total for the
/// attention family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelSplit(pub Vec<usize>);

impl ChannelSplit {
    pub fn single(total: usize) -> Self {
        Self(vec![total])
    }

    /// Default budget split: whole budget for one image, a 2:1 body/hands
    /// split for two, and equal thirds for three.
    pub fn default_for(images: usize, total: usize) -> Result<Self> {
        match images {
            1 => Ok(Self(vec![total])),
            2 | 3 if total % 3 != 0 => Err(Error::Config(format!(
                "embedding total {total} is not divisible by 3 for a {images}-image split"
            ))),
            2 => Ok(Self(vec![2 * total / 3, total / 3])),
            3 => Ok(Self(vec![total / 3; 3])),
            n => Err(Error::Config(format!(
                "no default channel split for {n} images (supported: 1, 2, 3)"
            ))),
        }
    }

    pub fn image_count(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub family: BackboneFamily,
    pub size: SizeClass,
    pub input_hw: (usize, usize),
    pub value_range: ValueRange,
    pub num_classes: usize,
    /// Patch edge length for the attention family; ignored by conv_residual.
    pub patch_size: usize,
    /// Total embedding channels across all images (attention family).
    pub embed_channels_total: usize,
    pub channel_split: ChannelSplit,
    /// Optional checkpoint to initialize weights from. The checkpoint's
    /// config must match this one.
    pub pretrained_weights_path: Option<PathBuf>,
}

pub const TINY_EMBED_TOTAL: usize = 12;
pub const FULL_EMBED_TOTAL: usize = 96;

impl BackboneConfig {
    /// Small backbone for pipeline tests: 2 stages, 12 embedding channels.
    pub fn tiny_test(
        family: BackboneFamily,
        num_classes: usize,
        input_hw: (usize, usize),
        images: usize,
    ) -> Result<Self> {
        let cfg = Self {
            family,
            size: SizeClass::TinyTest,
            input_hw,
            value_range: match family {
                BackboneFamily::ConvResidual => ValueRange::Byte,
                BackboneFamily::WindowedAttention => ValueRange::Unit,
            },
            num_classes,
            patch_size: 4,
            embed_channels_total: TINY_EMBED_TOTAL,
            channel_split: ChannelSplit::default_for(images, TINY_EMBED_TOTAL)?,
            pretrained_weights_path: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Full-size backbone at 224×224 with the 96-channel embedding budget.
    pub fn full(
        family: BackboneFamily,
        num_classes: usize,
        images: usize,
    ) -> Result<Self> {
        let cfg = Self {
            family,
            size: SizeClass::Full,
            input_hw: (224, 224),
            value_range: match family {
                BackboneFamily::ConvResidual => ValueRange::Byte,
                BackboneFamily::WindowedAttention => ValueRange::Unit,
            },
            num_classes,
            patch_size: 4,
            embed_channels_total: FULL_EMBED_TOTAL,
            channel_split: ChannelSplit::default_for(images, FULL_EMBED_TOTAL)?,
            pretrained_weights_path: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            )));
        }
        if self.input_hw.0 < 8 || self.input_hw.1 < 8 {
            return Err(Error::Config(format!(
                "input size {}×{} is too small (minimum 8×8)",
                self.input_hw.0, self.input_hw.1
            )));
        }
        if self.channel_split.0.is_empty() || self.channel_split.0.iter().any(|&s| s == 0) {
            return Err(Error::Config(
                "channel split must be non-empty with positive entries".into(),
            ));
        }
        match self.family {
            BackboneFamily::ConvResidual => {
                if self.channel_split.image_count() != 1 {
                    return Err(Error::Config(format!(
                        "conv_residual accepts exactly one input image, channel split lists {}",
                        self.channel_split.image_count()
                    )));
                }
            }
            BackboneFamily::WindowedAttention => {
                if self.channel_split.total() != self.embed_channels_total {
                    return Err(Error::Config(format!(
                        "channel split {:?} sums to {}, embedding total is {}",
                        self.channel_split.0,
                        self.channel_split.total(),
                        self.embed_channels_total
                    )));
                }
                if self.patch_size == 0 {
                    return Err(Error::Config("patch_size must be positive".into()));
                }
                if self.input_hw.0 % self.patch_size != 0 || self.input_hw.1 % self.patch_size != 0
                {
                    return Err(Error::Config(format!(
                        "input size {}×{} is not divisible by patch size {}",
                        self.input_hw.0, self.input_hw.1, self.patch_size
                    )));
                }
                let plan = attn_plan_for(self.size, self.embed_channels_total)?;
                let merges = plan.depths.len() - 1;
                let grid = (
                    self.input_hw.0 / self.patch_size,
                    self.input_hw.1 / self.patch_size,
                );
                let need = 1 << merges;
                if grid.0 % need != 0 || grid.1 % need != 0 {
                    return Err(Error::Config(format!(
                        "token grid {}×{} cannot be halved {merges} times",
                        grid.0, grid.1
                    )));
                }
            }
        }
        Ok(())
    }
}

fn attn_plan_for(size: SizeClass, embed_total: usize) -> Result<AttnPlan> {
    match size {
        SizeClass::TinyTest => {
            if embed_total < 2 || embed_total % 2 != 0 {
                return Err(Error::Config(format!(
                    "tiny_test attention embedding total must be even and >= 2, got {embed_total}"
                )));
            }
            Ok(AttnPlan {
                depths: vec![2, 2],
                heads: vec![2, 4],
                window: 4,
                mlp_ratio: 2,
            })
        }
        SizeClass::Full => {
            if embed_total == 0 || embed_total % 32 != 0 {
                return Err(Error::Config(format!(
                    "full attention embedding total must be a positive multiple of 32, got {embed_total}"
                )));
            }
            let e = embed_total;
            Ok(AttnPlan {
                depths: vec![2, 2, 6, 2],
                heads: vec![e / 32, e / 16, e / 8, e / 4],
                window: 8,
                mlp_ratio: 4,
            })
        }
    }
}

#[derive(Debug, Clone)]
enum Net {
    Conv(ConvNet),
    Attn(AttnNet),
}

/// A classifier over encoded clip images, ready for forward/backward passes.
#[derive(Debug, Clone)]
pub struct Classifier {
    config: BackboneConfig,
    net: Net,
}

/// Build a classifier with seeded random weights, then load pretrained
/// weights if the config names a checkpoint.
pub fn build_backbone(config: &BackboneConfig, seed: u64) -> Result<Classifier> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = match config.family {
        BackboneFamily::ConvResidual => {
            let plan = match config.size {
                SizeClass::TinyTest => ConvPlan::tiny_test(),
                SizeClass::Full => ConvPlan::full(),
            };
            Net::Conv(ConvNet::new(&plan, config.num_classes, &mut rng))
        }
        BackboneFamily::WindowedAttention => {
            let plan = attn_plan_for(config.size, config.embed_channels_total)?;
            Net::Attn(AttnNet::new(
                &plan,
                &config.channel_split.0,
                config.patch_size,
                config.input_hw,
                config.num_classes,
                &mut rng,
            ))
        }
    };
    let mut clf = Classifier {
        config: config.clone(),
        net,
    };
    if let Some(path) = config.pretrained_weights_path.clone() {
        load_weights_into(&mut clf, &path)?;
    }
    Ok(clf)
}

/// Stack per-clip image lists into one batched array per image position.
pub fn batch_inputs(batch: &[Vec<EncodedImage>]) -> Result<Vec<Array4<f64>>> {
    if batch.is_empty() {
        return Err(Error::Validation("empty batch".into()));
    }
    let n_images = batch[0].len();
    let mut out = Vec::with_capacity(n_images);
    for pos in 0..n_images {
        let (c, h, w) = batch[0][pos].data.dim();
        let mut arr = Array4::zeros((batch.len(), c, h, w));
        for (bi, clip) in batch.iter().enumerate() {
            if clip.len() != n_images {
                return Err(Error::Validation(format!(
                    "clip {bi} has {} images, clip 0 has {n_images}",
                    clip.len()
                )));
            }
            if clip[pos].data.dim() != (c, h, w) {
                return Err(Error::Validation(format!(
                    "image {pos} of clip {bi} has shape {:?}, expected {:?}",
                    clip[pos].data.dim(),
                    (c, h, w)
                )));
            }
            arr.index_axis_mut(ndarray::Axis(0), bi)
                .assign(&clip[pos].data);
        }
        out.push(arr);
    }
    Ok(out)
}

impl Classifier {
    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    /// Forward a batch of clips, each given as its list of encoded images.
    /// Checks image count, shape, and declared value range against the
    /// config before running the network.
    pub fn forward(&mut self, batch: &[Vec<EncodedImage>]) -> Result<Array2<f64>> {
        let expect = self.config.channel_split.image_count();
        for (bi, clip) in batch.iter().enumerate() {
            if clip.len() != expect {
                return Err(Error::Validation(format!(
                    "clip {bi} has {} images, backbone expects {expect}",
                    clip.len()
                )));
            }
            for (pos, img) in clip.iter().enumerate() {
                let (c, h, w) = img.data.dim();
                if c != 3 || (h, w) != self.config.input_hw {
                    return Err(Error::Validation(format!(
                        "image {pos} of clip {bi} is {c}×{h}×{w}, backbone expects 3×{}×{}",
                        self.config.input_hw.0, self.config.input_hw.1
                    )));
                }
                if img.value_range != self.config.value_range {
                    return Err(Error::Validation(format!(
                        "image {pos} of clip {bi} has value range {:?}, backbone expects {:?}",
                        img.value_range, self.config.value_range
                    )));
                }
            }
        }
        let inputs = batch_inputs(batch)?;
        self.forward_arrays(&inputs)
    }

    /// Forward pre-batched arrays, one [N,3,H,W] array per image position.
    pub fn forward_arrays(&mut self, inputs: &[Array4<f64>]) -> Result<Array2<f64>> {
        match &mut self.net {
            Net::Conv(net) => {
                if inputs.len() != 1 {
                    return Err(Error::Validation(format!(
                        "conv_residual takes one input image, got {}",
                        inputs.len()
                    )));
                }
                Ok(net.forward(&inputs[0]))
            }
            Net::Attn(net) => net.forward(inputs),
        }
    }

    /// Accumulate parameter gradients for the last forward pass.
    pub fn backward(&mut self, dlogits: &Array2<f64>) {
        match &mut self.net {
            Net::Conv(net) => net.backward(dlogits),
            Net::Attn(net) => net.backward(dlogits),
        }
    }

    pub fn params(&mut self) -> Vec<&mut Param> {
        match &mut self.net {
            Net::Conv(net) => net.params(),
            Net::Attn(net) => net.params(),
        }
    }

    pub fn zero_grad(&mut self) {
        for p in self.params() {
            p.zero_grad();
        }
    }

    pub fn param_count(&mut self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub total_entries: usize,
    pub max_rel_err: f64,
    pub mean_rel_err: f64,
    pub worst_param: String,
}

/// Compare analytic gradients against central finite differences of the
/// cross-entropy loss at sampled parameter entries. Checks at least
/// `min_entries` entries and at least 1% of all parameters.
///
/// Relative error uses a 1e-6 denominator floor: when both gradients are
/// below that magnitude the comparison is effectively absolute, which keeps
/// finite-difference roundoff (~1e-11 on an O(1) loss) from dominating.
pub fn gradient_check(
    clf: &mut Classifier,
    inputs: &[Array4<f64>],
    labels: &[usize],
    min_entries: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    clf.zero_grad();
    let logits = clf.forward_arrays(inputs)?;
    let (_, dlogits, _) = softmax_cross_entropy(&logits, labels);
    clf.backward(&dlogits);

    let (names, lens, grads): (Vec<String>, Vec<usize>, Vec<Vec<f64>>) = {
        let ps = clf.params();
        (
            ps.iter().map(|p| p.name.clone()).collect(),
            ps.iter().map(|p| p.len()).collect(),
            ps.iter()
                .map(|p| p.grad.iter().copied().collect())
                .collect(),
        )
    };
    let total: usize = lens.iter().sum();
    let n_check = min_entries.max(total / 100).min(total);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = BTreeSet::new();
    while picked.len() < n_check {
        picked.insert(rng.gen_range(0..total));
    }

    let mut max_rel = 0.0_f64;
    let mut sum_rel = 0.0_f64;
    let mut worst = String::new();
    for flat in picked {
        let (mut pi, mut off) = (0, flat);
        while off >= lens[pi] {
            off -= lens[pi];
            pi += 1;
        }
        let base = {
            let ps = clf.params();
            ps[pi].value.as_slice().unwrap()[off]
        };
        let h = 1e-5 * base.abs().max(1.0);
        let mut eval = |v: f64| -> Result<f64> {
            {
                let mut ps = clf.params();
                ps[pi].value.as_slice_mut().unwrap()[off] = v;
            }
            let logits = clf.forward_arrays(inputs)?;
            let (loss, _, _) = softmax_cross_entropy(&logits, labels);
            Ok(loss)
        };
        let lp = eval(base + h)?;
        let lm = eval(base - h)?;
        eval(base)?;
        let fd = (lp - lm) / (2.0 * h);
        let g = grads[pi][off];
        let rel = (fd - g).abs() / fd.abs().max(g.abs()).max(1e-6);
        sum_rel += rel;
        if rel > max_rel {
            max_rel = rel;
            worst = format!("{}[{off}]", names[pi]);
        }
    }
    Ok(GradCheckReport {
        checked: n_check,
        total_entries: total,
        max_rel_err: max_rel,
        mean_rel_err: sum_rel / n_check as f64,
        worst_param: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encode::{Band, PartName};
    use crate::nn::testutil::rand_array;
    use crate::nn::SplitPatchEmbed;

    fn plain_image(h: usize, w: usize, range: ValueRange, seed: u64) -> EncodedImage {
        let data = rand_array(&[3, h, w], seed, 1.0)
            .mapv(|v| (v.abs() % 1.0) * range.max())
            .into_dimensionality::<ndarray::Ix3>()
            .unwrap();
        let band = Band {
            part: PartName::Body,
            rows: (0, h),
            fraction: (0.0, 1.0),
        };
        EncodedImage::new(data, range, vec![band]).unwrap()
    }

    #[test]
    fn config_validation_rejects_bad_setups() {
        // conv with two images
        let mut cfg = BackboneConfig::tiny_test(BackboneFamily::ConvResidual, 4, (64, 64), 1)
            .unwrap();
        cfg.channel_split = ChannelSplit(vec![6, 6]);
        assert!(cfg.validate().is_err());

        // attention split does not sum to the total
        let mut cfg =
            BackboneConfig::tiny_test(BackboneFamily::WindowedAttention, 4, (64, 64), 2).unwrap();
        cfg.channel_split = ChannelSplit(vec![8, 8]);
        assert!(cfg.validate().is_err());

        // input not divisible by patch
        let cfg = BackboneConfig::tiny_test(BackboneFamily::WindowedAttention, 4, (66, 66), 1);
        assert!(cfg.is_err());

        // too few classes
        let cfg = BackboneConfig::tiny_test(BackboneFamily::ConvResidual, 1, (64, 64), 1);
        assert!(cfg.is_err());
    }

    #[test]
    fn default_split_matches_published_budgets() {
        assert_eq!(ChannelSplit::default_for(1, 96).unwrap().0, vec![96]);
        assert_eq!(ChannelSplit::default_for(2, 96).unwrap().0, vec![64, 32]);
        assert_eq!(ChannelSplit::default_for(3, 96).unwrap().0, vec![32, 32, 32]);
        assert_eq!(ChannelSplit::default_for(2, 12).unwrap().0, vec![8, 4]);
        assert!(ChannelSplit::default_for(4, 96).is_err());
    }

    #[test]
    fn forward_checks_count_shape_and_range() {
        let cfg =
            BackboneConfig::tiny_test(BackboneFamily::WindowedAttention, 3, (32, 32), 2).unwrap();
        let mut clf = build_backbone(&cfg, 1).unwrap();

        let good = vec![vec![
            plain_image(32, 32, ValueRange::Unit, 1),
            plain_image(32, 32, ValueRange::Unit, 2),
        ]];
        assert_eq!(clf.forward(&good).unwrap().dim(), (1, 3));

        let wrong_count = vec![vec![plain_image(32, 32, ValueRange::Unit, 1)]];
        assert!(clf.forward(&wrong_count).is_err());

        let wrong_size = vec![vec![
            plain_image(32, 32, ValueRange::Unit, 1),
            plain_image(64, 64, ValueRange::Unit, 2),
        ]];
        assert!(clf.forward(&wrong_size).is_err());

        let wrong_range = vec![vec![
            plain_image(32, 32, ValueRange::Unit, 1),
            plain_image(32, 32, ValueRange::Byte, 2),
        ]];
        assert!(clf.forward(&wrong_range).is_err());
    }

    #[test]
    fn conv_and_attn_forward_same_interface() {
        for family in [BackboneFamily::ConvResidual, BackboneFamily::WindowedAttention] {
            let cfg = BackboneConfig::tiny_test(family, 4, (64, 64), 1).unwrap();
            let mut clf = build_backbone(&cfg, 2).unwrap();
            let batch = vec![
                vec![plain_image(64, 64, cfg.value_range, 3)],
                vec![plain_image(64, 64, cfg.value_range, 4)],
            ];
            let y = clf.forward(&batch).unwrap();
            assert_eq!(y.dim(), (2, 4));
            let y2 = clf.forward(&batch).unwrap();
            assert_eq!(y, y2);
        }
    }

    #[test]
    fn seeds_change_weights() {
        // the head starts zeroed, so logits only expose the seed after a
        // gradient step has mixed feature weights into the head
        let cfg = BackboneConfig::tiny_test(BackboneFamily::ConvResidual, 3, (32, 32), 1).unwrap();
        let batch = vec![vec![plain_image(32, 32, ValueRange::Byte, 9)]];
        let logits_after_step = |seed: u64| {
            let mut clf = build_backbone(&cfg, seed).unwrap();
            let y = clf.forward(&batch).unwrap();
            let (_, dlogits, _) = crate::nn::softmax_cross_entropy(&y, &[1]);
            clf.zero_grad();
            clf.backward(&dlogits);
            let mut adam = crate::nn::Adam::new(0.9, 0.999, 0.0);
            adam.step(&mut clf.params(), 1e-2);
            clf.forward(&batch).unwrap()
        };
        assert_ne!(logits_after_step(1), logits_after_step(2));
    }

    #[test]
    fn bigger_embedding_has_more_patch_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let count = |splits: &[usize], rng: &mut ChaCha8Rng| -> usize {
            SplitPatchEmbed::new("e", 4, splits, rng)
                .params()
                .iter()
                .map(|p| p.len())
                .sum()
        };
        let base = count(&[64, 32], &mut rng);
        let bigger = count(&[96, 32], &mut rng);
        assert!(
            bigger > base,
            "128-channel embedding ({bigger}) should exceed 96-channel ({base})"
        );
    }

    #[test]
    fn gradient_check_passes_both_families() {
        for (family, range) in [
            (BackboneFamily::ConvResidual, ValueRange::Byte),
            (BackboneFamily::WindowedAttention, ValueRange::Unit),
        ] {
            let cfg = BackboneConfig::tiny_test(family, 3, (16, 16), 1).unwrap();
            let mut clf = build_backbone(&cfg, 3).unwrap();
            let batch = vec![
                vec![plain_image(16, 16, range, 5)],
                vec![plain_image(16, 16, range, 6)],
            ];
            let inputs = batch_inputs(&batch).unwrap();
            let report = gradient_check(&mut clf, &inputs, &[0, 2], 40, 7).unwrap();
            assert!(report.checked >= 40);
            assert!(
                report.max_rel_err < 1e-3,
                "{family}: max rel err {} at {}",
                report.max_rel_err,
                report.worst_param
            );
        }
    }
}
