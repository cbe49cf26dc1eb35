//! Conv-residual backbone family.
//!
//! Residual blocks of two 3×3 convolutions with per-position channel
//! normalization and smooth GELU activations, global average pooling, and a
//! linear head. Downsampling happens in the first block of a stage via
//! stride-2 convolution plus a 1×1 projection on the skip path.

use ndarray::{Array2, Array4};
use rand_chacha::ChaCha8Rng;

use crate::nn::{Conv2d, Gelu, LayerNorm, Linear, MaxPool2d, Param};

/// LayerNorm over channels at every spatial position of an NCHW map.
fn ln_nchw_forward(ln: &mut LayerNorm, x: &Array4<f64>) -> Array4<f64> {
    let (b, c, h, w) = x.dim();
    let mut tok = Array2::zeros((b * h * w, c));
    for bi in 0..b {
        for y in 0..h {
            for xx in 0..w {
                for ci in 0..c {
                    tok[[(bi * h + y) * w + xx, ci]] = x[[bi, ci, y, xx]];
                }
            }
        }
    }
    let out = ln.forward(&tok);
    let mut y4 = Array4::zeros((b, c, h, w));
    for bi in 0..b {
        for y in 0..h {
            for xx in 0..w {
                for ci in 0..c {
                    y4[[bi, ci, y, xx]] = out[[(bi * h + y) * w + xx, ci]];
                }
            }
        }
    }
    y4
}

fn ln_nchw_backward(ln: &mut LayerNorm, dy: &Array4<f64>) -> Array4<f64> {
    let (b, c, h, w) = dy.dim();
    let mut tok = Array2::zeros((b * h * w, c));
    for bi in 0..b {
        for y in 0..h {
            for xx in 0..w {
                for ci in 0..c {
                    tok[[(bi * h + y) * w + xx, ci]] = dy[[bi, ci, y, xx]];
                }
            }
        }
    }
    let dx = ln.backward(&tok);
    let mut d4 = Array4::zeros((b, c, h, w));
    for bi in 0..b {
        for y in 0..h {
            for xx in 0..w {
                for ci in 0..c {
                    d4[[bi, ci, y, xx]] = dx[[(bi * h + y) * w + xx, ci]];
                }
            }
        }
    }
    d4
}

#[derive(Debug, Clone)]
struct ResBlock {
    conv1: Conv2d,
    norm1: LayerNorm,
    act1: Gelu,
    conv2: Conv2d,
    norm2: LayerNorm,
    down: Option<Conv2d>,
    act_out: Gelu,
}

impl ResBlock {
    fn new(name: &str, in_ch: usize, out_ch: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        let down = (stride != 1 || in_ch != out_ch).then(|| {
            Conv2d::new(&format!("{name}.down"), in_ch, out_ch, 1, stride, 0, rng)
        });
        Self {
            conv1: Conv2d::new(&format!("{name}.conv1"), in_ch, out_ch, 3, stride, 1, rng),
            norm1: LayerNorm::new(&format!("{name}.norm1"), out_ch, rng),
            act1: Gelu::default(),
            conv2: Conv2d::new(&format!("{name}.conv2"), out_ch, out_ch, 3, 1, 1, rng),
            norm2: LayerNorm::new(&format!("{name}.norm2"), out_ch, rng),
            down,
            act_out: Gelu::default(),
        }
    }

    fn forward(&mut self, x: &Array4<f64>) -> Array4<f64> {
        let idn = match &mut self.down {
            Some(d) => d.forward(x),
            None => x.clone(),
        };
        let h = self.conv1.forward(x);
        let h = ln_nchw_forward(&mut self.norm1, &h);
        let h = self
            .act1
            .forward(&h.into_dyn())
            .into_dimensionality::<ndarray::Ix4>()
            .unwrap();
        let h = self.conv2.forward(&h);
        let h = ln_nchw_forward(&mut self.norm2, &h);
        let sum = h + idn;
        self.act_out
            .forward(&sum.into_dyn())
            .into_dimensionality::<ndarray::Ix4>()
            .unwrap()
    }

    fn backward(&mut self, dy: &Array4<f64>) -> Array4<f64> {
        let dsum = self
            .act_out
            .backward(&dy.to_owned().into_dyn())
            .into_dimensionality::<ndarray::Ix4>()
            .unwrap();
        let dh = ln_nchw_backward(&mut self.norm2, &dsum);
        let dh = self.conv2.backward(&dh);
        let dh = self
            .act1
            .backward(&dh.into_dyn())
            .into_dimensionality::<ndarray::Ix4>()
            .unwrap();
        let dh = ln_nchw_backward(&mut self.norm1, &dh);
        let dx_main = self.conv1.backward(&dh);
        let dx_skip = match &mut self.down {
            Some(d) => d.backward(&dsum),
            None => dsum,
        };
        dx_main + dx_skip
    }

    fn params(&mut self) -> Vec<&mut Param> {
        let mut p = self.conv1.params();
        p.extend(self.norm1.params());
        p.extend(self.conv2.params());
        p.extend(self.norm2.params());
        if let Some(d) = &mut self.down {
            p.extend(d.params());
        }
        p
    }
}

/// Stage layout: (blocks, channels); the first block of every stage after the
/// first downsamples by 2.
pub(crate) struct ConvPlan {
    pub stem_ch: usize,
    pub stem_kernel: usize,
    pub stem_stride: usize,
    pub use_maxpool: bool,
    pub stages: Vec<(usize, usize)>,
}

impl ConvPlan {
    pub fn tiny_test() -> Self {
        Self {
            stem_ch: 8,
            stem_kernel: 3,
            stem_stride: 2,
            use_maxpool: false,
            stages: vec![(1, 8), (1, 16)],
        }
    }

    pub fn full() -> Self {
        Self {
            stem_ch: 64,
            stem_kernel: 7,
            stem_stride: 2,
            use_maxpool: true,
            stages: vec![(3, 64), (4, 128), (6, 256), (3, 512)],
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ConvNet {
    stem: Conv2d,
    stem_norm: LayerNorm,
    stem_act: Gelu,
    pool: Option<MaxPool2d>,
    blocks: Vec<ResBlock>,
    head: Linear,
    cache_map_dims: Option<(usize, usize, usize, usize)>,
}

impl ConvNet {
    pub fn new(plan: &ConvPlan, num_classes: usize, rng: &mut ChaCha8Rng) -> Self {
        let pad = plan.stem_kernel / 2;
        let stem = Conv2d::new("stem", 3, plan.stem_ch, plan.stem_kernel, plan.stem_stride, pad, rng);
        let stem_norm = LayerNorm::new("stem.norm", plan.stem_ch, rng);
        let pool = plan.use_maxpool.then(|| MaxPool2d::new(3, 2));
        let mut blocks = Vec::new();
        let mut in_ch = plan.stem_ch;
        for (si, &(count, ch)) in plan.stages.iter().enumerate() {
            for bi in 0..count {
                let stride = if si > 0 && bi == 0 { 2 } else { 1 };
                blocks.push(ResBlock::new(
                    &format!("stage{si}.block{bi}"),
                    in_ch,
                    ch,
                    stride,
                    rng,
                ));
                in_ch = ch;
            }
        }
        let head = Linear::new_zeroed("head", in_ch, num_classes);
        Self {
            stem,
            stem_norm,
            stem_act: Gelu::default(),
            pool,
            blocks,
            head,
            cache_map_dims: None,
        }
    }

    pub fn forward(&mut self, x: &Array4<f64>) -> Array2<f64> {
        let h = self.stem.forward(x);
        let h = ln_nchw_forward(&mut self.stem_norm, &h);
        let mut h = self
            .stem_act
            .forward(&h.into_dyn())
            .into_dimensionality::<ndarray::Ix4>()
            .unwrap();
        if let Some(pool) = &mut self.pool {
            h = pool.forward(&h);
        }
        for block in &mut self.blocks {
            h = block.forward(&h);
        }
        let (b, c, mh, mw) = h.dim();
        self.cache_map_dims = Some((b, c, mh, mw));
        let mut pooled = Array2::zeros((b, c));
        for bi in 0..b {
            for ci in 0..c {
                let mut acc = 0.0;
                for y in 0..mh {
                    for xx in 0..mw {
                        acc += h[[bi, ci, y, xx]];
                    }
                }
                pooled[[bi, ci]] = acc / (mh * mw) as f64;
            }
        }
        self.head.forward(&pooled)
    }

    pub fn backward(&mut self, dlogits: &Array2<f64>) {
        let dpooled = self.head.backward(dlogits);
        let (b, c, mh, mw) = self.cache_map_dims.expect("forward before backward");
        let mut dmap = Array4::zeros((b, c, mh, mw));
        let scale = 1.0 / (mh * mw) as f64;
        for bi in 0..b {
            for ci in 0..c {
                let g = dpooled[[bi, ci]] * scale;
                for y in 0..mh {
                    for xx in 0..mw {
                        dmap[[bi, ci, y, xx]] = g;
                    }
                }
            }
        }
        let mut d = dmap;
        for block in self.blocks.iter_mut().rev() {
            d = block.backward(&d);
        }
        if let Some(pool) = &mut self.pool {
            d = pool.backward(&d);
        }
        let d = self
            .stem_act
            .backward(&d.into_dyn())
            .into_dimensionality::<ndarray::Ix4>()
            .unwrap();
        let d = ln_nchw_backward(&mut self.stem_norm, &d);
        let _ = self.stem.backward(&d);
    }

    pub fn params(&mut self) -> Vec<&mut Param> {
        let mut p = self.stem.params();
        p.extend(self.stem_norm.params());
        for block in &mut self.blocks {
            p.extend(block.params());
        }
        p.extend(self.head.params());
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::rand_array;
    use ndarray::Ix4;
    use rand::SeedableRng;

    #[test]
    fn tiny_forward_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = ConvNet::new(&ConvPlan::tiny_test(), 4, &mut rng);
        let x = rand_array(&[2, 3, 64, 64], 2, 1.0).into_dimensionality::<Ix4>().unwrap();
        let y = net.forward(&x);
        assert_eq!(y.dim(), (2, 4));
        assert!(y.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn deterministic_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = ConvNet::new(&ConvPlan::tiny_test(), 3, &mut rng);
        let x = rand_array(&[1, 3, 32, 32], 4, 1.0).into_dimensionality::<Ix4>().unwrap();
        let y1 = net.forward(&x);
        let y2 = net.forward(&x);
        assert_eq!(y1, y2);
    }

    #[test]
    fn batch_rows_independent() {
        // two identical rows in a batch give identical logits
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = ConvNet::new(&ConvPlan::tiny_test(), 3, &mut rng);
        let one = rand_array(&[1, 3, 32, 32], 6, 1.0).into_dimensionality::<Ix4>().unwrap();
        let mut two = Array4::zeros((2, 3, 32, 32));
        two.index_axis_mut(ndarray::Axis(0), 0).assign(&one.index_axis(ndarray::Axis(0), 0));
        two.index_axis_mut(ndarray::Axis(0), 1).assign(&one.index_axis(ndarray::Axis(0), 0));
        let y = net.forward(&two);
        for k in 0..3 {
            assert!((y[[0, k]] - y[[1, k]]).abs() < 1e-12);
        }
    }

    #[test]
    fn full_plan_constructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut net = ConvNet::new(&ConvPlan::full(), 10, &mut rng);
        // parameter count sanity: 16 blocks, stem, head
        let n_params: usize = net.params().iter().map(|p| p.len()).sum();
        assert!(n_params > 10_000_000, "full conv net has {n_params} params");
    }

    #[test]
    fn residual_block_gradients_match_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut block = ResBlock::new("t", 2, 4, 2, &mut rng);
        let x = rand_array(&[1, 2, 8, 8], 9, 1.0).into_dimensionality::<Ix4>().unwrap();
        let dy = rand_array(&[1, 4, 4, 4], 10, 1.0).into_dimensionality::<Ix4>().unwrap();
        let _ = block.forward(&x);
        for p in block.params() {
            p.zero_grad();
        }
        let _ = block.forward(&x);
        let dx = block.backward(&dy);

        use crate::nn::testutil::fd_rel_err;
        use ndarray::IxDyn;
        for idx in [[0usize, 0, 0, 0], [0, 1, 5, 3]] {
            let base = x[idx];
            let mut x2 = x.clone();
            let err = fd_rel_err(
                |v| {
                    x2[idx] = v;
                    let mut b2 = block.clone();
                    (&b2.forward(&x2) * &dy).sum()
                },
                base,
                dx[idx],
            );
            assert!(err < 1e-4, "dx{idx:?} err={err}");
        }
        let probe = [1usize, 0, 2, 1];
        let base = block.conv1.w.value[IxDyn(&probe)];
        let err = fd_rel_err(
            |v| {
                let mut b2 = block.clone();
                b2.conv1.w.value[IxDyn(&probe)] = v;
                (&b2.forward(&x) * &dy).sum()
            },
            base,
            block.conv1.w.grad[IxDyn(&probe)],
        );
        assert!(err < 1e-4, "conv1 dw err={err}");
        let base = block.down.as_ref().unwrap().w.value[IxDyn(&[3, 1, 0, 0])];
        let err = fd_rel_err(
            |v| {
                let mut b2 = block.clone();
                b2.down.as_mut().unwrap().w.value[IxDyn(&[3, 1, 0, 0])] = v;
                (&b2.forward(&x) * &dy).sum()
            },
            base,
            block.down.as_ref().unwrap().w.grad[IxDyn(&[3, 1, 0, 0])],
        );
        assert!(err < 1e-4, "down dw err={err}");
    }
}
