//! 2D convolution (im2col) and max pooling.

use ndarray::{Array2, Array4, ArrayD};
use rand_chacha::ChaCha8Rng;

use super::{kaiming_init, Param};

/// Standard 2D convolution. Input [B, C, H, W], kernel [O, C, K, K].
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub w: Param,
    pub b: Param,
    pub stride: usize,
    pub pad: usize,
    cache: Option<ConvCache>,
}

#[derive(Debug, Clone)]
struct ConvCache {
    col: Array2<f64>,
    in_shape: (usize, usize, usize, usize),
    out_hw: (usize, usize),
}

fn conv_out(extent: usize, k: usize, stride: usize, pad: usize) -> usize {
    (extent + 2 * pad - k) / stride + 1
}

impl Conv2d {
    pub fn new(
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = in_ch * kernel * kernel;
        let w = kaiming_init(rng, &[out_ch, in_ch, kernel, kernel], fan_in);
        let b = ArrayD::zeros(ndarray::IxDyn(&[out_ch]));
        Self {
            w: Param::new(format!("{name}.w"), w),
            b: Param::new(format!("{name}.b"), b),
            stride,
            pad,
            cache: None,
        }
    }

    pub fn kernel(&self) -> usize {
        self.w.value.shape()[2]
    }

    pub fn out_ch(&self) -> usize {
        self.w.value.shape()[0]
    }

    pub fn in_ch(&self) -> usize {
        self.w.value.shape()[1]
    }

    fn im2col(&self, x: &Array4<f64>) -> (Array2<f64>, (usize, usize)) {
        let (b, c, h, w) = x.dim();
        let k = self.kernel();
        let (oh, ow) = (conv_out(h, k, self.stride, self.pad), conv_out(w, k, self.stride, self.pad));
        let mut col = Array2::zeros((b * oh * ow, c * k * k));
        for bi in 0..b {
            for oy in 0..oh {
                for ox in 0..ow {
                    let row = (bi * oh + oy) * ow + ox;
                    for ci in 0..c {
                        for ky in 0..k {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..k {
                                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                col[[row, (ci * k + ky) * k + kx]] =
                                    x[[bi, ci, iy as usize, ix as usize]];
                            }
                        }
                    }
                }
            }
        }
        (col, (oh, ow))
    }

    pub fn forward(&mut self, x: &Array4<f64>) -> Array4<f64> {
        let (b, c, h, w) = x.dim();
        assert_eq!(c, self.in_ch(), "channel mismatch");
        let (col, (oh, ow)) = self.im2col(x);
        let o = self.out_ch();
        let k = self.kernel();
        let wflat = self
            .w
            .value
            .view()
            .into_shape_with_order((o, c * k * k))
            .unwrap();
        let mut flat = col.dot(&wflat.t());
        for mut row in flat.rows_mut() {
            for (v, &bv) in row.iter_mut().zip(self.b.value.iter()) {
                *v += bv;
            }
        }
        let mut y = Array4::zeros((b, o, oh, ow));
        for bi in 0..b {
            for oy in 0..oh {
                for ox in 0..ow {
                    let row = (bi * oh + oy) * ow + ox;
                    for oc in 0..o {
                        y[[bi, oc, oy, ox]] = flat[[row, oc]];
                    }
                }
            }
        }
        self.cache = Some(ConvCache {
            col,
            in_shape: (b, c, h, w),
            out_hw: (oh, ow),
        });
        y
    }

    pub fn backward(&mut self, dy: &Array4<f64>) -> Array4<f64> {
        let cache = self.cache.as_ref().expect("forward before backward");
        let (b, c, h, w) = cache.in_shape;
        let (oh, ow) = cache.out_hw;
        let o = self.out_ch();
        let k = self.kernel();
        let mut dyflat = Array2::zeros((b * oh * ow, o));
        for bi in 0..b {
            for oy in 0..oh {
                for ox in 0..ow {
                    let row = (bi * oh + oy) * ow + ox;
                    for oc in 0..o {
                        dyflat[[row, oc]] = dy[[bi, oc, oy, ox]];
                    }
                }
            }
        }
        let dwflat = dyflat.t().dot(&cache.col);
        {
            let mut wg = self
                .w
                .grad
                .view_mut()
                .into_shape_with_order((o, c * k * k))
                .unwrap();
            wg += &dwflat;
        }
        for (oc, g) in self.b.grad.iter_mut().enumerate() {
            *g += dyflat.column(oc).sum();
        }
        let wflat = self
            .w
            .value
            .view()
            .into_shape_with_order((o, c * k * k))
            .unwrap();
        let dcol = dyflat.dot(&wflat);
        // col2im: scatter-add back into input positions
        let mut dx = Array4::zeros((b, c, h, w));
        for bi in 0..b {
            for oy in 0..oh {
                for ox in 0..ow {
                    let row = (bi * oh + oy) * ow + ox;
                    for ci in 0..c {
                        for ky in 0..k {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..k {
                                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                dx[[bi, ci, iy as usize, ix as usize]] +=
                                    dcol[[row, (ci * k + ky) * k + kx]];
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    pub fn params(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }
}

/// Max pooling with argmax cache for the backward pass.
#[derive(Debug, Clone)]
pub struct MaxPool2d {
    pub kernel: usize,
    pub stride: usize,
    argmax: Option<(Vec<(usize, usize)>, (usize, usize, usize, usize), (usize, usize))>,
}

impl MaxPool2d {
    pub fn new(kernel: usize, stride: usize) -> Self {
        Self {
            kernel,
            stride,
            argmax: None,
        }
    }

    pub fn forward(&mut self, x: &Array4<f64>) -> Array4<f64> {
        let (b, c, h, w) = x.dim();
        let oh = (h - self.kernel) / self.stride + 1;
        let ow = (w - self.kernel) / self.stride + 1;
        let mut y = Array4::zeros((b, c, oh, ow));
        let mut argmax = Vec::with_capacity(b * c * oh * ow);
        for bi in 0..b {
            for ci in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_pos = (0, 0);
                        for ky in 0..self.kernel {
                            for kx in 0..self.kernel {
                                let iy = oy * self.stride + ky;
                                let ix = ox * self.stride + kx;
                                let v = x[[bi, ci, iy, ix]];
                                if v > best {
                                    best = v;
                                    best_pos = (iy, ix);
                                }
                            }
                        }
                        y[[bi, ci, oy, ox]] = best;
                        argmax.push(best_pos);
                    }
                }
            }
        }
        self.argmax = Some((argmax, (b, c, h, w), (oh, ow)));
        y
    }

    pub fn backward(&mut self, dy: &Array4<f64>) -> Array4<f64> {
        let (argmax, in_shape, (oh, ow)) = self.argmax.as_ref().expect("forward before backward");
        let (b, c, h, w) = *in_shape;
        let mut dx = Array4::zeros((b, c, h, w));
        let mut i = 0;
        for bi in 0..b {
            for ci in 0..c {
                for oy in 0..*oh {
                    for ox in 0..*ow {
                        let (iy, ix) = argmax[i];
                        dx[[bi, ci, iy, ix]] += dy[[bi, ci, oy, ox]];
                        i += 1;
                    }
                }
            }
        }
        dx
    }
}
