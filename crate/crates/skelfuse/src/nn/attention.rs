//! Windowed multi-head self-attention and patch merging.
//!
//! Tokens live on a [B, H, W, C] grid. Attention runs inside non-overlapping
//! `window`×`window` tiles; a block may cyclically shift the grid by half a
//! window first, with an additive mask that stops tokens wrapped around an
//! edge from attending across it. A learned bias indexed by relative token
//! offset is added to every attention logit.

use ndarray::{Array2, Array3, Array4};
use rand_chacha::ChaCha8Rng;

use super::{normal_init, LayerNorm, Linear, Param};

const MASK_OFF: f64 = -100.0;

/// Cyclic roll along the spatial axes, torch-roll semantics:
/// out[y, x] = in[(y - sy) mod H, (x - sx) mod W].
fn roll(x: &Array4<f64>, sy: isize, sx: isize) -> Array4<f64> {
    let (b, h, w, c) = x.dim();
    let mut out = Array4::zeros((b, h, w, c));
    for bi in 0..b {
        for y in 0..h {
            let src_y = (y as isize - sy).rem_euclid(h as isize) as usize;
            for xx in 0..w {
                let src_x = (xx as isize - sx).rem_euclid(w as isize) as usize;
                for ci in 0..c {
                    out[[bi, y, xx, ci]] = x[[bi, src_y, src_x, ci]];
                }
            }
        }
    }
    out
}

/// Split the grid into window tiles: [B·nWin, window², C]. Window order is
/// row-major over (batch, tile row, tile col); token order row-major inside
/// the tile.
fn window_partition(x: &Array4<f64>, window: usize) -> Array3<f64> {
    let (b, h, w, c) = x.dim();
    let (nh, nw) = (h / window, w / window);
    let t = window * window;
    let mut out = Array3::zeros((b * nh * nw, t, c));
    for bi in 0..b {
        for wy in 0..nh {
            for wx in 0..nw {
                let win = (bi * nh + wy) * nw + wx;
                for iy in 0..window {
                    for ix in 0..window {
                        for ci in 0..c {
                            out[[win, iy * window + ix, ci]] =
                                x[[bi, wy * window + iy, wx * window + ix, ci]];
                        }
                    }
                }
            }
        }
    }
    out
}

fn window_unpartition(wins: &Array3<f64>, window: usize, b: usize, h: usize, w: usize) -> Array4<f64> {
    let c = wins.dim().2;
    let (nh, nw) = (h / window, w / window);
    let mut out = Array4::zeros((b, h, w, c));
    for bi in 0..b {
        for wy in 0..nh {
            for wx in 0..nw {
                let win = (bi * nh + wy) * nw + wx;
                for iy in 0..window {
                    for ix in 0..window {
                        for ci in 0..c {
                            out[[bi, wy * window + iy, wx * window + ix, ci]] =
                                wins[[win, iy * window + ix, ci]];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Region ids for the shifted layout; windows of the mask grid tell which
/// token pairs belong to different pre-shift regions and must not attend.
fn attention_mask(h: usize, w: usize, window: usize, shift: usize) -> Array3<f64> {
    let seg = |extent: usize| {
        [
            (0, extent - window),
            (extent - window, extent - shift),
            (extent - shift, extent),
        ]
    };
    let mut ids = Array4::zeros((1, h, w, 1));
    let mut cnt = 0.0;
    for (y0, y1) in seg(h) {
        for (x0, x1) in seg(w) {
            for y in y0..y1 {
                for x in x0..x1 {
                    ids[[0, y, x, 0]] = cnt;
                }
            }
            cnt += 1.0;
        }
    }
    let win_ids = window_partition(&ids, window);
    let (nwin, t, _) = win_ids.dim();
    let mut mask = Array3::zeros((nwin, t, t));
    for win in 0..nwin {
        for i in 0..t {
            for j in 0..t {
                if win_ids[[win, i, 0]] != win_ids[[win, j, 0]] {
                    mask[[win, i, j]] = MASK_OFF;
                }
            }
        }
    }
    mask
}

/// Relative-offset index table: entry i·T + j points into the
/// (2·window−1)² bias rows for the offset between tokens i and j.
fn relative_index(window: usize) -> Vec<usize> {
    let t = window * window;
    let span = 2 * window - 1;
    let mut idx = Vec::with_capacity(t * t);
    for i in 0..t {
        let (yi, xi) = (i / window, i % window);
        for j in 0..t {
            let (yj, xj) = (j / window, j % window);
            let dy = yi as isize - yj as isize + window as isize - 1;
            let dx = xi as isize - xj as isize + window as isize - 1;
            idx.push(dy as usize * span + dx as usize);
        }
    }
    idx
}

#[derive(Debug, Clone)]
struct AttnCache {
    q: Array4<f64>,
    k: Array4<f64>,
    v: Array4<f64>,
    probs: Array4<f64>,
    in_dims: (usize, usize, usize, usize),
}

/// Shifted-window multi-head attention with relative position bias.
#[derive(Debug, Clone)]
pub struct WindowAttention {
    pub dim: usize,
    pub heads: usize,
    pub window: usize,
    pub shift: usize,
    pub qkv: Linear,
    pub proj: Linear,
    pub rel_bias: Param,
    rel_index: Vec<usize>,
    cache: Option<AttnCache>,
}

impl WindowAttention {
    pub fn new(
        name: &str,
        dim: usize,
        heads: usize,
        window: usize,
        shift: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(dim % heads == 0, "dim {dim} not divisible by heads {heads}");
        assert!(shift < window, "shift {shift} must be < window {window}");
        let span = 2 * window - 1;
        Self {
            dim,
            heads,
            window,
            shift,
            qkv: Linear::new(&format!("{name}.qkv"), dim, 3 * dim, rng),
            proj: Linear::new(&format!("{name}.proj"), dim, dim, rng),
            rel_bias: Param::new(
                format!("{name}.rel_bias"),
                normal_init(rng, &[span * span, heads], 0.02),
            ),
            rel_index: relative_index(window),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array4<f64>) -> Array4<f64> {
        let (b, h, w, c) = x.dim();
        assert_eq!(c, self.dim);
        assert!(h % self.window == 0 && w % self.window == 0, "grid {h}×{w} not divisible by window {}", self.window);
        let shift = self.shift as isize;
        let shifted = if self.shift > 0 { roll(x, -shift, -shift) } else { x.clone() };
        let wins = window_partition(&shifted, self.window);
        let (nwin, t, _) = wins.dim();
        let flat = wins.into_shape_with_order((nwin * t, c)).unwrap();
        let qkv = self.qkv.forward(&flat);
        let hd = c / self.heads;
        let mut q = Array4::zeros((nwin, self.heads, t, hd));
        let mut k = Array4::zeros((nwin, self.heads, t, hd));
        let mut v = Array4::zeros((nwin, self.heads, t, hd));
        for win in 0..nwin {
            for ti in 0..t {
                let row = win * t + ti;
                for head in 0..self.heads {
                    for d in 0..hd {
                        q[[win, head, ti, d]] = qkv[[row, head * hd + d]];
                        k[[win, head, ti, d]] = qkv[[row, c + head * hd + d]];
                        v[[win, head, ti, d]] = qkv[[row, 2 * c + head * hd + d]];
                    }
                }
            }
        }
        let scale = 1.0 / (hd as f64).sqrt();
        let mask = if self.shift > 0 {
            Some(attention_mask(h, w, self.window, self.shift))
        } else {
            None
        };
        let wins_per_img = (h / self.window) * (w / self.window);
        let mut probs = Array4::zeros((nwin, self.heads, t, t));
        let mut attn_out = Array2::zeros((nwin * t, c));
        for win in 0..nwin {
            let wpos = win % wins_per_img;
            for head in 0..self.heads {
                for i in 0..t {
                    let mut row = vec![0.0; t];
                    let mut max = f64::NEG_INFINITY;
                    for (j, slot) in row.iter_mut().enumerate() {
                        let mut dot = 0.0;
                        for d in 0..hd {
                            dot += q[[win, head, i, d]] * k[[win, head, j, d]];
                        }
                        let mut logit = dot * scale
                            + self.rel_bias.value[ndarray::IxDyn(&[self.rel_index[i * t + j], head])];
                        if let Some(m) = &mask {
                            logit += m[[wpos, i, j]];
                        }
                        *slot = logit;
                        max = max.max(logit);
                    }
                    let mut sum = 0.0;
                    for slot in row.iter_mut() {
                        *slot = (*slot - max).exp();
                        sum += *slot;
                    }
                    for (j, slot) in row.iter().enumerate() {
                        probs[[win, head, i, j]] = slot / sum;
                    }
                    for d in 0..hd {
                        let mut acc = 0.0;
                        for j in 0..t {
                            acc += probs[[win, head, i, j]] * v[[win, head, j, d]];
                        }
                        attn_out[[win * t + i, head * hd + d]] = acc;
                    }
                }
            }
        }
        let projected = self.proj.forward(&attn_out);
        let wins_out = projected.into_shape_with_order((nwin, t, c)).unwrap();
        let merged = window_unpartition(&wins_out, self.window, b, h, w);
        let out = if self.shift > 0 { roll(&merged, shift, shift) } else { merged };
        self.cache = Some(AttnCache {
            q,
            k,
            v,
            probs,
            in_dims: (b, h, w, c),
        });
        out
    }

    pub fn backward(&mut self, dy: &Array4<f64>) -> Array4<f64> {
        let cache = self.cache.take().expect("forward before backward");
        let (b, h, w, c) = cache.in_dims;
        let shift = self.shift as isize;
        let dy_sh = if self.shift > 0 { roll(dy, -shift, -shift) } else { dy.clone() };
        let dwins = window_partition(&dy_sh, self.window);
        let (nwin, t, _) = dwins.dim();
        let dproj_out = dwins.into_shape_with_order((nwin * t, c)).unwrap();
        let dattn_out = self.proj.backward(&dproj_out);
        let hd = c / self.heads;
        let scale = 1.0 / (hd as f64).sqrt();
        let mut dqkv: Array2<f64> = Array2::zeros((nwin * t, 3 * c));
        for win in 0..nwin {
            for head in 0..self.heads {
                // gradients through out = P·v
                let mut dp: Array2<f64> = Array2::zeros((t, t));
                let mut dv: Array2<f64> = Array2::zeros((t, hd));
                for i in 0..t {
                    for d in 0..hd {
                        let g = dattn_out[[win * t + i, head * hd + d]];
                        for j in 0..t {
                            dp[[i, j]] += g * cache.v[[win, head, j, d]];
                            dv[[j, d]] += g * cache.probs[[win, head, i, j]];
                        }
                    }
                }
                // softmax backward per row
                let mut da: Array2<f64> = Array2::zeros((t, t));
                for i in 0..t {
                    let mut dot = 0.0;
                    for j in 0..t {
                        dot += dp[[i, j]] * cache.probs[[win, head, i, j]];
                    }
                    for j in 0..t {
                        da[[i, j]] = cache.probs[[win, head, i, j]] * (dp[[i, j]] - dot);
                    }
                }
                // bias and q/k gradients
                for i in 0..t {
                    for j in 0..t {
                        let g = da[[i, j]];
                        self.rel_bias.grad[ndarray::IxDyn(&[self.rel_index[i * t + j], head])] += g;
                    }
                }
                for i in 0..t {
                    for d in 0..hd {
                        let mut dq = 0.0;
                        for j in 0..t {
                            dq += da[[i, j]] * cache.k[[win, head, j, d]];
                        }
                        dqkv[[win * t + i, head * hd + d]] += dq * scale;
                    }
                }
                for j in 0..t {
                    for d in 0..hd {
                        let mut dk = 0.0;
                        for i in 0..t {
                            dk += da[[i, j]] * cache.q[[win, head, i, d]];
                        }
                        dqkv[[win * t + j, c + head * hd + d]] += dk * scale;
                        dqkv[[win * t + j, 2 * c + head * hd + d]] += dv[[j, d]];
                    }
                }
            }
        }
        let dflat = self.qkv.backward(&dqkv);
        let dwins_in = dflat.into_shape_with_order((nwin, t, c)).unwrap();
        let dmerged = window_unpartition(&dwins_in, self.window, b, h, w);
        if self.shift > 0 {
            roll(&dmerged, shift, shift)
        } else {
            dmerged
        }
    }

    pub fn params(&mut self) -> Vec<&mut Param> {
        let mut p = self.qkv.params();
        p.extend(self.proj.params());
        p.push(&mut self.rel_bias);
        p
    }
}

/// 2×2 token merging: concatenates each 2×2 neighborhood channel-wise,
/// normalizes, and linearly reduces 4C to 2C. Halves the grid, doubles the
/// width.
#[derive(Debug, Clone)]
pub struct PatchMerging {
    pub norm: LayerNorm,
    pub reduction: Linear,
    cache_dims: Option<(usize, usize, usize, usize)>,
}

impl PatchMerging {
    pub fn new(name: &str, in_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            norm: LayerNorm::new(&format!("{name}.norm"), 4 * in_dim, rng),
            reduction: Linear::new(&format!("{name}.reduction"), 4 * in_dim, 2 * in_dim, rng),
            cache_dims: None,
        }
    }

    pub fn forward(&mut self, x: &Array4<f64>) -> Array4<f64> {
        let (b, h, w, c) = x.dim();
        assert!(h % 2 == 0 && w % 2 == 0, "grid {h}×{w} not even");
        let (oh, ow) = (h / 2, w / 2);
        let mut gathered = Array2::zeros((b * oh * ow, 4 * c));
        for bi in 0..b {
            for y in 0..oh {
                for xx in 0..ow {
                    let row = (bi * oh + y) * ow + xx;
                    // order: (2y,2x), (2y+1,2x), (2y,2x+1), (2y+1,2x+1)
                    let corners = [
                        (2 * y, 2 * xx),
                        (2 * y + 1, 2 * xx),
                        (2 * y, 2 * xx + 1),
                        (2 * y + 1, 2 * xx + 1),
                    ];
                    for (q, (sy, sx)) in corners.iter().enumerate() {
                        for ci in 0..c {
                            gathered[[row, q * c + ci]] = x[[bi, *sy, *sx, ci]];
                        }
                    }
                }
            }
        }
        let normed = self.norm.forward(&gathered);
        let reduced = self.reduction.forward(&normed);
        self.cache_dims = Some((b, h, w, c));
        reduced.into_shape_with_order((b, oh, ow, 2 * c)).unwrap()
    }

    pub fn backward(&mut self, dy: &Array4<f64>) -> Array4<f64> {
        let (b, h, w, c) = self.cache_dims.expect("forward before backward");
        let (oh, ow) = (h / 2, w / 2);
        let dflat = dy
            .to_owned()
            .into_shape_with_order((b * oh * ow, 2 * c))
            .unwrap();
        let dnormed = self.reduction.backward(&dflat);
        let dgathered = self.norm.backward(&dnormed);
        let mut dx = Array4::zeros((b, h, w, c));
        for bi in 0..b {
            for y in 0..oh {
                for xx in 0..ow {
                    let row = (bi * oh + y) * ow + xx;
                    let corners = [
                        (2 * y, 2 * xx),
                        (2 * y + 1, 2 * xx),
                        (2 * y, 2 * xx + 1),
                        (2 * y + 1, 2 * xx + 1),
                    ];
                    for (q, (sy, sx)) in corners.iter().enumerate() {
                        for ci in 0..c {
                            dx[[bi, *sy, *sx, ci]] += dgathered[[row, q * c + ci]];
                        }
                    }
                }
            }
        }
        dx
    }

    pub fn params(&mut self) -> Vec<&mut Param> {
        let mut p = self.norm.params();
        p.extend(self.reduction.params());
        p
    }
}
