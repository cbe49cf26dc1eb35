//! Layer normalization over the channel (last) axis.

use ndarray::{Array1, Array2, ArrayD};
use rand_chacha::ChaCha8Rng;

use super::Param;

/// Per-token LayerNorm: each row of [N, C] is standardized over C, then
/// scaled and shifted by learned per-channel gamma/beta.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: Param,
    pub beta: Param,
    pub eps: f64,
    cache: Option<Cache>,
}

#[derive(Debug, Clone)]
struct Cache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn new(name: &str, dim: usize, _rng: &mut ChaCha8Rng) -> Self {
        Self {
            gamma: Param::new(format!("{name}.gamma"), ArrayD::ones(ndarray::IxDyn(&[dim]))),
            beta: Param::new(format!("{name}.beta"), ArrayD::zeros(ndarray::IxDyn(&[dim]))),
            eps: 1e-5,
            cache: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.value.len()
    }

    pub fn forward(&mut self, x: &Array2<f64>) -> Array2<f64> {
        let (n, c) = x.dim();
        let mut xhat = Array2::zeros((n, c));
        let mut inv_std = Array1::zeros(n);
        let mut y = Array2::zeros((n, c));
        for i in 0..n {
            let row = x.row(i);
            let mu = row.sum() / c as f64;
            let var = row.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + self.eps).sqrt();
            inv_std[i] = is;
            for j in 0..c {
                let xh = (row[j] - mu) * is;
                xhat[[i, j]] = xh;
                y[[i, j]] = self.gamma.value[ndarray::IxDyn(&[j])] * xh
                    + self.beta.value[ndarray::IxDyn(&[j])];
            }
        }
        self.cache = Some(Cache { xhat, inv_std });
        y
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array2<f64> {
        let Cache { xhat, inv_std } = self.cache.as_ref().expect("forward before backward");
        let (n, c) = dy.dim();
        let mut dx = Array2::zeros((n, c));
        for i in 0..n {
            let mut sum_dxhat = 0.0;
            let mut sum_dxhat_xhat = 0.0;
            for j in 0..c {
                let g = self.gamma.value[ndarray::IxDyn(&[j])];
                let dxhat = dy[[i, j]] * g;
                sum_dxhat += dxhat;
                sum_dxhat_xhat += dxhat * xhat[[i, j]];
            }
            for j in 0..c {
                let g = self.gamma.value[ndarray::IxDyn(&[j])];
                let dxhat = dy[[i, j]] * g;
                dx[[i, j]] = inv_std[i]
                    * (dxhat - sum_dxhat / c as f64 - xhat[[i, j]] * sum_dxhat_xhat / c as f64);
            }
        }
        for j in 0..c {
            let mut dg = 0.0;
            let mut db = 0.0;
            for i in 0..n {
                dg += dy[[i, j]] * xhat[[i, j]];
                db += dy[[i, j]];
            }
            self.gamma.grad[ndarray::IxDyn(&[j])] += dg;
            self.beta.grad[ndarray::IxDyn(&[j])] += db;
        }
        dx
    }

    pub fn params(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }
}
