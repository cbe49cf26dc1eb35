//! Fully connected layer.

use ndarray::{Array2, ArrayD, Ix2};
use rand_chacha::ChaCha8Rng;

use super::{normal_init, Param};

/// y = x·Wᵀ + b over the last axis; x is [N, in].
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Param,
    pub b: Param,
    cache_x: Option<Array2<f64>>,
}

impl Linear {
    pub fn new(name: &str, in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        // fan-in scaling; at the small widths used here a fixed small std
        // would leave attention logits near zero and stall early training
        let w = normal_init(rng, &[out_dim, in_dim], (1.0 / in_dim as f64).sqrt());
        let b = ArrayD::zeros(ndarray::IxDyn(&[out_dim]));
        Self {
            w: Param::new(format!("{name}.w"), w),
            b: Param::new(format!("{name}.b"), b),
            cache_x: None,
        }
    }

    /// All-zero weights; used for classifier heads so early training is
    /// driven by feature gradients rather than a random readout.
    pub fn new_zeroed(name: &str, in_dim: usize, out_dim: usize) -> Self {
        Self {
            w: Param::new(
                format!("{name}.w"),
                ArrayD::zeros(ndarray::IxDyn(&[out_dim, in_dim])),
            ),
            b: Param::new(format!("{name}.b"), ArrayD::zeros(ndarray::IxDyn(&[out_dim]))),
            cache_x: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.value.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.w.value.shape()[0]
    }

    pub fn forward(&mut self, x: &Array2<f64>) -> Array2<f64> {
        let w = self.w.value.view().into_dimensionality::<Ix2>().unwrap();
        let mut y = x.dot(&w.t());
        for mut row in y.rows_mut() {
            for (v, &b) in row.iter_mut().zip(self.b.value.iter()) {
                *v += b;
            }
        }
        self.cache_x = Some(x.clone());
        y
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array2<f64> {
        let x = self.cache_x.as_ref().expect("forward before backward");
        let w = self.w.value.view().into_dimensionality::<Ix2>().unwrap();
        let dw = dy.t().dot(x);
        let mut wg = self.w.grad.view_mut().into_dimensionality::<Ix2>().unwrap();
        wg += &dw;
        for (i, g) in self.b.grad.iter_mut().enumerate() {
            *g += dy.column(i).sum();
        }
        dy.dot(&w)
    }

    pub fn params(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }
}
