//! Named trainable tensors and the [`Module`] trait that exposes them.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;

/// One named trainable tensor.
///
/// Values are kept exactly representable in `f32` (every optimizer update
/// rounds through `f32`), so checkpoints store them losslessly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let mut p = Self {
            name: name.into(),
            value,
        };
        p.round_to_f32();
        p
    }

    pub fn zeros(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        Self::new(name, Tensor::zeros(rows, cols))
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` with `fan_in = rows`.
    pub fn fan_in_uniform<R: Rng>(name: impl Into<String>, rows: usize, cols: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (rows.max(1) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        Self::new(name, Tensor::from_vec(rows, cols, data))
    }

    /// `rows x (blocks * rows)` matrix made of `blocks` orthogonal square
    /// blocks side by side (one per recurrent gate).
    pub fn orthogonal_blocks<R: Rng>(name: impl Into<String>, rows: usize, blocks: usize, rng: &mut R) -> Self {
        let cols = rows * blocks;
        let mut out = Tensor::zeros(rows, cols);
        for b in 0..blocks {
            let q = random_orthogonal(rows, rng);
            for r in 0..rows {
                for c in 0..rows {
                    out.set(r, b * rows + c, q[r * rows + c]);
                }
            }
        }
        Self::new(name, out)
    }

    pub fn round_to_f32(&mut self) {
        for x in self.value.data.iter_mut() {
            *x = *x as f32 as f64;
        }
    }

    pub fn numel(&self) -> usize {
        self.value.len()
    }
}

/// Modified Gram-Schmidt on a Gaussian matrix.
fn random_orthogonal<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    for i in 0..n {
        for j in 0..i {
            let dot: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
            let prev = cols[j].clone();
            for (x, p) in cols[i].iter_mut().zip(&prev) {
                *x -= dot * p;
            }
        }
        let norm = cols[i].iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        for x in cols[i].iter_mut() {
            *x /= norm;
        }
    }
    let mut out = vec![0.0; n * n];
    for (c, col) in cols.iter().enumerate() {
        for (r, v) in col.iter().enumerate() {
            out[r * n + c] = *v;
        }
    }
    out
}

/// A component that owns parameters, in a fixed deterministic order.
pub trait Module {
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }
}
