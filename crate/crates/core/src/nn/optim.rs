//! Adam with optional global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use super::param::Param;
use super::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Gradients are rescaled so their global norm does not exceed this.
    pub clip_norm: Option<f64>,
    pub steps: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(5.0),
            steps: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn with_clip(mut self, clip: Option<f64>) -> Self {
        self.clip_norm = clip;
        self
    }

    /// First and second moment estimates, one pair per bound parameter.
    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.first, &self.second)
    }

    /// Restores optimizer state saved with [`Adam::moments`].
    pub fn restore(&mut self, steps: u64, first: Vec<Tensor>, second: Vec<Tensor>) {
        assert_eq!(first.len(), second.len(), "moment lists differ in length");
        self.steps = steps;
        self.first = first;
        self.second = second;
    }

    /// Applies one update. `grads[i]` belongs to `params[i]`; a missing
    /// gradient counts as zero. Returns the pre-clipping global gradient norm.
    pub fn step(&mut self, params: Vec<&mut Param>, grads: &[Option<Tensor>]) -> f64 {
        assert_eq!(params.len(), grads.len(), "one gradient slot per parameter");
        if self.first.is_empty() {
            self.first = params.iter().map(|p| Tensor::zeros(p.value.rows, p.value.cols)).collect();
            self.second = self.first.clone();
        }
        assert_eq!(self.first.len(), params.len(), "optimizer bound to a different parameter set");

        let norm = grads
            .iter()
            .flatten()
            .map(|g| g.data.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt();
        let scale = match self.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };

        self.steps += 1;
        let t = self.steps as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        for ((p, g), (m, v)) in params
            .into_iter()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            let Some(g) = g else {
                // Moments still decay so the update rule stays uniform.
                for (mi, vi) in m.data.iter_mut().zip(v.data.iter_mut()) {
                    *mi *= self.beta1;
                    *vi *= self.beta2;
                }
                apply(p, m, v, self.lr, bc1, bc2, self.eps);
                continue;
            };
            for ((mi, vi), gi) in m.data.iter_mut().zip(v.data.iter_mut()).zip(&g.data) {
                let gi = gi * scale;
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
            }
            apply(p, m, v, self.lr, bc1, bc2, self.eps);
        }
        norm
    }
}

fn apply(p: &mut Param, m: &Tensor, v: &Tensor, lr: f64, bc1: f64, bc2: f64, eps: f64) {
    for ((x, mi), vi) in p.value.data.iter_mut().zip(&m.data).zip(&v.data) {
        let update = lr * (mi / bc1) / ((vi / bc2).sqrt() + eps);
        *x = (*x - update) as f32 as f64;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = Param::new("x", Tensor::row_vector(&[3.0, -2.0]));
        let mut opt = Adam::new(0.1).with_clip(None);
        for _ in 0..500 {
            let g = p.value.map(|x| 2.0 * x);
            opt.step(vec![&mut p], &[Some(g)]);
        }
        assert!(p.value.norm() < 1e-2, "{:?}", p.value);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Param::new("x", Tensor::row_vector(&[1.0]));
        let mut opt = Adam::new(0.5).with_clip(None);
        opt.step(vec![&mut p], &[Some(Tensor::row_vector(&[4.0]))]);
        assert!((p.value.data[0] - 0.5).abs() < 1e-6);
    }
}
