//! Small classifiers trained on frozen embeddings to measure what they encode.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{Adam, Graph, Linear, Module, Tensor};

/// Settings of a probe classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    pub hidden: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            iterations: 400,
            learning_rate: 1e-2,
            seed: 0,
        }
    }
}

/// A one-hidden-layer classifier fitted by full-batch Adam on standardized inputs.
pub struct Probe {
    hidden: Linear,
    output: Linear,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Probe {
    pub fn fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, cfg: &ProbeConfig) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::Validation("probe needs one label per non-empty input".into()));
        }
        if y.iter().any(|&l| l >= n_classes) {
            return Err(Error::Validation("probe label out of range".into()));
        }
        let d = x[0].len();
        let n = x.len() as f64;
        let mean: Vec<f64> = (0..d).map(|k| x.iter().map(|v| v[k]).sum::<f64>() / n).collect();
        let scale: Vec<f64> = (0..d)
            .map(|k| {
                let var = x.iter().map(|v| (v[k] - mean[k]).powi(2)).sum::<f64>() / n;
                1.0 / var.sqrt().max(1e-8)
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut probe = Self {
            hidden: Linear::new("probe.hidden", d, cfg.hidden, &mut rng),
            output: Linear::new("probe.output", cfg.hidden, n_classes, &mut rng),
            mean,
            scale,
        };
        let inputs = probe.standardize(x);
        let mut onehot = Tensor::zeros(x.len(), n_classes);
        for (i, &l) in y.iter().enumerate() {
            onehot.set(i, l, 1.0);
        }
        let mut opt = Adam::new(cfg.learning_rate).with_clip(None);
        for _ in 0..cfg.iterations {
            let mut g = Graph::new();
            let xin = g.constant(inputs.clone());
            let p = probe.forward(&mut g, xin);
            let p = g.clamp(p, 1e-12, 1.0);
            let lp = g.log(p);
            let t = g.constant(onehot.clone());
            let picked = g.mul(lp, t);
            let s = g.sum(picked);
            let loss = g.scale(s, -1.0 / n);
            let grads = g.backward(loss);
            let gs: Vec<Option<Tensor>> = probe
                .hidden
                .params()
                .into_iter()
                .chain(probe.output.params())
                .map(|p| grads.param(p).cloned())
                .collect();
            let mut params = probe.hidden.params_mut();
            params.extend(probe.output.params_mut());
            opt.step(params, &gs);
        }
        Ok(probe)
    }

    fn standardize(&self, x: &[Vec<f64>]) -> Tensor {
        let rows: Vec<Vec<f64>> = x
            .iter()
            .map(|v| v.iter().zip(&self.mean).zip(&self.scale).map(|((a, m), s)| (a - m) * s).collect())
            .collect();
        Tensor::from_rows(&rows)
    }

    fn forward(&self, g: &mut Graph, x: crate::nn::Var) -> crate::nn::Var {
        let h = self.hidden.forward(g, x);
        let h = g.tanh(h);
        let o = self.output.forward(g, h);
        g.softmax_rows(o)
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Vec<usize> {
        if x.is_empty() {
            return Vec::new();
        }
        let mut g = Graph::new();
        g.set_grad_enabled(false);
        let xin = g.constant(self.standardize(x));
        let p = self.forward(&mut g, xin);
        let p = g.value(p);
        (0..p.rows)
            .map(|r| {
                p.row(r)
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .unwrap()
            })
            .collect()
    }

    pub fn accuracy(&self, x: &[Vec<f64>], y: &[usize]) -> f64 {
        accuracy(&self.predict(x), y)
    }
}

/// Fraction of positions where `predicted` equals `truth`.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    predicted.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}
