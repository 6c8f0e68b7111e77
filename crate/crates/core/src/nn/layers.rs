//! Building blocks: affine maps, LSTM cells, 1-D convolutions, embeddings.

use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::param::{Module, Param};
use super::tensor::Tensor;

/// `y = x W + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    pub fn new<R: Rng>(name: &str, input: usize, output: usize, rng: &mut R) -> Self {
        Self {
            weight: Param::fan_in_uniform(format!("{name}.weight"), input, output, rng),
            bias: Param::zeros(format!("{name}.bias"), 1, output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.value.rows
    }

    pub fn output_dim(&self) -> usize {
        self.weight.value.cols
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(&self.weight);
        let b = g.param(&self.bias);
        let xw = g.matmul(x, w);
        g.add_row(xw, b)
    }
}

impl Module for Linear {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Recurrent state of one LSTM layer for a batch.
#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

/// A single LSTM layer with gate order (input, forget, cell, output).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    pub w_input: Param,
    pub w_hidden: Param,
    pub bias: Param,
}

impl LstmCell {
    pub fn new<R: Rng>(name: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            w_input: Param::fan_in_uniform(format!("{name}.w_input"), input, 4 * hidden, rng),
            w_hidden: Param::orthogonal_blocks(format!("{name}.w_hidden"), hidden, 4, rng),
            bias: Param::zeros(format!("{name}.bias"), 1, 4 * hidden),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hidden.value.rows
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.value.rows
    }

    pub fn zero_state(&self, g: &mut Graph, batch: usize) -> LstmState {
        let h = g.constant(Tensor::zeros(batch, self.hidden_dim()));
        let c = g.constant(Tensor::zeros(batch, self.hidden_dim()));
        LstmState { h, c }
    }

    pub fn step(&self, g: &mut Graph, x: Var, state: LstmState) -> LstmState {
        let hd = self.hidden_dim();
        let wi = g.param(&self.w_input);
        let wh = g.param(&self.w_hidden);
        let b = g.param(&self.bias);
        let zx = g.matmul(x, wi);
        let zh = g.matmul(state.h, wh);
        let z = g.add(zx, zh);
        let z = g.add_row(z, b);
        let i = g.slice_cols(z, 0, hd);
        let f = g.slice_cols(z, hd, hd);
        let u = g.slice_cols(z, 2 * hd, hd);
        let o = g.slice_cols(z, 3 * hd, hd);
        let i = g.sigmoid(i);
        let f = g.sigmoid(f);
        let u = g.tanh(u);
        let o = g.sigmoid(o);
        let fc = g.mul(f, state.c);
        let iu = g.mul(i, u);
        let c = g.add(fc, iu);
        let tc = g.tanh(c);
        let h = g.mul(o, tc);
        LstmState { h, c }
    }

    /// Step that only advances rows whose mask entry is 1.
    pub fn masked_step(&self, g: &mut Graph, x: Var, state: LstmState, mask: &Rc<Tensor>) -> LstmState {
        let next = self.step(g, x, state);
        LstmState {
            h: g.blend(next.h, state.h, mask.clone()),
            c: g.blend(next.c, state.c, mask.clone()),
        }
    }
}

impl Module for LstmCell {
    fn params(&self) -> Vec<&Param> {
        vec![&self.w_input, &self.w_hidden, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w_input, &mut self.w_hidden, &mut self.bias]
    }
}

/// Same-length 1-D convolution over the rows (time axis) of a `T x C` input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conv1d {
    pub kernel: usize,
    pub weight: Param,
    pub bias: Param,
}

impl Conv1d {
    pub fn new<R: Rng>(name: &str, input: usize, output: usize, kernel: usize, rng: &mut R) -> Self {
        assert!(kernel % 2 == 1, "kernel size must be odd");
        Self {
            kernel,
            weight: Param::fan_in_uniform(format!("{name}.weight"), kernel * input, output, rng),
            bias: Param::zeros(format!("{name}.bias"), 1, output),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let half = (self.kernel / 2) as isize;
        let taps: Vec<Var> = (-half..=half).map(|k| g.shift_rows(x, k)).collect();
        let stacked = g.concat_cols(&taps);
        let w = g.param(&self.weight);
        let b = g.param(&self.bias);
        let y = g.matmul(stacked, w);
        g.add_row(y, b)
    }
}

impl Module for Conv1d {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Lookup table, one row per symbol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub table: Param,
}

impl Embedding {
    pub fn new<R: Rng>(name: &str, count: usize, dim: usize, rng: &mut R) -> Self {
        let data = (0..count * dim).map(|_| rng.gen_range(-1.0..=1.0) * 0.5).collect();
        Self {
            table: Param::new(format!("{name}.table"), Tensor::from_vec(count, dim, data)),
        }
    }

    pub fn forward(&self, g: &mut Graph, index: &[usize]) -> Var {
        let t = g.param(&self.table);
        g.gather_rows(t, index)
    }
}

impl Module for Embedding {
    fn params(&self) -> Vec<&Param> {
        vec![&self.table]
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.table]
    }
}

/// Row-wise layer normalization with learned gain and offset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gain: Param,
    pub offset: Param,
}

impl LayerNorm {
    pub fn new(name: &str, dim: usize) -> Self {
        Self {
            gain: Param::new(format!("{name}.gain"), Tensor::filled(1, dim, 1.0)),
            offset: Param::zeros(format!("{name}.offset"), 1, dim),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let n = g.layer_norm(x, 1e-5);
        let gain = g.param(&self.gain);
        let off = g.param(&self.offset);
        let y = g.mul_row(n, gain);
        g.add_row(y, off)
    }
}

impl Module for LayerNorm {
    fn params(&self) -> Vec<&Param> {
        vec![&self.gain, &self.offset]
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gain, &mut self.offset]
    }
}

/// Concatenates the parameter lists of several modules.
pub fn collect_params<'a>(modules: &[&'a dyn Module]) -> Vec<&'a Param> {
    modules.iter().flat_map(|m| m.params()).collect()
}
