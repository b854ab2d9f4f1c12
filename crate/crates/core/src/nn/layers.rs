use alloc::format;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};

/// Affine map `x W + b` applied to each row.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let weight = store.add_uniform(&format!("{name}.weight"), inputs, outputs, inputs, rng)?;
        let bias = store.add_uniform(&format!("{name}.bias"), 1, outputs, inputs, rng)?;
        Ok(Self {
            weight,
            bias,
            inputs,
            outputs,
        })
    }

    /// A layer whose weights and bias start at zero.
    pub fn zeros(store: &mut ParamStore, name: &str, inputs: usize, outputs: usize) -> Result<Self> {
        let weight = store.add_zeros(&format!("{name}.weight"), inputs, outputs)?;
        let bias = store.add_zeros(&format!("{name}.bias"), 1, outputs)?;
        Ok(Self {
            weight,
            bias,
            inputs,
            outputs,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let shape = g.shape(x);
        if shape[1] != self.inputs {
            return Err(Error::Shape {
                op: "linear",
                left: shape,
                right: [self.inputs, self.outputs],
            });
        }
        let w = g.param(store, self.weight)?;
        let b = g.param(store, self.bias)?;
        let y = g.matmul(x, w)?;
        g.add_row(y, b)
    }
}

/// Stack of linear layers with ReLU between them.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// `sizes` lists the widths from input to output. With `zero_last` the
    /// final layer starts at zero, so the network initially outputs zero.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        sizes: &[usize],
        zero_last: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::InvalidArgument(format!("mlp {name} needs at least two sizes")));
        }
        let n = sizes.len() - 1;
        let mut layers = Vec::with_capacity(n);
        for i in 0..n {
            let lname = format!("{name}.{i}");
            let layer = if zero_last && i == n - 1 {
                Linear::zeros(store, &lname, sizes[i], sizes[i + 1])?
            } else {
                Linear::new(store, &lname, sizes[i], sizes[i + 1], rng)?
            };
            layers.push(layer);
        }
        Ok(Self { layers })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, store, h)?;
            if i + 1 < self.layers.len() {
                h = g.relu(h)?;
            }
        }
        Ok(h)
    }
}

/// Row-wise layer normalization with learned gain and shift.
#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub shift: ParamId,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, width: usize) -> Result<Self> {
        let gain = store.add(&format!("{name}.gain"), super::Tensor::filled(1, width, 1.0))?;
        let shift = store.add_zeros(&format!("{name}.shift"), 1, width)?;
        Ok(Self { gain, shift })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let n = g.layer_norm_rows(x, LAYER_NORM_EPS)?;
        let gain = g.param(store, self.gain)?;
        let shift = g.param(store, self.shift)?;
        let y = g.mul_row(n, gain)?;
        g.add_row(y, shift)
    }
}

/// Scaled dot-product attention split over several heads.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
}

/// Output of an attention call, plus the weights of each head
/// (`queries x keys`).
#[derive(Debug, Clone)]
pub struct AttentionOutput {
    pub output: Var,
    pub weights: Vec<Var>,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, name: &str, width: usize, heads: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if heads == 0 || !width.is_multiple_of(heads) {
            return Err(Error::InvalidArgument(format!(
                "width {width} is not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            query: Linear::new(store, &format!("{name}.query"), width, width, rng)?,
            key: Linear::new(store, &format!("{name}.key"), width, width, rng)?,
            value: Linear::new(store, &format!("{name}.value"), width, width, rng)?,
            output: Linear::new(store, &format!("{name}.output"), width, width, rng)?,
            heads,
        })
    }

    /// Attends from the rows of `queries` to the rows of `keys`. Keys with
    /// `mask[j] == false` receive zero weight.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        queries: Var,
        keys: Var,
        mask: Option<&[bool]>,
    ) -> Result<AttentionOutput> {
        let width = self.query.outputs;
        let dh = width / self.heads;
        let q = self.query.forward(g, store, queries)?;
        let k = self.key.forward(g, store, keys)?;
        let v = self.value.forward(g, store, keys)?;
        let scale = 1.0 / libm::sqrt(dh as f64);
        let mut outs = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = g.slice_cols(q, h * dh, dh)?;
            let kh = g.slice_cols(k, h * dh, dh)?;
            let vh = g.slice_cols(v, h * dh, dh)?;
            let kt = g.transpose(kh)?;
            let scores = g.matmul(qh, kt)?;
            let scores = g.scale(scores, scale)?;
            let w = g.softmax_rows(scores, mask)?;
            outs.push(g.matmul(w, vh)?);
            weights.push(w);
        }
        let joined = g.concat_cols(&outs)?;
        let output = self.output.forward(g, store, joined)?;
        Ok(AttentionOutput { output, weights })
    }
}

/// Long short-term memory cell with gate order input, forget, cell, output.
#[derive(Debug, Clone, Copy)]
pub struct LstmCell {
    pub input: Linear,
    pub recurrent: ParamId,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(store: &mut ParamStore, name: &str, inputs: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let input = Linear::new(store, &format!("{name}.input"), inputs, 4 * hidden, rng)?;
        let recurrent = store.add_uniform(&format!("{name}.recurrent"), hidden, 4 * hidden, hidden, rng)?;
        Ok(Self {
            input,
            recurrent,
            hidden,
        })
    }

    /// One step; returns the new `(h, c)`.
    pub fn step(&self, g: &mut Graph, store: &ParamStore, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let n = self.hidden;
        let wx = self.input.forward(g, store, x)?;
        let u = g.param(store, self.recurrent)?;
        let wh = g.matmul(h, u)?;
        let z = g.add(wx, wh)?;
        let i = g.slice_cols(z, 0, n)?;
        let i = g.sigmoid(i)?;
        let f = g.slice_cols(z, n, n)?;
        let f = g.sigmoid(f)?;
        let cand = g.slice_cols(z, 2 * n, n)?;
        let cand = g.tanh(cand)?;
        let o = g.slice_cols(z, 3 * n, n)?;
        let o = g.sigmoid(o)?;
        let keep = g.mul(f, c)?;
        let write = g.mul(i, cand)?;
        let c_next = g.add(keep, write)?;
        let squashed = g.tanh(c_next)?;
        let h_next = g.mul(o, squashed)?;
        Ok((h_next, c_next))
    }
}
