//! Trunk building blocks shared by the student and the teacher.

use alloc::vec::Vec;

use crate::nn::{Graph, ParamRef, Var};

/// References to one LSTM direction: input weights `E×4H`, recurrent weights
/// `H×4H` and a single bias `4H`, gates ordered `[i f g o]`.
#[derive(Debug, Clone, Copy)]
pub struct LstmRefs {
    pub w_x: ParamRef,
    pub w_h: ParamRef,
    pub bias: ParamRef,
}

/// Runs one LSTM direction over a time-major `[T·batch × E]` input and returns
/// the `[T·batch × H]` hidden states in time order. Padding rows carry the
/// state through, so a reversed pass starts fresh at each sequence's end.
pub fn lstm_direction(g: &mut Graph, x: Var, refs: LstmRefs, batch: usize, mask: &[bool], reverse: bool) -> Var {
    let w_x = g.param(refs.w_x);
    let w_h = g.param(refs.w_h);
    let bias = g.param(refs.bias);
    let xw = g.matmul(x, w_x);
    let xw = g.add_bias(xw, bias);
    g.lstm_sequence(xw, w_h, batch, mask, reverse)
}

/// Bidirectional LSTM: `[forward | backward]` states, `[T·batch × 2H]`.
pub fn bilstm_forward(g: &mut Graph, x: Var, fwd: LstmRefs, bwd: LstmRefs, batch: usize, mask: &[bool]) -> Var {
    let f = lstm_direction(g, x, fwd, batch, mask, false);
    let b = lstm_direction(g, x, bwd, batch, mask, true);
    g.concat_cols(alloc::vec![f, b])
}

/// Number of tensors in one encoder layer.
pub const ENCODER_TENSORS: usize = 16;

/// Tensors of a post-norm encoder layer stored consecutively from `first`:
/// `Wq bq Wk bk Wv bv Wo bo ln1g ln1b W1 b1 W2 b2 ln2g ln2b`.
#[derive(Debug, Clone, Copy)]
pub struct EncoderRefs {
    pub group: usize,
    pub first: usize,
}

impl EncoderRefs {
    fn at(&self, k: usize) -> ParamRef {
        ParamRef { group: self.group, tensor: self.first + k }
    }
}

pub fn encoder_layer(g: &mut Graph, x: Var, refs: EncoderRefs, batch: usize, heads: usize, key_mask: &[bool], slopes: &[f64]) -> Var {
    let p: Vec<Var> = (0..ENCODER_TENSORS).map(|k| g.param(refs.at(k))).collect();
    let q = g.linear(x, p[0], p[1]);
    let k = g.linear(x, p[2], p[3]);
    let v = g.linear(x, p[4], p[5]);
    let a = g.attention_with_distance(q, k, v, batch, heads, key_mask, slopes);
    let a = g.linear(a, p[6], p[7]);
    let x = g.add(x, a);
    let x = g.layer_norm(x, p[8], p[9]);
    let f = g.linear(x, p[10], p[11]);
    let f = g.gelu(f);
    let f = g.linear(f, p[12], p[13]);
    let x2 = g.add(x, f);
    g.layer_norm(x2, p[14], p[15])
}

/// Fresh encoder-layer tensors for width `d` and feed-forward width `ff`.
pub fn init_encoder<R: rand::Rng + ?Sized>(rng: &mut R, d: usize, ff: usize) -> Vec<crate::nn::Tensor> {
    use crate::nn::init::{constant, glorot};
    let mut t = Vec::with_capacity(ENCODER_TENSORS);
    for _ in 0..4 {
        t.push(glorot(rng, d, d));
        t.push(constant(&[d], 0.0));
    }
    t.push(constant(&[d], 1.0));
    t.push(constant(&[d], 0.0));
    t.push(glorot(rng, d, ff));
    t.push(constant(&[ff], 0.0));
    t.push(glorot(rng, ff, d));
    t.push(constant(&[d], 0.0));
    t.push(constant(&[d], 1.0));
    t.push(constant(&[d], 0.0));
    t
}

/// Sinusoidal position table, `steps × d`.
pub fn sinusoidal(steps: usize, d: usize) -> Vec<f64> {
    let mut out = alloc::vec![0.0; steps * d];
    for t in 0..steps {
        for j in 0..d {
            let freq = libm::pow(10000.0, -((j / 2 * 2) as f64) / d as f64);
            let a = t as f64 * freq;
            out[t * d + j] = if j % 2 == 0 { libm::sin(a) } else { libm::cos(a) };
        }
    }
    out
}

/// Largest of 4, 2, 1 dividing `d`.
pub fn heads_for(d: usize) -> usize {
    [4, 2, 1].into_iter().find(|h| d % h == 0).unwrap_or(1)
}

/// Rows of `[T·batch × ·]` holding each sequence's last real position.
pub fn last_rows(lengths: &[usize]) -> Vec<usize> {
    let batch = lengths.len();
    lengths.iter().enumerate().map(|(b, &len)| len.saturating_sub(1) * batch + b).collect()
}

/// Per-head locality penalties `1, ½, ¼, …` with the last head left global.
pub fn distance_slopes(heads: usize) -> Vec<f64> {
    (0..heads).map(|h| if h + 1 == heads { 0.0 } else { libm::ldexp(4.0, -(h as i32)) }).collect()
}
