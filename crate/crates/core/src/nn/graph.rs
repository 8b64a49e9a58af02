//! Tape-based reverse-mode automatic differentiation over row-major matrices.
//!
//! Every value on the tape is a `rows × cols` matrix. Parameters are borrowed
//! from a `[ParamGroup]` slice for the lifetime of the graph, so building a
//! forward pass never copies weights. `backward` consumes the tape and returns
//! the parameter gradients, which releases the borrow.

use alloc::borrow::Cow;
use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::kernels;
use super::math::{gelu, gelu_grad, sigmoid};
use super::tensor::{ParamGroup, ParamRef};
use crate::error::{bail, Result};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Direction of the softmax KL divergence used by [`Graph::softmax_kld`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KldDirection {
    /// `KL(teacher ‖ student)`
    #[default]
    TeacherToStudent,
    /// `KL(student ‖ teacher)`
    StudentToTeacher,
}

enum Op {
    Input,
    Param(ParamRef),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Vec<f64>),
    Sigmoid(Var),
    Tanh(Var),
    Gelu(Var),
    Gather { table: Var, ids: Vec<usize> },
    SliceRows { x: Var, start: usize },
    ConcatRows(Vec<Var>),
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    SelectRows { x: Var, rows: Vec<usize> },
    AddPositional { x: Var, table: Var, batch: usize },
    LstmCell { pre: Var, c_prev: Var, h_prev: Var, mask: Vec<bool>, gates: Vec<f64> },
    LstmSeq { xw: Var, w_h: Var, batch: usize, mask: Vec<bool>, reverse: bool, gates: Vec<f64>, cells: Vec<f64> },
    LayerNorm { x: Var, gain: Var, bias: Var, normed: Vec<f64>, rstd: Vec<f64> },
    Attention { q: Var, k: Var, v: Var, batch: usize, heads: usize, probs: Vec<f64> },
    SoftmaxCe { logits: Var, targets: Vec<usize>, weights: Vec<f64>, probs: Vec<f64> },
    HalfSqErr { x: Var, target: Vec<f64>, weights: Vec<f64> },
    SoftmaxKld { x: Var, teacher: Vec<f64>, weights: Vec<f64>, dir: KldDirection, probs: Vec<f64> },
    WeightedSum(Vec<(Var, f64)>),
}

struct Node<'p> {
    value: Cow<'p, [f64]>,
    rows: usize,
    cols: usize,
    op: Op,
    needs_grad: bool,
}

/// Gradients of a scalar with respect to every trainable parameter it touched.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    pub loss: f64,
    entries: BTreeMap<ParamRef, Vec<f64>>,
}

impl Gradients {
    pub fn get(&self, r: ParamRef) -> Option<&[f64]> {
        self.entries.get(&r).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamRef, &[f64])> {
        self.entries.iter().map(|(r, g)| (*r, g.as_slice()))
    }

    /// Store the gradients in the `grad` buffers of the matching tensors.
    pub fn apply(self, params: &mut [ParamGroup]) -> Result<()> {
        for (r, g) in self.entries {
            let Some(t) = params.get_mut(r.group).and_then(|grp| grp.tensors.get_mut(r.tensor)) else {
                bail!(Config, "gradient for unknown parameter {:?}", r);
            };
            t.set_grad(g)?;
        }
        Ok(())
    }
}

pub struct Graph<'p> {
    params: &'p [ParamGroup],
    nodes: Vec<Node<'p>>,
    param_vars: BTreeMap<ParamRef, Var>,
    track: bool,
}

impl<'p> Graph<'p> {
    /// A graph that records gradients for every unfrozen parameter.
    pub fn new(params: &'p [ParamGroup]) -> Self {
        Self { params, nodes: Vec::new(), param_vars: BTreeMap::new(), track: true }
    }

    /// A graph that never needs a backward pass.
    pub fn inference(params: &'p [ParamGroup]) -> Self {
        Self { track: false, ..Self::new(params) }
    }

    pub fn params(&self) -> &'p [ParamGroup] {
        self.params
    }

    fn push(&mut self, value: Cow<'p, [f64]>, rows: usize, cols: usize, op: Op, needs_grad: bool) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node { value, rows, cols, op, needs_grad: needs_grad && self.track });
        Var(self.nodes.len() - 1)
    }

    fn owned(&mut self, value: Vec<f64>, rows: usize, cols: usize, op: Op, needs_grad: bool) -> Var {
        self.push(Cow::Owned(value), rows, cols, op, needs_grad)
    }

    fn node(&self, v: Var) -> &Node<'p> {
        &self.nodes[v.0]
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn dims(&self, v: Var) -> (usize, usize) {
        let n = self.node(v);
        (n.rows, n.cols)
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn param(&mut self, r: ParamRef) -> Var {
        if let Some(v) = self.param_vars.get(&r) {
            return *v;
        }
        let group = &self.params[r.group];
        let t = &group.tensors[r.tensor];
        let v = self.push(Cow::Borrowed(t.data()), t.rows(), t.cols(), Op::Param(r), !group.frozen);
        self.param_vars.insert(r, v);
        v
    }

    pub fn input(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Var {
        assert_eq!(rows * cols, data.len(), "input shape");
        self.owned(data, rows, cols, Op::Input, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (n, k) = self.dims(a);
        let (k2, m) = self.dims(b);
        assert_eq!(k, k2, "matmul inner dimension");
        let mut out = vec![0.0; n * m];
        kernels::matmul(self.value(a), self.value(b), &mut out, n, k, m);
        let ng = self.ng(a) || self.ng(b);
        self.owned(out, n, m, Op::MatMul(a, b), ng)
    }

    /// `x + b` with `b` broadcast over rows.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Var {
        let (n, m) = self.dims(x);
        assert_eq!(self.dims(b), (1, m), "bias width");
        let bias = self.value(b);
        let mut out = self.value(x).to_vec();
        for row in out.chunks_exact_mut(m) {
            for (o, bb) in row.iter_mut().zip(bias) {
                *o += bb;
            }
        }
        let ng = self.ng(x) || self.ng(b);
        self.owned(out, n, m, Op::AddBias(x, b), ng)
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul(x, w);
        self.add_bias(y, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.dims(a), self.dims(b), "add shape");
        let (n, m) = self.dims(a);
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let ng = self.ng(a) || self.ng(b);
        self.owned(out, n, m, Op::Add(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.dims(a), self.dims(b), "mul shape");
        let (n, m) = self.dims(a);
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let ng = self.ng(a) || self.ng(b);
        self.owned(out, n, m, Op::Mul(a, b), ng)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let (n, m) = self.dims(x);
        let out = self.value(x).iter().map(|v| v * s).collect();
        let ng = self.ng(x);
        self.owned(out, n, m, Op::Scale(x, s), ng)
    }

    /// Inverted dropout; a rate of zero returns `x` unchanged.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, rng: &mut R) -> Var {
        if rate <= 0.0 {
            return x;
        }
        let (n, m) = self.dims(x);
        let keep = 1.0 - rate;
        let mask: Vec<f64> =
            (0..n * m).map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
        let out = self.value(x).iter().zip(&mask).map(|(v, k)| v * k).collect();
        let ng = self.ng(x);
        self.owned(out, n, m, Op::MulConst(x, mask), ng)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let (n, m) = self.dims(x);
        let out = self.value(x).iter().map(|&v| sigmoid(v)).collect();
        let ng = self.ng(x);
        self.owned(out, n, m, Op::Sigmoid(x), ng)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let (n, m) = self.dims(x);
        let out = self.value(x).iter().map(|&v| libm::tanh(v)).collect();
        let ng = self.ng(x);
        self.owned(out, n, m, Op::Tanh(x), ng)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let (n, m) = self.dims(x);
        let out = self.value(x).iter().map(|&v| gelu(v)).collect();
        let ng = self.ng(x);
        self.owned(out, n, m, Op::Gelu(x), ng)
    }

    /// Embedding lookup: one output row per id.
    pub fn gather(&mut self, table: Var, ids: Vec<usize>) -> Var {
        let (v, e) = self.dims(table);
        let src = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * e);
        for &id in &ids {
            assert!(id < v, "id {id} outside table of {v} rows");
            out.extend_from_slice(&src[id * e..(id + 1) * e]);
        }
        let n = ids.len();
        let ng = self.ng(table);
        self.owned(out, n, e, Op::Gather { table, ids }, ng)
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        let (n, m) = self.dims(x);
        assert!(start + len <= n, "row slice out of range");
        let out = self.value(x)[start * m..(start + len) * m].to_vec();
        let ng = self.ng(x);
        self.owned(out, len, m, Op::SliceRows { x, start }, ng)
    }

    pub fn concat_rows(&mut self, xs: Vec<Var>) -> Var {
        assert!(!xs.is_empty());
        let m = self.dims(xs[0]).1;
        let mut out = Vec::new();
        let mut n = 0;
        let mut ng = false;
        for &x in &xs {
            let (r, c) = self.dims(x);
            assert_eq!(c, m, "concat_rows width");
            out.extend_from_slice(self.value(x));
            n += r;
            ng |= self.ng(x);
        }
        self.owned(out, n, m, Op::ConcatRows(xs), ng)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let (n, m) = self.dims(x);
        assert!(start + len <= m, "column slice out of range");
        let src = self.value(x);
        let mut out = Vec::with_capacity(n * len);
        for row in src.chunks_exact(m) {
            out.extend_from_slice(&row[start..start + len]);
        }
        let ng = self.ng(x);
        self.owned(out, n, len, Op::SliceCols { x, start }, ng)
    }

    pub fn concat_cols(&mut self, xs: Vec<Var>) -> Var {
        assert!(!xs.is_empty());
        let n = self.dims(xs[0]).0;
        let m: usize = xs.iter().map(|&x| self.dims(x).1).sum();
        let mut out = Vec::with_capacity(n * m);
        for r in 0..n {
            for &x in &xs {
                let (rows, c) = self.dims(x);
                assert_eq!(rows, n, "concat_cols height");
                out.extend_from_slice(&self.value(x)[r * c..(r + 1) * c]);
            }
        }
        let ng = xs.iter().any(|&x| self.ng(x));
        self.owned(out, n, m, Op::ConcatCols(xs), ng)
    }

    pub fn select_rows(&mut self, x: Var, rows: Vec<usize>) -> Var {
        let (n, m) = self.dims(x);
        let src = self.value(x);
        let mut out = Vec::with_capacity(rows.len() * m);
        for &r in &rows {
            assert!(r < n, "row {r} out of range");
            out.extend_from_slice(&src[r * m..(r + 1) * m]);
        }
        let len = rows.len();
        let ng = self.ng(x);
        self.owned(out, len, m, Op::SelectRows { x, rows }, ng)
    }

    /// Adds row `t` of `table` to every row of time step `t` in a time-major
    /// `[T·batch × D]` matrix.
    pub fn add_positional(&mut self, x: Var, table: Var, batch: usize) -> Var {
        let (n, m) = self.dims(x);
        let (p, pm) = self.dims(table);
        assert_eq!(m, pm, "positional width");
        assert!(n / batch <= p, "sequence longer than positional table");
        let tab = self.value(table);
        let mut out = self.value(x).to_vec();
        for (r, row) in out.chunks_exact_mut(m).enumerate() {
            let t = r / batch;
            for (o, v) in row.iter_mut().zip(&tab[t * m..(t + 1) * m]) {
                *o += v;
            }
        }
        let ng = self.ng(x) || self.ng(table);
        self.owned(out, n, m, Op::AddPositional { x, table, batch }, ng)
    }

    /// One LSTM step. `pre` holds the gate pre-activations `[i f g o]` for each
    /// row; rows whose mask is false carry `h_prev`/`c_prev` through unchanged.
    /// The result is `[h | c]`, `batch × 2H`.
    pub fn lstm_cell(&mut self, pre: Var, c_prev: Var, h_prev: Var, mask: Vec<bool>) -> Var {
        let (b, h4) = self.dims(pre);
        let h = h4 / 4;
        assert_eq!(h * 4, h4, "gate width");
        assert_eq!(self.dims(c_prev), (b, h));
        assert_eq!(self.dims(h_prev), (b, h));
        assert_eq!(mask.len(), b);
        let pv = self.value(pre);
        let cp = self.value(c_prev);
        let hp = self.value(h_prev);
        let mut gates = vec![0.0; b * h4];
        let mut out = vec![0.0; b * 2 * h];
        for r in 0..b {
            let o_row = &mut out[r * 2 * h..(r + 1) * 2 * h];
            if !mask[r] {
                o_row[..h].copy_from_slice(&hp[r * h..(r + 1) * h]);
                o_row[h..].copy_from_slice(&cp[r * h..(r + 1) * h]);
                continue;
            }
            let p = &pv[r * h4..(r + 1) * h4];
            let gr = &mut gates[r * h4..(r + 1) * h4];
            for j in 0..h {
                let i = sigmoid(p[j]);
                let f = sigmoid(p[h + j]);
                let g = libm::tanh(p[2 * h + j]);
                let o = sigmoid(p[3 * h + j]);
                gr[j] = i;
                gr[h + j] = f;
                gr[2 * h + j] = g;
                gr[3 * h + j] = o;
                let c = f * cp[r * h + j] + i * g;
                o_row[h + j] = c;
                o_row[j] = o * libm::tanh(c);
            }
        }
        let ng = self.ng(pre) || self.ng(c_prev) || self.ng(h_prev);
        self.owned(out, b, 2 * h, Op::LstmCell { pre, c_prev, h_prev, mask, gates }, ng)
    }

    /// Whole LSTM recurrence over time-major input projections `xw`
    /// (`[T·batch × 4H]`, bias included) with recurrent weight `w_h`.
    /// Padded rows carry the previous state forward. Returns `[T·batch × H]`.
    pub fn lstm_sequence(&mut self, xw: Var, w_h: Var, batch: usize, mask: &[bool], reverse: bool) -> Var {
        let (n, h4) = self.dims(xw);
        let h = h4 / 4;
        assert_eq!(h * 4, h4, "gate width");
        assert_eq!(self.dims(w_h), (h, h4));
        assert_eq!(mask.len(), n);
        assert!(batch > 0 && n % batch == 0, "rows not divisible by batch");
        let steps = n / batch;
        let xv = self.value(xw);
        let wv = self.value(w_h);
        let mut gates = vec![0.0; n * h4];
        let mut cells = vec![0.0; n * h];
        let mut out = vec![0.0; n * h];
        let mut hp = vec![0.0; batch * h];
        let mut cp = vec![0.0; batch * h];
        let mut pre = vec![0.0; batch * h4];
        for i in 0..steps {
            let t = if reverse { steps - 1 - i } else { i };
            let base = t * batch;
            pre.copy_from_slice(&xv[base * h4..(base + batch) * h4]);
            if i > 0 {
                kernels::matmul(&hp, wv, &mut pre, batch, h, h4);
            }
            for r in 0..batch {
                if !mask[base + r] {
                    continue;
                }
                let p = &pre[r * h4..(r + 1) * h4];
                let gr = &mut gates[(base + r) * h4..(base + r + 1) * h4];
                for j in 0..h {
                    let ig = sigmoid(p[j]);
                    let fg = sigmoid(p[h + j]);
                    let gg = libm::tanh(p[2 * h + j]);
                    let og = sigmoid(p[3 * h + j]);
                    gr[j] = ig;
                    gr[h + j] = fg;
                    gr[2 * h + j] = gg;
                    gr[3 * h + j] = og;
                    let c = fg * cp[r * h + j] + ig * gg;
                    cp[r * h + j] = c;
                    hp[r * h + j] = og * libm::tanh(c);
                }
            }
            out[base * h..(base + batch) * h].copy_from_slice(&hp);
            cells[base * h..(base + batch) * h].copy_from_slice(&cp);
        }
        let ng = self.ng(xw) || self.ng(w_h);
        let op = Op::LstmSeq { xw, w_h, batch, mask: mask.to_vec(), reverse, gates, cells };
        self.owned(out, n, h, op, ng)
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        const EPS: f64 = 1e-5;
        let (n, m) = self.dims(x);
        assert_eq!(self.dims(gain), (1, m));
        assert_eq!(self.dims(bias), (1, m));
        let xv = self.value(x);
        let g = self.value(gain);
        let bv = self.value(bias);
        let mut normed = vec![0.0; n * m];
        let mut rstd = vec![0.0; n];
        let mut out = vec![0.0; n * m];
        for r in 0..n {
            let row = &xv[r * m..(r + 1) * m];
            let mean = row.iter().sum::<f64>() / m as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
            let rs = 1.0 / libm::sqrt(var + EPS);
            rstd[r] = rs;
            for j in 0..m {
                let xh = (row[j] - mean) * rs;
                normed[r * m + j] = xh;
                out[r * m + j] = xh * g[j] + bv[j];
            }
        }
        let ng = self.ng(x) || self.ng(gain) || self.ng(bias);
        self.owned(out, n, m, Op::LayerNorm { x, gain, bias, normed, rstd }, ng)
    }

    /// Multi-head scaled dot-product self-attention over time-major rows
    /// (`row = t·batch + b`). Keys whose `key_mask` entry is false are ignored.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, batch: usize, heads: usize, key_mask: &[bool]) -> Var {
        self.attention_with_distance(q, k, v, batch, heads, key_mask, &[])
    }

    /// [`Graph::attention`] with a fixed per-head penalty `slope·max(|t − s| − 1, 0)`
    /// subtracted from each score; an empty `slopes` disables it.
    #[allow(clippy::too_many_arguments)]
    pub fn attention_with_distance(&mut self, q: Var, k: Var, v: Var, batch: usize, heads: usize, key_mask: &[bool], slopes: &[f64]) -> Var {
        assert!(slopes.is_empty() || slopes.len() == heads, "one slope per head");
        let (n, d) = self.dims(q);
        assert_eq!(self.dims(k), (n, d));
        assert_eq!(self.dims(v), (n, d));
        assert_eq!(key_mask.len(), n);
        assert_eq!(d % heads, 0, "width not divisible by heads");
        let t_len = n / batch;
        let dh = d / heads;
        let scale = 1.0 / libm::sqrt(dh as f64);
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let mut probs = vec![0.0; batch * heads * t_len * t_len];
        let mut out = vec![0.0; n * d];
        let mut scores = vec![0.0; t_len];
        for b in 0..batch {
            for hd in 0..heads {
                let c0 = hd * dh;
                for t in 0..t_len {
                    let qr = &qv[(t * batch + b) * d + c0..][..dh];
                    let mut max = f64::NEG_INFINITY;
                    for s in 0..t_len {
                        if key_mask[s * batch + b] {
                            let kr = &kv[(s * batch + b) * d + c0..][..dh];
                            let mut sc = kernels::dot(qr, kr) * scale;
                            if let Some(m) = slopes.get(hd) {
                                sc -= m * t.abs_diff(s).saturating_sub(1) as f64;
                            }
                            scores[s] = sc;
                            if sc > max {
                                max = sc;
                            }
                        }
                    }
                    let p = &mut probs[((b * heads + hd) * t_len + t) * t_len..][..t_len];
                    if max == f64::NEG_INFINITY {
                        continue;
                    }
                    let mut z = 0.0;
                    for s in 0..t_len {
                        if key_mask[s * batch + b] {
                            let e = libm::exp(scores[s] - max);
                            p[s] = e;
                            z += e;
                        }
                    }
                    let orow = &mut out[(t * batch + b) * d + c0..][..dh];
                    for s in 0..t_len {
                        if p[s] != 0.0 {
                            p[s] /= z;
                            kernels::axpy(p[s], &vv[(s * batch + b) * d + c0..][..dh], orow);
                        }
                    }
                }
            }
        }
        let ng = self.ng(q) || self.ng(k) || self.ng(v);
        self.owned(out, n, d, Op::Attention { q, k, v, batch, heads, probs }, ng)
    }

    /// Mean over masked-in rows of `-log softmax(logits)[target]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: Vec<usize>, mask: &[bool]) -> Var {
        let (n, c) = self.dims(logits);
        assert_eq!(targets.len(), n);
        let weights = mean_weights(mask, n);
        let lv = self.value(logits);
        let mut probs = vec![0.0; n * c];
        let mut loss = 0.0;
        for r in 0..n {
            if weights[r] == 0.0 {
                continue;
            }
            let row = &lv[r * c..(r + 1) * c];
            let lse = kernels::softmax_into(row, &mut probs[r * c..(r + 1) * c]);
            assert!(targets[r] < c, "target class out of range");
            loss += weights[r] * (lse - row[targets[r]]);
        }
        let ng = self.ng(logits);
        self.owned(vec![loss], 1, 1, Op::SoftmaxCe { logits, targets, weights, probs }, ng)
    }

    /// Mean over masked-in rows of `½‖x − target‖²`.
    pub fn half_squared_error(&mut self, x: Var, target: Vec<f64>, mask: &[bool]) -> Var {
        let (n, c) = self.dims(x);
        assert_eq!(target.len(), n * c);
        let weights = mean_weights(mask, n);
        let xv = self.value(x);
        let mut loss = 0.0;
        for r in 0..n {
            if weights[r] == 0.0 {
                continue;
            }
            let s: f64 = (0..c).map(|j| { let d = xv[r * c + j] - target[r * c + j]; d * d }).sum();
            loss += weights[r] * 0.5 * s;
        }
        let ng = self.ng(x);
        self.owned(vec![loss], 1, 1, Op::HalfSqErr { x, target, weights }, ng)
    }

    /// Mean over masked-in rows of the KL divergence between the feature
    /// softmaxes of `x` (student) and `teacher_raw`.
    pub fn softmax_kld(&mut self, x: Var, teacher_raw: &[f64], mask: &[bool], dir: KldDirection) -> Var {
        let (n, d) = self.dims(x);
        assert_eq!(teacher_raw.len(), n * d);
        let weights = mean_weights(mask, n);
        let xv = self.value(x);
        let mut probs = vec![0.0; n * d];
        let mut teacher = vec![0.0; n * d];
        let mut loss = 0.0;
        for r in 0..n {
            if weights[r] == 0.0 {
                continue;
            }
            let s_lse = kernels::softmax_into(&xv[r * d..(r + 1) * d], &mut probs[r * d..(r + 1) * d]);
            let t_lse = kernels::softmax_into(&teacher_raw[r * d..(r + 1) * d], &mut teacher[r * d..(r + 1) * d]);
            let mut kl = 0.0;
            for j in 0..d {
                let log_p = xv[r * d + j] - s_lse;
                let log_q = teacher_raw[r * d + j] - t_lse;
                kl += match dir {
                    KldDirection::TeacherToStudent => teacher[r * d + j] * (log_q - log_p),
                    KldDirection::StudentToTeacher => probs[r * d + j] * (log_p - log_q),
                };
            }
            loss += weights[r] * kl;
        }
        let ng = self.ng(x);
        self.owned(vec![loss], 1, 1, Op::SoftmaxKld { x, teacher, weights, dir, probs }, ng)
    }

    /// `Σ wᵢ·termᵢ` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: Vec<(Var, f64)>) -> Var {
        let mut total = 0.0;
        for &(t, w) in &terms {
            assert_eq!(self.dims(t), (1, 1), "weighted_sum takes scalars");
            total += w * self.scalar(t);
        }
        let ng = terms.iter().any(|&(t, _)| self.ng(t));
        self.owned(vec![total], 1, 1, Op::WeightedSum(terms), ng)
    }

    /// Reverse pass from a scalar node.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let Graph { nodes, .. } = self;
        let (lr, lc) = (nodes[loss.0].rows, nodes[loss.0].cols);
        if lr * lc != 1 {
            bail!(Shape, "backward needs a scalar, got {}x{}", lr, lc);
        }
        let loss_value = nodes[loss.0].value[0];
        if !loss_value.is_finite() {
            bail!(NonFinite, "loss is {}", loss_value);
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients { loss: loss_value, entries: BTreeMap::new() };
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            if !node.needs_grad {
                continue;
            }
            backprop(&nodes, node, &g, &mut grads);
            if let Op::Param(r) = node.op {
                out.entries.insert(r, g);
            }
        }
        Ok(out)
    }
}

fn mean_weights(mask: &[bool], n: usize) -> Vec<f64> {
    assert_eq!(mask.len(), n, "mask length");
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return vec![0.0; n];
    }
    let w = 1.0 / count as f64;
    mask.iter().map(|&m| if m { w } else { 0.0 }).collect()
}

fn slot<'a>(nodes: &[Node<'_>], grads: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut [f64]> {
    let n = &nodes[v.0];
    if !n.needs_grad {
        return None;
    }
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; n.rows * n.cols]).as_mut_slice())
}

fn backprop(nodes: &[Node<'_>], node: &Node<'_>, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let val = |v: Var| -> &[f64] { &nodes[v.0].value };
    let dims = |v: Var| (nodes[v.0].rows, nodes[v.0].cols);
    match &node.op {
        Op::Input | Op::Param(_) => {}
        Op::MatMul(a, b) => {
            let (n, k) = dims(*a);
            let m = dims(*b).1;
            if let Some(da) = slot(nodes, grads, *a) {
                kernels::matmul_bt(g, val(*b), da, n, m, k);
            }
            if let Some(db) = slot(nodes, grads, *b) {
                kernels::matmul_at(val(*a), g, db, n, k, m);
            }
        }
        Op::AddBias(x, b) => {
            if let Some(dx) = slot(nodes, grads, *x) {
                kernels::add_assign(dx, g);
            }
            let m = dims(*b).1;
            if let Some(db) = slot(nodes, grads, *b) {
                for row in g.chunks_exact(m) {
                    kernels::add_assign(db, row);
                }
            }
        }
        Op::Add(a, b) => {
            if let Some(da) = slot(nodes, grads, *a) {
                kernels::add_assign(da, g);
            }
            if let Some(db) = slot(nodes, grads, *b) {
                kernels::add_assign(db, g);
            }
        }
        Op::Mul(a, b) => {
            if let Some(da) = slot(nodes, grads, *a) {
                for ((d, gg), y) in da.iter_mut().zip(g).zip(val(*b)) {
                    *d += gg * y;
                }
            }
            if let Some(db) = slot(nodes, grads, *b) {
                for ((d, gg), x) in db.iter_mut().zip(g).zip(val(*a)) {
                    *d += gg * x;
                }
            }
        }
        Op::Scale(x, s) => {
            if let Some(dx) = slot(nodes, grads, *x) {
                kernels::axpy(*s, g, dx);
            }
        }
        Op::MulConst(x, mask) => {
            if let Some(dx) = slot(nodes, grads, *x) {
                for ((d, gg), k) in dx.iter_mut().zip(g).zip(mask) {
                    *d += gg * k;
                }
            }
        }
        Op::Sigmoid(x) => {
            if let Some(dx) = slot(nodes, grads, *x) {
                for ((d, gg), y) in dx.iter_mut().zip(g).zip(node.value.iter()) {
                    *d += gg * y * (1.0 - y);
                }
            }
        }
        Op::Tanh(x) => {
            if let Some(dx) = slot(nodes, grads, *x) {
                for ((d, gg), y) in dx.iter_mut().zip(g).zip(node.value.iter()) {
                    *d += gg * (1.0 - y * y);
                }
            }
        }
        Op::Gelu(x) => {
            let xv = val(*x);
            if let Some(dx) = slot(nodes, grads, *x) {
                for ((d, gg), &xi) in dx.iter_mut().zip(g).zip(xv) {
                    *d += gg * gelu_grad(xi);
                }
            }
        }
        Op::Gather { table, ids } => {
            let e = dims(*table).1;
            if let Some(dt) = slot(nodes, grads, *table) {
                for (r, &id) in ids.iter().enumerate() {
                    kernels::add_assign(&mut dt[id * e..(id + 1) * e], &g[r * e..(r + 1) * e]);
                }
            }
        }
        Op::SliceRows { x, start } => {
            let m = dims(*x).1;
            if let Some(dx) = slot(nodes, grads, *x) {
                kernels::add_assign(&mut dx[start * m..start * m + g.len()], g);
            }
        }
        Op::ConcatRows(xs) => {
            let mut off = 0;
            for &x in xs {
                let (r, c) = dims(x);
                if let Some(dx) = slot(nodes, grads, x) {
                    kernels::add_assign(dx, &g[off..off + r * c]);
                }
                off += r * c;
            }
        }
        Op::SliceCols { x, start } => {
            let m = dims(*x).1;
            let len = node.cols;
            if let Some(dx) = slot(nodes, grads, *x) {
                for (r, grow) in g.chunks_exact(len).enumerate() {
                    kernels::add_assign(&mut dx[r * m + start..r * m + start + len], grow);
                }
            }
        }
        Op::ConcatCols(xs) => {
            let m = node.cols;
            let mut off = 0;
            for &x in xs {
                let (n, c) = dims(x);
                if let Some(dx) = slot(nodes, grads, x) {
                    for r in 0..n {
                        kernels::add_assign(&mut dx[r * c..(r + 1) * c], &g[r * m + off..r * m + off + c]);
                    }
                }
                off += c;
            }
        }
        Op::SelectRows { x, rows } => {
            let m = dims(*x).1;
            if let Some(dx) = slot(nodes, grads, *x) {
                for (i, &r) in rows.iter().enumerate() {
                    kernels::add_assign(&mut dx[r * m..(r + 1) * m], &g[i * m..(i + 1) * m]);
                }
            }
        }
        Op::AddPositional { x, table, batch } => {
            if let Some(dx) = slot(nodes, grads, *x) {
                kernels::add_assign(dx, g);
            }
            let m = node.cols;
            if let Some(dt) = slot(nodes, grads, *table) {
                for (r, grow) in g.chunks_exact(m).enumerate() {
                    let t = r / batch;
                    kernels::add_assign(&mut dt[t * m..(t + 1) * m], grow);
                }
            }
        }
        Op::LstmSeq { xw, w_h, batch, mask, reverse, gates, cells } => {
            let (n, h4) = dims(*xw);
            let (h, batch) = (h4 / 4, *batch);
            let steps = n / batch;
            let wv = val(*w_h);
            let out = &node.value;
            let mut d_xw = vec![0.0; n * h4];
            let mut d_w = vec![0.0; h * h4];
            let mut dh_next = vec![0.0; batch * h];
            let mut dc_next = vec![0.0; batch * h];
            let mut d_pre = vec![0.0; batch * h4];
            for i in (0..steps).rev() {
                let t = if *reverse { steps - 1 - i } else { i };
                let base = t * batch;
                // state entering this step, zero at the first step of the order
                let prev = (i > 0).then(|| if *reverse { base + batch } else { base - batch });
                d_pre.fill(0.0);
                for r in 0..batch {
                    let row = base + r;
                    let dh = g[row * h..(row + 1) * h].iter().zip(&dh_next[r * h..(r + 1) * h]).map(|(a, b)| a + b);
                    let dh: Vec<f64> = dh.collect();
                    if !mask[row] {
                        dh_next[r * h..(r + 1) * h].copy_from_slice(&dh);
                        continue;
                    }
                    let ga = &gates[row * h4..(row + 1) * h4];
                    let dp = &mut d_pre[r * h4..(r + 1) * h4];
                    for j in 0..h {
                        let (ig, fg, gg, og) = (ga[j], ga[h + j], ga[2 * h + j], ga[3 * h + j]);
                        let tc = libm::tanh(cells[row * h + j]);
                        let cprev = prev.map_or(0.0, |p| cells[(p + r) * h + j]);
                        let dc = dc_next[r * h + j] + dh[j] * og * (1.0 - tc * tc);
                        dp[j] = dc * gg * ig * (1.0 - ig);
                        dp[h + j] = dc * cprev * fg * (1.0 - fg);
                        dp[2 * h + j] = dc * ig * (1.0 - gg * gg);
                        dp[3 * h + j] = dh[j] * tc * og * (1.0 - og);
                        dc_next[r * h + j] = dc * fg;
                    }
                    dh_next[r * h..(r + 1) * h].fill(0.0);
                }
                d_xw[base * h4..(base + batch) * h4].copy_from_slice(&d_pre);
                if let Some(p) = prev {
                    kernels::matmul_at(&out[p * h..(p + batch) * h], &d_pre, &mut d_w, batch, h, h4);
                    kernels::matmul_bt(&d_pre, wv, &mut dh_next, batch, h4, h);
                }
            }
            if let Some(d) = slot(nodes, grads, *xw) {
                kernels::add_assign(d, &d_xw);
            }
            if let Some(d) = slot(nodes, grads, *w_h) {
                kernels::add_assign(d, &d_w);
            }
        }
        Op::LstmCell { pre, c_prev, h_prev, mask, gates } => {
            let (b, h4) = dims(*pre);
            let h = h4 / 4;
            let cp = val(*c_prev);
            let out = &node.value;
            let mut d_pre = vec![0.0; b * h4];
            let mut d_cp = vec![0.0; b * h];
            let mut d_hp = vec![0.0; b * h];
            for r in 0..b {
                let gr = &g[r * 2 * h..(r + 1) * 2 * h];
                if !mask[r] {
                    d_hp[r * h..(r + 1) * h].copy_from_slice(&gr[..h]);
                    d_cp[r * h..(r + 1) * h].copy_from_slice(&gr[h..]);
                    continue;
                }
                let ga = &gates[r * h4..(r + 1) * h4];
                let dp = &mut d_pre[r * h4..(r + 1) * h4];
                for j in 0..h {
                    let (i, f, gg, o) = (ga[j], ga[h + j], ga[2 * h + j], ga[3 * h + j]);
                    let c = out[r * 2 * h + h + j];
                    let tc = libm::tanh(c);
                    let dh = gr[j];
                    let dc = gr[h + j] + dh * o * (1.0 - tc * tc);
                    dp[j] = dc * gg * i * (1.0 - i);
                    dp[h + j] = dc * cp[r * h + j] * f * (1.0 - f);
                    dp[2 * h + j] = dc * i * (1.0 - gg * gg);
                    dp[3 * h + j] = dh * tc * o * (1.0 - o);
                    d_cp[r * h + j] = dc * f;
                }
            }
            if let Some(d) = slot(nodes, grads, *pre) {
                kernels::add_assign(d, &d_pre);
            }
            if let Some(d) = slot(nodes, grads, *c_prev) {
                kernels::add_assign(d, &d_cp);
            }
            if let Some(d) = slot(nodes, grads, *h_prev) {
                kernels::add_assign(d, &d_hp);
            }
        }
        Op::LayerNorm { x, gain, bias, normed, rstd } => {
            let (n, m) = dims(*x);
            let gv = val(*gain);
            if let Some(dg) = slot(nodes, grads, *gain) {
                for r in 0..n {
                    for j in 0..m {
                        dg[j] += g[r * m + j] * normed[r * m + j];
                    }
                }
            }
            if let Some(db) = slot(nodes, grads, *bias) {
                for row in g.chunks_exact(m) {
                    kernels::add_assign(db, row);
                }
            }
            if let Some(dx) = slot(nodes, grads, *x) {
                let mut dxh = vec![0.0; m];
                for r in 0..n {
                    let mut mean_d = 0.0;
                    let mut mean_dx = 0.0;
                    for j in 0..m {
                        dxh[j] = g[r * m + j] * gv[j];
                        mean_d += dxh[j];
                        mean_dx += dxh[j] * normed[r * m + j];
                    }
                    mean_d /= m as f64;
                    mean_dx /= m as f64;
                    for j in 0..m {
                        dx[r * m + j] += rstd[r] * (dxh[j] - mean_d - normed[r * m + j] * mean_dx);
                    }
                }
            }
        }
        Op::Attention { q, k, v, batch, heads, probs } => {
            let (n, d) = dims(*q);
            let batch = *batch;
            let heads = *heads;
            let t_len = n / batch;
            let dh = d / heads;
            let scale = 1.0 / libm::sqrt(dh as f64);
            let (qv, kv, vv) = (val(*q), val(*k), val(*v));
            let mut dq = vec![0.0; n * d];
            let mut dk = vec![0.0; n * d];
            let mut dv = vec![0.0; n * d];
            let mut dp = vec![0.0; t_len];
            for b in 0..batch {
                for hd in 0..heads {
                    let c0 = hd * dh;
                    for t in 0..t_len {
                        let p = &probs[((b * heads + hd) * t_len + t) * t_len..][..t_len];
                        let go = &g[(t * batch + b) * d + c0..][..dh];
                        let mut dot_sum = 0.0;
                        for s in 0..t_len {
                            if p[s] == 0.0 {
                                dp[s] = 0.0;
                                continue;
                            }
                            let vr = (s * batch + b) * d + c0;
                            kernels::axpy(p[s], go, &mut dv[vr..vr + dh]);
                            dp[s] = kernels::dot(go, &vv[vr..vr + dh]);
                            dot_sum += p[s] * dp[s];
                        }
                        let qr = (t * batch + b) * d + c0;
                        for s in 0..t_len {
                            if p[s] == 0.0 {
                                continue;
                            }
                            let ds = p[s] * (dp[s] - dot_sum) * scale;
                            let kr = (s * batch + b) * d + c0;
                            kernels::axpy(ds, &kv[kr..kr + dh], &mut dq[qr..qr + dh]);
                            kernels::axpy(ds, &qv[qr..qr + dh], &mut dk[kr..kr + dh]);
                        }
                    }
                }
            }
            if let Some(d) = slot(nodes, grads, *q) {
                kernels::add_assign(d, &dq);
            }
            if let Some(d) = slot(nodes, grads, *k) {
                kernels::add_assign(d, &dk);
            }
            if let Some(d) = slot(nodes, grads, *v) {
                kernels::add_assign(d, &dv);
            }
        }
        Op::SoftmaxCe { logits, targets, weights, probs } => {
            let c = dims(*logits).1;
            if let Some(dl) = slot(nodes, grads, *logits) {
                for (r, &w) in weights.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    let s = g[0] * w;
                    for j in 0..c {
                        let y = if j == targets[r] { 1.0 } else { 0.0 };
                        dl[r * c + j] += s * (probs[r * c + j] - y);
                    }
                }
            }
        }
        Op::HalfSqErr { x, target, weights } => {
            let c = dims(*x).1;
            let xv = val(*x);
            if let Some(dx) = slot(nodes, grads, *x) {
                for (r, &w) in weights.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    let s = g[0] * w;
                    for j in 0..c {
                        dx[r * c + j] += s * (xv[r * c + j] - target[r * c + j]);
                    }
                }
            }
        }
        Op::SoftmaxKld { x, teacher, weights, dir, probs } => {
            let d = dims(*x).1;
            if let Some(dx) = slot(nodes, grads, *x) {
                for (r, &w) in weights.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    let s = g[0] * w;
                    let p = &probs[r * d..(r + 1) * d];
                    let q = &teacher[r * d..(r + 1) * d];
                    match dir {
                        KldDirection::TeacherToStudent => {
                            for j in 0..d {
                                dx[r * d + j] += s * (p[j] - q[j]);
                            }
                        }
                        KldDirection::StudentToTeacher => {
                            let a = |j: usize| libm::log(p[j].max(1e-300)) - libm::log(q[j].max(1e-300));
                            let mean: f64 = (0..d).map(|j| p[j] * a(j)).sum();
                            for j in 0..d {
                                dx[r * d + j] += s * p[j] * (a(j) - mean);
                            }
                        }
                    }
                }
            }
        }
        Op::WeightedSum(terms) => {
            for &(t, w) in terms {
                if let Some(dt) = slot(nodes, grads, t) {
                    dt[0] += g[0] * w;
                }
            }
        }
    }
}
