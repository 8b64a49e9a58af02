use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::{Arch, HeadInput, Pooling, StudentConfig};
use super::layers::{self, EncoderRefs, LstmRefs, ENCODER_TENSORS};
use crate::data::Batch;
use crate::error::{bail, Result};
use crate::nn::init::{constant, glorot, uniform};
use crate::nn::{kernels, param_count, Graph, ParamGroup, ParamRef, Tensor, Var};
use crate::tokenizer::{EncodedExample, WordPieceVocab};

/// The five parameter groups of a student, in unfreezing-relevant order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Layer {
    WordEmb,
    Trunk,
    Projection,
    LogitHead,
    SoftmaxHead,
}

impl Layer {
    pub const ALL: [Layer; 5] = [Layer::WordEmb, Layer::Trunk, Layer::Projection, Layer::LogitHead, Layer::SoftmaxHead];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Layer::WordEmb => "word_emb",
            Layer::Trunk => "trunk",
            Layer::Projection => "projection",
            Layer::LogitHead => "logit_head",
            Layer::SoftmaxHead => "softmax_head",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.name() == name)
    }
}

/// Where the initial word embeddings come from.
#[derive(Debug, Clone, Copy)]
pub enum EmbeddingInit<'a> {
    Random,
    /// Rank-`E` SVD reduction of a `V×D` teacher table.
    Svd(&'a Tensor),
    /// Vectors keyed by piece string; pieces without an entry stay random.
    Pretrained(&'a BTreeMap<String, Vec<f64>>),
}

/// Builds a `V×E` embedding table for `vocab`.
pub fn init_embeddings(init: EmbeddingInit, vocab: &WordPieceVocab, dim: usize, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let v = vocab.len();
    match init {
        EmbeddingInit::Random => Ok(random_table(rng, v, dim)),
        EmbeddingInit::Svd(table) => {
            if table.rows() != v {
                bail!(Config, "teacher embedding table has {} rows, vocabulary has {}", table.rows(), v);
            }
            crate::embed::svd_reduce(table, dim)
        }
        EmbeddingInit::Pretrained(map) => {
            let mut t = random_table(rng, v, dim);
            for (id, piece) in vocab.pieces().iter().enumerate() {
                if let Some(vec) = map.get(piece.as_str()) {
                    if vec.len() != dim {
                        bail!(Config, "pretrained vector for {:?} has {} values, expected {}", piece, vec.len(), dim);
                    }
                    t.data_mut()[id * dim..(id + 1) * dim].copy_from_slice(vec);
                }
            }
            Ok(t)
        }
    }
}

fn random_table<R: Rng + ?Sized>(rng: &mut R, rows: usize, dim: usize) -> Tensor {
    // unit variance
    uniform(rng, &[rows, dim], libm::sqrt(3.0))
}

/// Graph nodes produced by a student forward pass. `mask` marks the rows that
/// carry real tokens (every row under sentence pooling).
#[derive(Debug, Clone)]
pub struct StudentOutputs {
    pub hidden: Var,
    pub projected: Option<Var>,
    pub logit_scores: Option<Var>,
    pub class_logits: Var,
    pub mask: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentModel {
    pub config: StudentConfig,
    pub params: Vec<ParamGroup>,
}

impl StudentModel {
    pub fn new(config: StudentConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let (v, e, c, d) = (config.vocab_size, config.emb_dim, config.classes, config.teacher_dim);
        let h2 = config.hidden_dim();
        let emb = random_table(rng, v, e);
        let trunk = match config.arch {
            Arch::BiLstm { hidden } => {
                let mut t = Vec::new();
                for _ in 0..2 {
                    t.push(glorot(rng, e, 4 * hidden));
                    t.push(glorot(rng, hidden, 4 * hidden));
                    let mut b = constant(&[4 * hidden], 0.0);
                    b.data_mut()[hidden..2 * hidden].fill(1.0);
                    t.push(b);
                }
                t
            }
            Arch::Transformer { depth, ff_width } => {
                (0..depth).flat_map(|_| layers::init_encoder(rng, e, ff_width)).collect()
            }
        };
        let (projection, logit, softmax) = match config.head_input {
            HeadInput::Projected => (
                alloc::vec![glorot(rng, h2, d), constant(&[d], 0.0)],
                alloc::vec![glorot(rng, d, c), constant(&[c], 0.0)],
                alloc::vec![glorot(rng, d, c), constant(&[c], 0.0)],
            ),
            HeadInput::Hidden => (Vec::new(), Vec::new(), alloc::vec![glorot(rng, h2, c)]),
        };
        let params = alloc::vec![
            ParamGroup::new(Layer::WordEmb.name(), alloc::vec![emb]),
            ParamGroup::new(Layer::Trunk.name(), trunk),
            ParamGroup::new(Layer::Projection.name(), projection),
            ParamGroup::new(Layer::LogitHead.name(), logit),
            ParamGroup::new(Layer::SoftmaxHead.name(), softmax),
        ];
        Ok(Self { config, params })
    }

    pub fn group(&self, layer: Layer) -> &ParamGroup {
        &self.params[layer.index()]
    }

    pub fn group_mut(&mut self, layer: Layer) -> &mut ParamGroup {
        &mut self.params[layer.index()]
    }

    pub fn embeddings(&self) -> &Tensor {
        &self.params[Layer::WordEmb.index()].tensors[0]
    }

    pub fn set_embeddings(&mut self, table: Tensor) -> Result<()> {
        let want = [self.config.vocab_size, self.config.emb_dim];
        if table.shape() != want {
            bail!(Shape, "embedding table {:?}, expected {:?}", table.shape(), want);
        }
        self.params[Layer::WordEmb.index()].tensors[0] = table;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        param_count(&self.params)
    }

    /// Copies `W^r, b^r` into `W^s, b^s`.
    pub fn warm_start_softmax_head(&mut self) -> Result<()> {
        if self.config.head_input != HeadInput::Projected {
            bail!(Config, "softmax head warm start needs the projected head input");
        }
        let logit = self.params[Layer::LogitHead.index()].tensors.clone();
        self.params[Layer::SoftmaxHead.index()].tensors = logit;
        Ok(())
    }

    /// Builds the forward pass. `rng` enables dropout.
    pub fn forward(&self, g: &mut Graph, batch: &Batch, mut rng: Option<&mut ChaCha8Rng>) -> StudentOutputs {
        let cfg = &self.config;
        let r = |group: Layer, tensor: usize| ParamRef { group: group.index(), tensor };
        let table = g.param(r(Layer::WordEmb, 0));
        let mut x = g.gather(table, batch.ids.clone());
        if let Some(rng) = rng.as_deref_mut() {
            x = g.dropout(x, cfg.dropout, rng);
        }
        let hidden_seq = match cfg.arch {
            Arch::BiLstm { .. } => {
                let fwd = LstmRefs { w_x: r(Layer::Trunk, 0), w_h: r(Layer::Trunk, 1), bias: r(Layer::Trunk, 2) };
                let bwd = LstmRefs { w_x: r(Layer::Trunk, 3), w_h: r(Layer::Trunk, 4), bias: r(Layer::Trunk, 5) };
                layers::bilstm_forward(g, x, fwd, bwd, batch.size, &batch.mask)
            }
            Arch::Transformer { depth, .. } => {
                if depth > 0 {
                    let pos = g.input(batch.steps, cfg.emb_dim, layers::sinusoidal(batch.steps, cfg.emb_dim));
                    x = g.add_positional(x, pos, batch.size);
                }
                let heads = layers::heads_for(cfg.emb_dim);
                for l in 0..depth {
                    let refs = EncoderRefs { group: Layer::Trunk.index(), first: l * ENCODER_TENSORS };
                    x = layers::encoder_layer(g, x, refs, batch.size, heads, &batch.mask, &[]);
                }
                x
            }
        };
        let (mut hidden, mask) = match cfg.pooling {
            Pooling::Tokens => (hidden_seq, batch.mask.clone()),
            Pooling::LastHidden => (self.pool(g, hidden_seq, batch), alloc::vec![true; batch.size]),
        };
        if let Some(rng) = rng.as_deref_mut() {
            hidden = g.dropout(hidden, cfg.dropout, rng);
        }
        match cfg.head_input {
            HeadInput::Projected => {
                let wf = g.param(r(Layer::Projection, 0));
                let bf = g.param(r(Layer::Projection, 1));
                let z = g.linear(hidden, wf, bf);
                let z = g.gelu(z);
                let wr = g.param(r(Layer::LogitHead, 0));
                let br = g.param(r(Layer::LogitHead, 1));
                let scores = g.linear(z, wr, br);
                let ws = g.param(r(Layer::SoftmaxHead, 0));
                let bs = g.param(r(Layer::SoftmaxHead, 1));
                let logits = g.linear(z, ws, bs);
                StudentOutputs { hidden, projected: Some(z), logit_scores: Some(scores), class_logits: logits, mask }
            }
            HeadInput::Hidden => {
                let ws = g.param(r(Layer::SoftmaxHead, 0));
                let logits = g.matmul(hidden, ws);
                StudentOutputs { hidden, projected: None, logit_scores: None, class_logits: logits, mask }
            }
        }
    }

    fn pool(&self, g: &mut Graph, seq: Var, batch: &Batch) -> Var {
        match self.config.arch {
            Arch::BiLstm { hidden } => {
                // forward state at the last token, backward state at the first
                let fwd = g.slice_cols(seq, 0, hidden);
                let bwd = g.slice_cols(seq, hidden, hidden);
                let f = g.select_rows(fwd, layers::last_rows(&batch.lengths));
                let b = g.select_rows(bwd, (0..batch.size).collect());
                g.concat_cols(alloc::vec![f, b])
            }
            Arch::Transformer { .. } => g.select_rows(seq, (0..batch.size).collect()),
        }
    }

    /// Inference over a batch: softmax probabilities, one row per output row.
    pub fn predict_proba(&self, batch: &Batch) -> Vec<f64> {
        let mut g = Graph::inference(&self.params);
        let out = self.forward(&mut g, batch, None);
        let (n, c) = g.dims(out.class_logits);
        let mut probs = alloc::vec![0.0; n * c];
        let lv = g.value(out.class_logits);
        for r in 0..n {
            kernels::softmax_into(&lv[r * c..(r + 1) * c], &mut probs[r * c..(r + 1) * c]);
        }
        probs
    }

    /// Argmax class id per output row.
    pub fn predict(&self, batch: &Batch) -> Vec<usize> {
        let mut g = Graph::inference(&self.params);
        let out = self.forward(&mut g, batch, None);
        argmax_rows(&g, out.class_logits)
    }

    /// Argmax over the logit head `r` instead of the softmax head.
    pub fn predict_from_logit_head(&self, batch: &Batch) -> Result<Vec<usize>> {
        let mut g = Graph::inference(&self.params);
        let out = self.forward(&mut g, batch, None);
        match out.logit_scores {
            Some(s) => Ok(argmax_rows(&g, s)),
            None => bail!(Config, "model has no logit head"),
        }
    }
}

pub(crate) fn argmax_rows(g: &Graph, v: Var) -> Vec<usize> {
    let (_, c) = g.dims(v);
    g.value(v)
        .chunks_exact(c)
        .map(|row| {
            let mut best = 0;
            for (j, x) in row.iter().enumerate() {
                if *x > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Per-position outputs for one example: `(z̃, r, p)`, each with one row per
/// position of the padded example (`K = max_len`).
pub fn student_forward(example: &EncodedExample, model: &StudentModel) -> Result<(Tensor, Tensor, Tensor)> {
    if model.config.head_input != HeadInput::Projected {
        bail!(Config, "student_forward needs the projected head input");
    }
    let batch = Batch::from_examples(&[example]).pad_to(example.max_len());
    let mut g = Graph::inference(&model.params);
    let out = model.forward(&mut g, &batch, None);
    let take = |v: Option<Var>| -> Result<Tensor> {
        let v = v.expect("projected head");
        let (n, m) = g.dims(v);
        Tensor::matrix(n, m, g.value(v).to_vec())
    };
    let z = take(out.projected)?;
    let r = take(out.logit_scores)?;
    let (n, c) = g.dims(out.class_logits);
    let mut p = alloc::vec![0.0; n * c];
    for (src, dst) in g.value(out.class_logits).chunks_exact(c).zip(p.chunks_exact_mut(c)) {
        kernels::softmax_into(src, dst);
    }
    Ok((z, r, Tensor::matrix(n, c, p)?))
}
