use crate::error::{bail, Result};
use crate::tokenizer::NUM_TAGS;

/// Student trunk architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    BiLstm { hidden: usize },
    /// Post-norm encoder of width `E` with `depth` layers and a feed-forward
    /// inner width of `ff_width`.
    Transformer { depth: usize, ff_width: usize },
}

/// What the projection-free and projected heads read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeadInput {
    /// `z̃ = Gelu(W^f·h + b^f)` feeds both heads.
    #[default]
    Projected,
    /// `p = softmax(h·W^s)`; no projection or logit head.
    Hidden,
}

/// Token tagging or sentence classification from the last hidden state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pooling {
    #[default]
    Tokens,
    LastHidden,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudentConfig {
    pub vocab_size: usize,
    pub emb_dim: usize,
    pub arch: Arch,
    pub classes: usize,
    /// Width of the teacher representation the projection maps onto.
    pub teacher_dim: usize,
    pub head_input: HeadInput,
    pub pooling: Pooling,
    pub dropout: f64,
}

impl StudentConfig {
    pub fn bilstm(vocab_size: usize, emb_dim: usize, hidden: usize, teacher_dim: usize) -> Self {
        Self {
            vocab_size,
            emb_dim,
            arch: Arch::BiLstm { hidden },
            classes: NUM_TAGS,
            teacher_dim,
            head_input: HeadInput::Projected,
            pooling: Pooling::Tokens,
            dropout: 0.2,
        }
    }

    /// Width of the trunk output `h`.
    pub fn hidden_dim(&self) -> usize {
        match self.arch {
            Arch::BiLstm { hidden } => 2 * hidden,
            Arch::Transformer { .. } => self.emb_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.vocab_size, self.emb_dim, self.classes, self.teacher_dim];
        if dims.contains(&0) {
            bail!(Config, "student dimensions must be positive: {:?}", self);
        }
        match self.arch {
            Arch::BiLstm { hidden: 0 } => bail!(Config, "BiLSTM hidden size must be positive"),
            Arch::Transformer { depth, ff_width: 0 } if depth > 0 => {
                bail!(Config, "transformer feed-forward width must be positive")
            }
            _ => {}
        }
        if !(0.0..1.0).contains(&self.dropout) {
            bail!(Config, "dropout must lie in [0, 1), got {}", self.dropout);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeacherConfig {
    pub vocab_size: usize,
    pub width: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_width: usize,
    pub max_len: usize,
    pub classes: usize,
    pub dropout: f64,
    /// Penalise attention to distant positions in all but one head.
    pub local_bias: bool,
}

impl TeacherConfig {
    /// Four layers of width 64 with four heads.
    pub fn desk(vocab_size: usize, max_len: usize) -> Self {
        Self { vocab_size, width: 64, layers: 4, heads: 4, ff_width: 256, max_len, classes: NUM_TAGS, dropout: 0.2, local_bias: true }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.vocab_size, self.width, self.layers, self.heads, self.ff_width, self.max_len, self.classes].contains(&0) {
            bail!(Config, "teacher dimensions must be positive: {:?}", self);
        }
        if self.width % self.heads != 0 {
            bail!(Config, "teacher width {} not divisible by {} heads", self.width, self.heads);
        }
        if !(0.0..1.0).contains(&self.dropout) {
            bail!(Config, "dropout must lie in [0, 1), got {}", self.dropout);
        }
        Ok(())
    }

    /// Default layer for representation transfer: the middle one.
    pub fn middle_layer(&self) -> usize {
        self.layers.div_ceil(2)
    }
}
