use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{bail, Result};
use crate::teacher::{TeacherTrace, TraceRecord};
use crate::tokenizer::{EncodedExample, WordPieceVocab};

/// Which data segment drives an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchMode {
    Labeled,
    Unlabeled,
    /// One labeled and one unlabeled batch per step; the larger segment
    /// defines the epoch and the smaller one cycles.
    Mixed,
}

/// Example indices for one optimisation step. A segment not used by the
/// mode is empty.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Step {
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
}

struct Cycler {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl Cycler {
    fn new(n: usize, mut rng: ChaCha8Rng) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Self { order, pos: 0, rng }
    }

    fn take(&mut self, k: usize) -> Vec<usize> {
        let k = k.min(self.order.len());
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// One shuffled epoch of index batches, deterministic under `seed`.
pub struct BatchIter {
    main: Vec<usize>,
    main_is_labeled: bool,
    other: Option<Cycler>,
    batch_size: usize,
    pos: usize,
}

impl BatchIter {
    pub fn new(n_labeled: usize, n_unlabeled: usize, batch_size: usize, mode: BatchMode, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            bail!(Config, "batch size must be positive");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let need_l = matches!(mode, BatchMode::Labeled | BatchMode::Mixed);
        let need_u = matches!(mode, BatchMode::Unlabeled | BatchMode::Mixed);
        if need_l && n_labeled == 0 {
            bail!(Insufficient, "{:?} batches need labeled data", mode);
        }
        if need_u && n_unlabeled == 0 {
            bail!(Insufficient, "{:?} batches need unlabeled data", mode);
        }
        let main_is_labeled = match mode {
            BatchMode::Labeled => true,
            BatchMode::Unlabeled => false,
            BatchMode::Mixed => n_labeled >= n_unlabeled,
        };
        let n_main = if main_is_labeled { n_labeled } else { n_unlabeled };
        let mut main: Vec<usize> = (0..n_main).collect();
        main.shuffle(&mut rng);
        let other = (mode == BatchMode::Mixed).then(|| {
            let n_other = if main_is_labeled { n_unlabeled } else { n_labeled };
            Cycler::new(n_other, ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15))
        });
        Ok(Self { main, main_is_labeled, other, batch_size, pos: 0 })
    }

    pub fn steps(&self) -> usize {
        self.main.len().div_ceil(self.batch_size)
    }
}

impl Iterator for BatchIter {
    type Item = Step;

    fn next(&mut self) -> Option<Step> {
        if self.pos >= self.main.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.main.len());
        let main = self.main[self.pos..end].to_vec();
        self.pos = end;
        let other = self.other.as_mut().map(|c| c.take(self.batch_size)).unwrap_or_default();
        Some(if self.main_is_labeled {
            Step { labeled: main, unlabeled: other }
        } else {
            Step { labeled: other, unlabeled: main }
        })
    }
}

/// Verifies that trace record `i` was computed from unlabeled sentence `i`.
pub fn check_trace_alignment(unlabeled: &[EncodedExample], trace: &TeacherTrace) -> Result<()> {
    if unlabeled.len() != trace.records.len() {
        bail!(Integrity, "{} unlabeled sentences but {} trace records", unlabeled.len(), trace.records.len());
    }
    for (i, (e, r)) in unlabeled.iter().zip(&trace.records).enumerate() {
        if e.content() != r.ids.as_slice() {
            bail!(Integrity, "trace record {} does not match its sentence pieces", i);
        }
    }
    Ok(())
}

/// A padded, time-major batch: row `t·size + b` is position `t` of sequence `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub size: usize,
    pub steps: usize,
    pub ids: Vec<usize>,
    pub mask: Vec<bool>,
    pub lengths: Vec<usize>,
    pub targets: Option<Vec<usize>>,
    pub teacher_logits: Option<Vec<f64>>,
    pub teacher_reps: Option<Vec<f64>>,
}

impl Batch {
    pub fn rows(&self) -> usize {
        self.size * self.steps
    }

    pub fn row(&self, t: usize, b: usize) -> usize {
        t * self.size + b
    }

    fn layout(lengths: Vec<usize>, mut get_id: impl FnMut(usize, usize) -> u32) -> Self {
        let size = lengths.len();
        let steps = lengths.iter().copied().max().unwrap_or(0);
        let mut ids = alloc::vec![WordPieceVocab::PAD_ID as usize; size * steps];
        let mut mask = alloc::vec![false; size * steps];
        for (b, &len) in lengths.iter().enumerate() {
            for t in 0..len {
                ids[t * size + b] = get_id(b, t) as usize;
                mask[t * size + b] = true;
            }
        }
        Self { size, steps, ids, mask, lengths, targets: None, teacher_logits: None, teacher_reps: None }
    }

    /// Batch of encoded sentences, trimmed to the longest one. Targets are set
    /// when every example is labeled.
    pub fn from_examples(examples: &[&EncodedExample]) -> Self {
        let lengths = examples.iter().map(|e| e.len).collect();
        let mut batch = Self::layout(lengths, |b, t| examples[b].ids[t]);
        if examples.iter().all(|e| e.tags.is_some()) {
            let mut targets = alloc::vec![crate::tokenizer::Tag::Pad.id(); batch.rows()];
            for (b, e) in examples.iter().enumerate() {
                let tags = e.tags.as_ref().expect("checked");
                for t in 0..e.len {
                    targets[t * batch.size + b] = tags[t].id();
                }
            }
            batch.targets = Some(targets);
        }
        batch
    }

    /// Extends the batch with padding steps up to `steps`.
    pub fn pad_to(mut self, steps: usize) -> Self {
        if steps <= self.steps {
            return self;
        }
        let (old, size) = (self.steps, self.size);
        let extra = (steps - old) * size;
        self.ids.extend(core::iter::repeat(WordPieceVocab::PAD_ID as usize).take(extra));
        self.mask.extend(core::iter::repeat(false).take(extra));
        if let Some(t) = self.targets.as_mut() {
            t.extend(core::iter::repeat(crate::tokenizer::Tag::Pad.id()).take(extra));
        }
        for v in [self.teacher_logits.as_mut(), self.teacher_reps.as_mut()].into_iter().flatten() {
            let width = if old * size == 0 { 0 } else { v.len() / (old * size) };
            v.extend(core::iter::repeat(0.0).take(extra * width));
        }
        self.steps = steps;
        self
    }

    /// Batch of trace records with teacher targets promoted to `f64`.
    pub fn from_trace(records: &[&TraceRecord], classes: usize, dim: usize) -> Self {
        let lengths = records.iter().map(|r| r.ids.len()).collect();
        let mut batch = Self::layout(lengths, |b, t| records[b].ids[t]);
        let rows = batch.rows();
        let mut logits = alloc::vec![0.0; rows * classes];
        let mut reps = alloc::vec![0.0; rows * dim];
        for (b, r) in records.iter().enumerate() {
            for t in 0..r.ids.len() {
                let row = t * batch.size + b;
                for c in 0..classes {
                    logits[row * classes + c] = f64::from(r.logits[t * classes + c]);
                }
                for d in 0..dim {
                    reps[row * dim + d] = f64::from(r.reps[t * dim + d]);
                }
            }
        }
        batch.teacher_logits = Some(logits);
        batch.teacher_reps = Some(reps);
        batch
    }
}
