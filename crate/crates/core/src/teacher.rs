//! Teacher fine-tuning on labeled data and export of transfer-set traces.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Batch, BatchIter, BatchMode};
use crate::error::{bail, Result};
use crate::models::{TeacherConfig, TeacherModel};
use crate::nn::{adam_step, cosine_lr, AdamState, CosineSchedule, Graph, ParamGroup};
use crate::tokenizer::{EncodedExample, WordPieceVocab, RESERVED};

/// Teacher outputs for one transfer sentence. `logits` is `K×C` and `reps`
/// `K×D`, both row-major over the `K` non-padding pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub ids: Vec<u32>,
    pub logits: Vec<f32>,
    pub reps: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherTrace {
    pub classes: usize,
    pub dim: usize,
    pub layer: usize,
    pub records: Vec<TraceRecord>,
}

impl TeacherTrace {
    pub fn validate(&self) -> Result<()> {
        for (i, r) in self.records.iter().enumerate() {
            let k = r.ids.len();
            if r.logits.len() != k * self.classes || r.reps.len() != k * self.dim {
                bail!(Integrity, "trace record {} has inconsistent array lengths", i);
            }
        }
        Ok(())
    }

    /// The first `n` records.
    pub fn prefix(&self, n: usize) -> Self {
        Self { records: self.records[..n.min(self.records.len())].to_vec(), ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeacherTraining {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_high: f64,
    pub lr_low: f64,
    /// Probability of replacing a content piece by `[UNK]` during training.
    pub piece_dropout: f64,
}

impl Default for TeacherTraining {
    fn default() -> Self {
        Self { epochs: 60, batch_size: 16, lr_high: 2e-3, lr_low: 1e-5, piece_dropout: 0.3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeacherEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
}

/// Token cross-entropy of the teacher over `examples`.
pub fn teacher_loss(teacher: &TeacherModel, examples: &[EncodedExample], batch_size: usize) -> Result<f64> {
    let (mut total, mut tokens) = (0.0, 0usize);
    for chunk in examples.chunks(batch_size.max(1)) {
        let refs: Vec<&EncodedExample> = chunk.iter().collect();
        let batch = Batch::from_examples(&refs);
        let Some(targets) = batch.targets.clone() else { bail!(Data, "teacher loss needs labeled examples") };
        let mut g = Graph::inference(&teacher.params);
        let out = teacher.forward(&mut g, &batch, None, None)?;
        let loss = g.softmax_cross_entropy(out.logits, targets, &batch.mask);
        let n = batch.mask.iter().filter(|m| **m).count();
        total += g.scalar(loss) * n as f64;
        tokens += n;
    }
    Ok(if tokens == 0 { 0.0 } else { total / tokens as f64 })
}

/// Trains a fresh teacher with token cross-entropy and keeps the parameters
/// with the lowest dev loss (the initialisation counts as epoch 0).
pub fn finetune_teacher(
    train: &[EncodedExample],
    dev: &[EncodedExample],
    config: TeacherConfig,
    training: TeacherTraining,
    seed: u64,
) -> Result<(TeacherModel, Vec<TeacherEpoch>)> {
    if train.is_empty() {
        bail!(Insufficient, "teacher fine-tuning needs labeled sentences");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut teacher = TeacherModel::new(config, &mut rng)?;
    let mut history = Vec::new();
    if training.epochs == 0 {
        return Ok((teacher, history));
    }
    let dev_set = if dev.is_empty() { train } else { dev };
    let mut best_loss = teacher_loss(&teacher, dev_set, 64)?;
    let mut best: Vec<ParamGroup> = teacher.params.clone();
    let steps_per_epoch = train.len().div_ceil(training.batch_size);
    let schedule = CosineSchedule::new(training.lr_high, training.lr_low, (training.epochs * steps_per_epoch) as u64)?;
    let mut adam = AdamState::new(&teacher.params);
    let mut step = 0u64;
    for epoch in 1..=training.epochs {
        let iter = BatchIter::new(train.len(), 0, training.batch_size, BatchMode::Labeled, seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9))?;
        let mut train_total = 0.0;
        let mut count = 0;
        for s in iter {
            let refs: Vec<&EncodedExample> = s.labeled.iter().map(|&i| &train[i]).collect();
            let mut batch = Batch::from_examples(&refs);
            if training.piece_dropout > 0.0 {
                for id in batch.ids.iter_mut() {
                    if *id >= RESERVED.len() && rng.gen_bool(training.piece_dropout) {
                        *id = WordPieceVocab::UNK_ID as usize;
                    }
                }
            }
            let Some(targets) = batch.targets.clone() else { bail!(Data, "teacher training needs labeled examples") };
            let mut g = Graph::new(&teacher.params);
            let out = teacher.forward(&mut g, &batch, None, Some(&mut rng))?;
            let loss = g.softmax_cross_entropy(out.logits, targets, &batch.mask);
            let grads = match g.backward(loss) {
                Ok(grads) => grads,
                Err(e) => {
                    teacher.params = best;
                    bail!(NonFinite, "teacher diverged at epoch {} step {}: {}", epoch, step, e);
                }
            };
            train_total += grads.loss;
            count += 1;
            grads.apply(&mut teacher.params)?;
            adam_step(&mut teacher.params, &mut adam, cosine_lr(step, &schedule))?;
            step += 1;
        }
        let dev_loss = teacher_loss(&teacher, dev_set, 64)?;
        if !dev_loss.is_finite() {
            teacher.params = best;
            bail!(NonFinite, "teacher dev loss became non-finite at epoch {}", epoch);
        }
        history.push(TeacherEpoch { epoch, train_loss: train_total / count.max(1) as f64, dev_loss });
        if dev_loss < best_loss {
            best_loss = dev_loss;
            best.clone_from(&teacher.params);
        }
    }
    teacher.params = best;
    Ok((teacher, history))
}

/// Runs the teacher once over every transfer sentence, in order, keeping
/// logits and the layer-`layer` output for the non-padding pieces.
pub fn trace_transfer_set(teacher: &TeacherModel, unlabeled: &[EncodedExample], layer: usize) -> Result<TeacherTrace> {
    if layer == 0 || layer > teacher.config.layers {
        bail!(Config, "trace layer must lie in 1..={}, got {}", teacher.config.layers, layer);
    }
    let (c, d) = (teacher.config.classes, teacher.config.width);
    let mut records = Vec::with_capacity(unlabeled.len());
    for chunk in unlabeled.chunks(64) {
        let refs: Vec<&EncodedExample> = chunk.iter().collect();
        let batch = Batch::from_examples(&refs);
        let mut g = Graph::inference(&teacher.params);
        let out = teacher.forward(&mut g, &batch, Some(layer), None)?;
        let logits = g.value(out.logits);
        let reps = g.value(out.reps.expect("layer requested"));
        for (b, e) in chunk.iter().enumerate() {
            let mut rec = TraceRecord { ids: e.content().to_vec(), logits: Vec::with_capacity(e.len * c), reps: Vec::with_capacity(e.len * d) };
            for t in 0..e.len {
                let row = batch.row(t, b);
                rec.logits.extend(logits[row * c..(row + 1) * c].iter().map(|&x| x as f32));
                rec.reps.extend(reps[row * d..(row + 1) * d].iter().map(|&x| x as f32));
            }
            records.push(rec);
        }
    }
    Ok(TeacherTrace { classes: c, dim: d, layer, records })
}
