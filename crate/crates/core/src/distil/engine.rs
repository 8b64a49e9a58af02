use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::history::{EpochRecord, LayerRecord, Pathway, TrainHistory};
use super::predict::{evaluate_model, StudentSet};
use super::state::{unfreeze_layer, EarlyStopping, StageState, Verdict};
use super::strategy::{StageSpec, StrategySpec};
use crate::data::{Batch, BatchIter, EncodedSet};
use crate::error::{bail, Error, Result};
use crate::losses::{joint_loss_graph, LossSet, LossWeights, Pass};
use crate::models::{HeadInput, StudentConfig, StudentModel};
use crate::nn::{adam_step, cosine_lr, AdamState, CosineSchedule, Graph, KldDirection, ParamGroup, Tensor};
use crate::teacher::{TeacherTrace, TraceRecord};
use crate::tokenizer::{EncodedExample, NUM_TAGS};

/// Optimisation settings shared by every stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr_high: f64,
    pub lr_low: f64,
    pub kld: KldDirection,
    /// Share of the transfer traces held out for validating LL/RL stages.
    pub holdout_fraction: f64,
    pub holdout_cap: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { batch_size: 32, lr_high: 5e-3, lr_low: 1e-5, kld: KldDirection::TeacherToStudent, holdout_fraction: 0.05, holdout_cap: 1000 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            bail!(Config, "batch size must be positive");
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            bail!(Config, "holdout fraction must lie in [0, 1)");
        }
        CosineSchedule::new(self.lr_high, self.lr_low, 1)?;
        Ok(())
    }
}

/// Labeled training and dev sentences plus the transfer-set traces.
#[derive(Debug, Clone, Copy)]
pub struct DistilData<'a> {
    pub labeled: &'a EncodedSet,
    pub dev: &'a EncodedSet,
    pub traces: Option<&'a TeacherTrace>,
}

/// Splits traces into training records and a held-out validation tail.
pub fn split_traces<'t>(trace: &'t TeacherTrace, fraction: f64, cap: usize) -> (Vec<&'t TraceRecord>, Vec<&'t TraceRecord>) {
    let n = trace.records.len();
    let held = if n < 2 { 0 } else { (libm::ceil(n as f64 * fraction) as usize).clamp(1, cap.max(1)).min(n - 1) };
    let all: Vec<&TraceRecord> = trace.records.iter().collect();
    let (train, val) = all.split_at(n - held);
    let val = if val.is_empty() { train.to_vec() } else { val.to_vec() };
    (train.to_vec(), val)
}

/// Runs every stage of `spec`. D0 trains one model per labeled language,
/// everything else a single shared model.
pub fn run_strategy(
    spec: &StrategySpec,
    data: DistilData,
    student: &StudentConfig,
    embeddings: Option<&Tensor>,
    train: &TrainConfig,
    seed: u64,
) -> Result<(StudentSet, TrainHistory)> {
    spec.validate()?;
    train.validate()?;
    let mut config = *student;
    config.head_input = spec.head_input();
    config.validate()?;
    if config.classes != NUM_TAGS {
        bail!(Config, "student must predict {} tags, configured for {}", NUM_TAGS, config.classes);
    }
    if data.labeled.is_empty() && spec.stages.iter().any(|s| s.losses.ce) {
        bail!(Insufficient, "{} needs labeled sentences", spec.id);
    }
    let (train_records, val_records) = match (spec.needs_traces(), data.traces) {
        (true, None) => bail!(Config, "{} needs teacher traces", spec.id),
        (true, Some(t)) => {
            t.validate()?;
            if t.records.is_empty() {
                bail!(Insufficient, "{} needs a non-empty transfer set", spec.id);
            }
            if t.classes != config.classes {
                bail!(Config, "traces carry {} classes, student predicts {}", t.classes, config.classes);
            }
            if t.dim != config.teacher_dim {
                bail!(Config, "traces have width {}, student projects to {}", t.dim, config.teacher_dim);
            }
            split_traces(t, train.holdout_fraction, train.holdout_cap)
        }
        (false, _) => (Vec::new(), Vec::new()),
    };
    let dims = data.traces.map_or((config.classes, config.teacher_dim), |t| (t.classes, t.dim));

    let mut history = TrainHistory::default();
    if spec.per_language() {
        let mut models = BTreeMap::new();
        for (i, lang) in data.labeled.languages().into_iter().enumerate() {
            let labeled = data.labeled.only_language(&lang);
            let dev = data.dev.only_language(&lang);
            let s = seed.wrapping_add(i as u64);
            let mut runner = Runner::new(spec, train, &labeled, &dev, &train_records, &val_records, dims, s, lang.clone());
            let model = runner.run(config, embeddings)?;
            history.extend(runner.history);
            models.insert(lang, model);
        }
        return Ok((StudentSet::PerLanguage(models), history));
    }
    let mut runner = Runner::new(spec, train, data.labeled, data.dev, &train_records, &val_records, dims, seed, String::new());
    let model = runner.run(config, embeddings)?;
    history.extend(runner.history);
    Ok((StudentSet::Shared(model), history))
}

struct Runner<'a> {
    spec: &'a StrategySpec,
    train: &'a TrainConfig,
    labeled: &'a EncodedSet,
    dev: &'a EncodedSet,
    train_records: &'a [&'a TraceRecord],
    val_records: &'a [&'a TraceRecord],
    classes: usize,
    dim: usize,
    seed: u64,
    rng: ChaCha8Rng,
    language: String,
    history: TrainHistory,
}

fn mix(seed: u64, parts: &[u64]) -> u64 {
    let mut h = seed ^ 0x5851_f42d_4c95_7f2d;
    for p in parts {
        h = (h ^ p).wrapping_mul(0x9e37_79b9_7f4a_7c15).rotate_left(29);
    }
    h
}

fn restore(model: &mut StudentModel, snapshot: &[ParamGroup]) {
    for (g, s) in model.params.iter_mut().zip(snapshot) {
        g.tensors.clone_from(&s.tensors);
    }
}

impl<'a> Runner<'a> {
    #[allow(clippy::too_many_arguments)]
    fn new(
        spec: &'a StrategySpec,
        train: &'a TrainConfig,
        labeled: &'a EncodedSet,
        dev: &'a EncodedSet,
        train_records: &'a [&'a TraceRecord],
        val_records: &'a [&'a TraceRecord],
        (classes, dim): (usize, usize),
        seed: u64,
        language: String,
    ) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(mix(seed, &[1]));
        Self { spec, train, labeled, dev, train_records, val_records, classes, dim, seed, rng, language, history: TrainHistory::default() }
    }

    fn run(&mut self, config: StudentConfig, embeddings: Option<&Tensor>) -> Result<StudentModel> {
        let mut init_rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut model = StudentModel::new(config, &mut init_rng)?;
        if let Some(e) = embeddings {
            model.set_embeddings(e.clone())?;
        }
        let mut trained_logits = false;
        for (si, stage) in self.spec.stages.iter().enumerate() {
            let stage_no = si + 1;
            if stage.losses == LossSet::CE && trained_logits && config.head_input == HeadInput::Projected {
                model.warm_start_softmax_head()?;
            }
            let entry = self.validation_loss(&model, stage)?;
            if stage.unfreeze {
                let order = stage.unfreeze_order();
                let mut state = StageState::begin(stage_no, order.clone(), &mut model, entry);
                for step in &order {
                    for layer in step {
                        unfreeze_layer(&mut state, &mut model, *layer)?;
                    }
                    let label: Vec<&str> = step.iter().map(|l| l.name()).collect();
                    self.train_layer(&mut model, &mut state, stage, &label.join("+"))?;
                }
            } else {
                let order = alloc::vec![stage.trainable(config.head_input)];
                let mut state = StageState::begin(stage_no, order.clone(), &mut model, entry);
                for layer in &order[0] {
                    unfreeze_layer(&mut state, &mut model, *layer)?;
                }
                self.train_layer(&mut model, &mut state, stage, "all")?;
            }
            trained_logits |= stage.losses.ll;
        }
        for g in model.params.iter_mut() {
            g.frozen = false;
        }
        Ok(model)
    }

    fn pathway(stage: &StageSpec) -> Pathway {
        if stage.losses.ce {
            Pathway::Softmax
        } else if stage.losses.ll {
            Pathway::LogitHead
        } else {
            Pathway::None
        }
    }

    fn dev_f1(&self, model: &StudentModel, pathway: Pathway) -> Result<f64> {
        if pathway == Pathway::None || self.dev.is_empty() {
            return Ok(f64::NAN);
        }
        Ok(evaluate_model(model, self.dev, pathway)?.mean_f1)
    }

    /// The stage objective on held-out data: CE on the dev split, LL and RL
    /// on the held-out traces, token-weighted over the whole set.
    fn validation_loss(&self, model: &StudentModel, stage: &StageSpec) -> Result<f64> {
        let w = self.spec.stage_weights(stage);
        let mut total = 0.0;
        if stage.losses.ce && w.alpha > 0.0 {
            let dev = if self.dev.is_empty() { self.labeled } else { self.dev };
            total += w.alpha * labeled_loss(model, &dev.examples)?;
        }
        let rl = stage.losses.rl && w.beta > 0.0;
        let ll = stage.losses.ll && w.gamma > 0.0;
        if rl || ll {
            let (rl_v, ll_v) = trace_losses(model, self.val_records, self.classes, self.dim, self.train.kld)?;
            if rl {
                total += w.beta * rl_v;
            }
            if ll {
                total += w.gamma * ll_v;
            }
        }
        Ok(total)
    }

    fn train_layer(&mut self, model: &mut StudentModel, state: &mut StageState, stage: &StageSpec, label: &str) -> Result<()> {
        let pathway = Self::pathway(stage);
        let entry = self.validation_loss(model, stage)?;
        let f1 = self.dev_f1(model, pathway)?;
        self.record(state.stage, label, 0, f64::NAN, entry, f1, pathway);
        let mut es = EarlyStopping::new(entry, self.spec.patience);
        let mut snapshot = model.params.clone();
        let mut epochs_run = 0;
        let outcome = self.run_epochs(model, state.stage, stage, label, &mut es, &mut snapshot, &mut epochs_run);
        restore(model, &snapshot);
        state.best_val = es.best;
        state.epochs += epochs_run;
        state.snapshot = snapshot;
        self.history.layers.push(LayerRecord {
            language: self.language.clone(),
            stage: state.stage,
            layer: label.to_string(),
            entry_val: entry,
            best_val: es.best,
            best_epoch: es.best_epoch,
            epochs_run,
        });
        outcome
    }

    #[allow(clippy::too_many_arguments)]
    fn record(&mut self, stage: usize, layer: &str, epoch: usize, train_loss: f64, val_loss: f64, dev_f1: f64, pathway: Pathway) {
        self.history.epochs.push(EpochRecord {
            language: self.language.clone(),
            stage,
            layer: layer.to_string(),
            epoch,
            train_loss,
            val_loss,
            dev_f1,
            pathway,
        });
    }

    #[allow(clippy::too_many_arguments)]
    fn run_epochs(
        &mut self,
        model: &mut StudentModel,
        stage_no: usize,
        stage: &StageSpec,
        label: &str,
        es: &mut EarlyStopping,
        snapshot: &mut Vec<ParamGroup>,
        epochs_run: &mut usize,
    ) -> Result<()> {
        let n = self.spec.epochs_per_layer;
        if n == 0 {
            return Ok(());
        }
        let pathway = Self::pathway(stage);
        let (n_lab, n_unl) = self.segment_sizes(stage);
        let steps = BatchIter::new(n_lab, n_unl, self.train.batch_size, stage.mode(), 0)?.steps();
        let schedule = CosineSchedule::new(self.train.lr_high, self.train.lr_low, (n * steps).max(1) as u64)?;
        let mut adam = AdamState::new(&model.params);
        let mut t = 0u64;
        let layer_no = self.history.layers.len() as u64;
        for epoch in 1..=n {
            let seed = mix(self.seed, &[stage_no as u64, layer_no, epoch as u64]);
            let train_loss = self.train_epoch(model, stage, seed, &schedule, &mut adam, &mut t)?;
            let val = self.validation_loss(model, stage)?;
            if !val.is_finite() {
                bail!(NonFinite, "validation loss became non-finite in stage {} layer {} epoch {}", stage_no, label, epoch);
            }
            let f1 = self.dev_f1(model, pathway)?;
            *epochs_run = epoch;
            self.record(stage_no, label, epoch, train_loss, val, f1, pathway);
            match es.observe(epoch, val) {
                Verdict::Improved => snapshot.clone_from(&model.params),
                Verdict::Continue => {}
                Verdict::Stop => break,
            }
        }
        Ok(())
    }

    fn segment_sizes(&self, stage: &StageSpec) -> (usize, usize) {
        let n_lab = if stage.losses.ce { self.labeled.len() } else { 0 };
        let n_unl = if stage.losses.needs_unlabeled() { self.train_records.len() } else { 0 };
        (n_lab, n_unl)
    }

    fn train_epoch(
        &mut self,
        model: &mut StudentModel,
        stage: &StageSpec,
        seed: u64,
        schedule: &CosineSchedule,
        adam: &mut AdamState,
        t: &mut u64,
    ) -> Result<f64> {
        let (n_lab, n_unl) = self.segment_sizes(stage);
        let weights = self.spec.stage_weights(stage);
        let iter = BatchIter::new(n_lab, n_unl, self.train.batch_size, stage.mode(), seed)?;
        let (mut total, mut count) = (0.0, 0usize);
        for step in iter {
            let grads = {
                let mut g = Graph::new(&model.params);
                let lab_batch = (!step.labeled.is_empty()).then(|| {
                    let refs: Vec<&EncodedExample> = step.labeled.iter().map(|&i| &self.labeled.examples[i]).collect();
                    Batch::from_examples(&refs)
                });
                let unl_batch = (!step.unlabeled.is_empty()).then(|| {
                    let refs: Vec<&TraceRecord> = step.unlabeled.iter().map(|&i| self.train_records[i]).collect();
                    Batch::from_trace(&refs, self.classes, self.dim)
                });
                let lab_out = lab_batch.as_ref().map(|b| model.forward(&mut g, b, Some(&mut self.rng)));
                let unl_out = unl_batch.as_ref().map(|b| model.forward(&mut g, b, Some(&mut self.rng)));
                let lab = lab_out.as_ref().zip(lab_batch.as_ref()).map(|(out, batch)| Pass { out, batch });
                let unl = unl_out.as_ref().zip(unl_batch.as_ref()).map(|(out, batch)| Pass { out, batch });
                let (loss, _) = joint_loss_graph(&mut g, lab, unl, weights, stage.losses, self.train.kld)?;
                g.backward(loss).map_err(|e| match e {
                    Error::NonFinite(m) => Error::NonFinite(alloc::format!("training diverged at step {}: {}", *t, m)),
                    other => other,
                })?
            };
            total += grads.loss;
            count += 1;
            grads.apply(&mut model.params)?;
            adam_step(&mut model.params, adam, cosine_lr(*t, schedule))?;
            *t += 1;
        }
        Ok(if count == 0 { 0.0 } else { total / count as f64 })
    }
}

/// Token-mean cross-entropy of the softmax head over labeled examples.
pub fn labeled_loss(model: &StudentModel, examples: &[EncodedExample]) -> Result<f64> {
    let (mut total, mut tokens) = (0.0, 0usize);
    for chunk in examples.chunks(64) {
        let refs: Vec<&EncodedExample> = chunk.iter().collect();
        let batch = Batch::from_examples(&refs);
        let Some(targets) = batch.targets.clone() else { bail!(Data, "cross-entropy needs labeled examples") };
        let mut g = Graph::inference(&model.params);
        let out = model.forward(&mut g, &batch, None);
        let n = out.mask.iter().filter(|m| **m).count();
        let v = g.softmax_cross_entropy(out.class_logits, targets, &out.mask);
        total += g.scalar(v) * n as f64;
        tokens += n;
    }
    Ok(if tokens == 0 { 0.0 } else { total / tokens as f64 })
}

/// Token-mean representation and logit losses over trace records.
pub fn trace_losses(model: &StudentModel, records: &[&TraceRecord], classes: usize, dim: usize, dir: KldDirection) -> Result<(f64, f64)> {
    let (mut rl, mut ll, mut tokens) = (0.0, 0.0, 0usize);
    let weights = LossWeights::default();
    for chunk in records.chunks(64) {
        let batch = Batch::from_trace(chunk, classes, dim);
        let mut g = Graph::inference(&model.params);
        let out = model.forward(&mut g, &batch, None);
        let n = out.mask.iter().filter(|m| **m).count();
        let both = LossSet { ce: false, ll: true, rl: true };
        let (_, terms) = joint_loss_graph(&mut g, None, Some(Pass { out: &out, batch: &batch }), weights, both, dir)?;
        rl += terms.rl.unwrap_or(0.0) * n as f64;
        ll += terms.ll.unwrap_or(0.0) * n as f64;
        tokens += n;
    }
    let d = tokens.max(1) as f64;
    Ok((rl / d, ll / d))
}

