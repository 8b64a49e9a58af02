use alloc::string::String;
use alloc::vec::Vec;

/// Which head dev F1 was read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pathway {
    Softmax,
    LogitHead,
    /// Representation stages have no tag output; F1 is recorded as NaN.
    None,
}

impl Pathway {
    pub fn name(self) -> &'static str {
        match self {
            Pathway::Softmax => "softmax",
            Pathway::LogitHead => "logit_head",
            Pathway::None => "none",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [Pathway::Softmax, Pathway::LogitHead, Pathway::None].into_iter().find(|p| p.name() == s)
    }
}

/// One epoch of one layer. Epoch 0 is the evaluation on entry, before any
/// update, and has no training loss.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// Empty for shared models.
    pub language: String,
    pub stage: usize,
    pub layer: String,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub dev_f1: f64,
    pub pathway: Pathway,
}

/// Summary of one `train_layer` call.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerRecord {
    pub language: String,
    pub stage: usize,
    pub layer: String,
    pub entry_val: f64,
    pub best_val: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub layers: Vec<LayerRecord>,
}

impl TrainHistory {
    pub fn stage_layers(&self, stage: usize) -> impl Iterator<Item = &LayerRecord> {
        self.layers.iter().filter(move |l| l.stage == stage)
    }

    pub fn stages(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.layers.iter().map(|l| l.stage).collect();
        s.dedup();
        s
    }

    /// Dev F1 at the best epoch of the last layer trained.
    pub fn final_dev_f1(&self) -> Option<f64> {
        let last = self.layers.last()?;
        self.epochs
            .iter()
            .rev()
            .find(|e| e.stage == last.stage && e.layer == last.layer && e.epoch == last.best_epoch && e.language == last.language)
            .map(|e| e.dev_f1)
    }

    pub fn extend(&mut self, other: TrainHistory) {
        self.epochs.extend(other.epochs);
        self.layers.extend(other.layers);
    }
}
