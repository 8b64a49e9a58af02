use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::models::{Layer, StudentModel};
use crate::nn::ParamGroup;

/// Progress through one stage: what is unfrozen, the best validation loss and
/// the parameters that achieved it.
#[derive(Debug, Clone, PartialEq)]
pub struct StageState {
    pub stage: usize,
    pub order: Vec<Vec<Layer>>,
    pub unfrozen: Vec<Layer>,
    pub best_val: f64,
    pub snapshot: Vec<ParamGroup>,
    pub epochs: usize,
}

impl StageState {
    /// Freezes every group of `model` and records `order` as the permitted
    /// unfreezing sequence.
    pub fn begin(stage: usize, order: Vec<Vec<Layer>>, model: &mut StudentModel, entry_val: f64) -> Self {
        for g in model.params.iter_mut() {
            g.frozen = true;
        }
        Self { stage, order, unfrozen: Vec::new(), best_val: entry_val, snapshot: model.params.clone(), epochs: 0 }
    }

    pub fn is_unfrozen(&self, layer: Layer) -> bool {
        self.unfrozen.contains(&layer)
    }

    pub fn unfrozen_names(&self) -> Vec<&'static str> {
        self.unfrozen.iter().map(|l| l.name()).collect()
    }
}

/// Clears the frozen flag of `layer`. Every step above it in the stage's
/// order must already be fully unfrozen.
pub fn unfreeze_layer(state: &mut StageState, model: &mut StudentModel, layer: Layer) -> Result<()> {
    let Some(pos) = state.order.iter().position(|step| step.contains(&layer)) else {
        bail!(Config, "{} is not part of stage {}'s unfreezing order", layer.name(), state.stage);
    };
    if state.is_unfrozen(layer) {
        bail!(Config, "{} is already unfrozen", layer.name());
    }
    for step in &state.order[..pos] {
        if let Some(missing) = step.iter().find(|l| !state.is_unfrozen(**l)) {
            bail!(Config, "cannot unfreeze {} before {}", layer.name(), missing.name());
        }
    }
    model.group_mut(layer).frozen = false;
    state.unfrozen.push(layer);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

/// Patience bookkeeping: stop after `patience` consecutive epochs without a
/// strict improvement on the best loss seen so far.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarlyStopping {
    pub best: f64,
    pub best_epoch: usize,
    pub patience: usize,
    since: usize,
}

impl EarlyStopping {
    pub fn new(initial: f64, patience: usize) -> Self {
        Self { best: initial, best_epoch: 0, patience, since: 0 }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> Verdict {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.since = 0;
            Verdict::Improved
        } else {
            self.since += 1;
            if self.since >= self.patience {
                Verdict::Stop
            } else {
                Verdict::Continue
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_stop_after_patience() {
        let mut es = EarlyStopping::new(10.0, 3);
        let losses = [5.0, 6.0, 6.0, 6.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        let mut last = 0;
        for (i, l) in losses.iter().enumerate() {
            last = i + 1;
            if es.observe(i + 1, *l) == Verdict::Stop {
                break;
            }
        }
        assert_eq!(last, 4);
        assert_eq!(es.best_epoch, 1);
        assert_eq!(es.best, 5.0);
    }
}
