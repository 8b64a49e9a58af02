//! Distillation strategies, the stage loop with gradual unfreezing and
//! restore-best checkpoints, and training history.

mod engine;
mod history;
mod predict;
mod state;
mod strategy;

pub use engine::{labeled_loss, run_strategy, split_traces, trace_losses, DistilData, TrainConfig};
pub use history::{EpochRecord, LayerRecord, Pathway, TrainHistory};
pub use predict::{evaluate_model, evaluate_students, evaluate_teacher, predict_piece_tags, predict_word_tags, StudentSet};
pub use state::{unfreeze_layer, EarlyStopping, StageState, Verdict};
pub use strategy::{StageSpec, StrategyId, StrategySpec};
