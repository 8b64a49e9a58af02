use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::data::BatchMode;
use crate::error::{bail, Error, Result};
use crate::losses::{LossKind, LossSet, LossWeights};
use crate::models::{HeadInput, Layer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StrategyId {
    /// Cross-entropy only, one model per language.
    D0,
    /// Cross-entropy only, one shared model.
    D0S,
    /// Joint cross-entropy and logit regression.
    D1,
    /// Joint cross-entropy, logit regression and representation loss.
    D2,
    /// Representations, then joint labels and logits.
    D31,
    /// As D31 with gradual unfreezing.
    D32,
    /// Representations, then logits, then labels.
    D41,
    /// As D41 with gradual unfreezing.
    D42,
}

impl StrategyId {
    pub const ALL: [StrategyId; 8] = [Self::D0, Self::D0S, Self::D1, Self::D2, Self::D31, Self::D32, Self::D41, Self::D42];

    pub fn name(self) -> &'static str {
        match self {
            Self::D0 => "D0",
            Self::D0S => "D0S",
            Self::D1 => "D1",
            Self::D2 => "D2",
            Self::D31 => "D31",
            Self::D32 => "D32",
            Self::D41 => "D41",
            Self::D42 => "D42",
        }
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let canon: alloc::string::String = s.chars().filter(|c| *c != '.' && *c != '-').collect::<alloc::string::String>().to_ascii_uppercase();
        match Self::ALL.into_iter().find(|id| id.name() == canon) {
            Some(id) => Ok(id),
            None => bail!(Config, "unknown strategy {:?}", s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSpec {
    pub losses: LossSet,
    pub unfreeze: bool,
}

impl StageSpec {
    pub fn new(kinds: &[LossKind], unfreeze: bool) -> Self {
        Self { losses: LossSet::of(kinds), unfreeze }
    }

    /// Data segments the stage reads.
    pub fn mode(&self) -> BatchMode {
        match (self.losses.ce, self.losses.needs_unlabeled()) {
            (true, true) => BatchMode::Mixed,
            (true, false) => BatchMode::Labeled,
            _ => BatchMode::Unlabeled,
        }
    }

    /// The stage's heads, top of the network first.
    fn heads(&self) -> Vec<Layer> {
        let mut h = Vec::new();
        if self.losses.ll {
            h.push(Layer::LogitHead);
        }
        if self.losses.ce {
            h.push(Layer::SoftmaxHead);
        }
        h
    }

    /// Unfreezing steps, top to bottom. The heads of a joint stage sit at the
    /// same depth and open together.
    pub fn unfreeze_order(&self) -> Vec<Vec<Layer>> {
        let mut order = Vec::new();
        let heads = self.heads();
        if !heads.is_empty() {
            order.push(heads);
        }
        order.push(alloc::vec![Layer::Projection]);
        order.push(alloc::vec![Layer::Trunk]);
        order.push(alloc::vec![Layer::WordEmb]);
        order
    }

    /// Everything the stage's losses reach, for end-to-end stages.
    pub fn trainable(&self, head_input: HeadInput) -> Vec<Layer> {
        let mut t = self.heads();
        if head_input == HeadInput::Projected {
            t.push(Layer::Projection);
        }
        t.push(Layer::Trunk);
        t.push(Layer::WordEmb);
        t
    }

    pub fn label(&self) -> alloc::string::String {
        let names: Vec<&str> = self.losses.kinds().into_iter().map(LossKind::name).collect();
        names.join("+")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategySpec {
    pub id: StrategyId,
    pub stages: Vec<StageSpec>,
    /// Used by stages that combine several losses; single-loss stages use
    /// unit weight.
    pub weights: LossWeights,
    pub epochs_per_layer: usize,
    pub patience: usize,
}

impl StrategySpec {
    pub fn new(id: StrategyId) -> Self {
        use LossKind::*;
        let stages = match id {
            StrategyId::D0 | StrategyId::D0S => alloc::vec![StageSpec::new(&[Ce], false)],
            StrategyId::D1 => alloc::vec![StageSpec::new(&[Ce, Ll], false)],
            StrategyId::D2 => alloc::vec![StageSpec::new(&[Ce, Ll, Rl], false)],
            StrategyId::D31 | StrategyId::D32 => {
                let u = id == StrategyId::D32;
                alloc::vec![StageSpec::new(&[Rl], false), StageSpec::new(&[Ce, Ll], u)]
            }
            StrategyId::D41 | StrategyId::D42 => {
                let u = id == StrategyId::D42;
                alloc::vec![StageSpec::new(&[Rl], false), StageSpec::new(&[Ll], u), StageSpec::new(&[Ce], u)]
            }
        };
        Self { id, stages, weights: LossWeights::default(), epochs_per_layer: 10, patience: 3 }
    }

    pub fn head_input(&self) -> HeadInput {
        match self.id {
            StrategyId::D0 | StrategyId::D0S => HeadInput::Hidden,
            _ => HeadInput::Projected,
        }
    }

    pub fn per_language(&self) -> bool {
        self.id == StrategyId::D0
    }

    pub fn needs_traces(&self) -> bool {
        self.stages.iter().any(|s| s.losses.needs_unlabeled())
    }

    pub fn stage_weights(&self, stage: &StageSpec) -> LossWeights {
        if stage.losses.kinds().len() > 1 {
            self.weights
        } else {
            LossWeights::default()
        }
    }

    /// Checks the stage list against the strategy's definition.
    pub fn validate(&self) -> Result<()> {
        let expected = Self::new(self.id);
        if self.stages != expected.stages {
            bail!(Config, "{} stages do not match the strategy definition", self.id);
        }
        if self.patience == 0 {
            bail!(Config, "patience must be at least 1");
        }
        for stage in &self.stages {
            if stage.losses.is_empty() {
                bail!(Config, "{} has a stage without losses", self.id);
            }
            if stage.unfreeze && stage.losses.rl {
                bail!(Config, "representation stages train end-to-end");
            }
            if stage.losses.kinds().len() > 1 {
                self.weights.validate()?;
                if stage.losses.kinds().iter().all(|k| self.weights.weight(*k) == 0.0) {
                    bail!(Config, "{} stage {} has zero weight on every loss", self.id, stage.label());
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_shapes() {
        for id in StrategyId::ALL {
            let s = StrategySpec::new(id);
            s.validate().unwrap();
            let unfreeze = s.stages.iter().any(|st| st.unfreeze);
            assert_eq!(unfreeze, matches!(id, StrategyId::D32 | StrategyId::D42), "{id}");
        }
        let d42 = StrategySpec::new(StrategyId::D42);
        assert_eq!(d42.stages.iter().map(StageSpec::label).collect::<Vec<_>>(), ["RL", "LL", "CE"]);
    }

    #[test]
    fn unfreeze_orders() {
        let ll = StageSpec::new(&[LossKind::Ll], true).unfreeze_order();
        assert_eq!(ll, [alloc::vec![Layer::LogitHead], alloc::vec![Layer::Projection], alloc::vec![Layer::Trunk], alloc::vec![Layer::WordEmb]]);
        let ce = StageSpec::new(&[LossKind::Ce], true).unfreeze_order();
        assert_eq!(ce[0], [Layer::SoftmaxHead]);
        let joint = StageSpec::new(&[LossKind::Ce, LossKind::Ll], true).unfreeze_order();
        assert_eq!(joint[0], [Layer::LogitHead, Layer::SoftmaxHead]);
        assert_eq!(joint.len(), 4);
    }

    #[test]
    fn parses_names() {
        assert_eq!("D4.2".parse::<StrategyId>().unwrap(), StrategyId::D42);
        assert_eq!("d0s".parse::<StrategyId>().unwrap(), StrategyId::D0S);
        assert!("D5".parse::<StrategyId>().is_err());
    }

    #[test]
    fn inconsistent_spec_rejected() {
        let mut s = StrategySpec::new(StrategyId::D41);
        s.stages.swap(0, 1);
        assert!(matches!(s.validate(), Err(Error::Config(_))));
        let mut s = StrategySpec::new(StrategyId::D31);
        s.stages[1].unfreeze = true;
        assert!(s.validate().is_err());
    }
}
