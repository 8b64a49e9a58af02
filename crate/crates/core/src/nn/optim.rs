use alloc::vec::Vec;
use core::f64::consts::PI;

use super::tensor::ParamGroup;
use crate::error::{bail, Result};

/// Adam moments for every tensor of a parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Vec<Vec<f64>>>,
    second: Vec<Vec<Vec<f64>>>,
}

impl AdamState {
    pub fn new(params: &[ParamGroup]) -> Self {
        Self::with_hyper(params, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(params: &[ParamGroup], beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = || -> Vec<Vec<Vec<f64>>> {
            params.iter().map(|g| g.tensors.iter().map(|t| alloc::vec![0.0; t.len()]).collect()).collect()
        };
        Self { beta1, beta2, eps, step: 0, first: zeros(), second: zeros() }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update of every unfrozen tensor. Gradients are
/// consumed; frozen groups are left untouched.
pub fn adam_step(params: &mut [ParamGroup], state: &mut AdamState, lr: f64) -> Result<()> {
    if state.first.len() != params.len() {
        bail!(Config, "optimizer state built for {} groups, got {}", state.first.len(), params.len());
    }
    for group in params.iter() {
        if group.frozen {
            continue;
        }
        for (ti, t) in group.tensors.iter().enumerate() {
            if t.grad().is_none() {
                bail!(Config, "missing gradient for unfrozen tensor {}[{}]", group.name, ti);
            }
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - libm::pow(state.beta1, t);
    let c2 = 1.0 - libm::pow(state.beta2, t);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    for (gi, group) in params.iter_mut().enumerate() {
        if group.frozen {
            continue;
        }
        for (ti, tensor) in group.tensors.iter_mut().enumerate() {
            let grad = tensor.take_grad().expect("checked above");
            let m = &mut state.first[gi][ti];
            let v = &mut state.second[gi][ti];
            for (((w, g), mi), vi) in tensor.data_mut().iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (1.0 - b1) * g;
                *vi = b2 * *vi + (1.0 - b2) * g * g;
                let mh = *mi / c1;
                let vh = *vi / c2;
                *w -= lr * mh / (libm::sqrt(vh) + eps);
            }
        }
    }
    Ok(())
}

/// Cosine annealing from `lr_high` to `lr_low` over `horizon` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineSchedule {
    lr_high: f64,
    lr_low: f64,
    horizon: u64,
}

impl CosineSchedule {
    pub fn new(lr_high: f64, lr_low: f64, horizon: u64) -> Result<Self> {
        if !(lr_low > 0.0 && lr_high >= lr_low) {
            bail!(Config, "cosine schedule needs lr_high >= lr_low > 0, got {} / {}", lr_high, lr_low);
        }
        if horizon == 0 {
            bail!(Config, "cosine schedule horizon must be positive");
        }
        Ok(Self { lr_high, lr_low, horizon })
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn lr_high(&self) -> f64 {
        self.lr_high
    }

    pub fn lr_low(&self) -> f64 {
        self.lr_low
    }
}

/// Learning rate at step `t`; steps past the horizon stay at `lr_low`.
pub fn cosine_lr(t: u64, schedule: &CosineSchedule) -> f64 {
    if t >= schedule.horizon {
        return schedule.lr_low;
    }
    let frac = t as f64 / schedule.horizon as f64;
    let lr = schedule.lr_low + 0.5 * (schedule.lr_high - schedule.lr_low) * (1.0 + libm::cos(PI * frac));
    lr.clamp(schedule.lr_low, schedule.lr_high)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;
    use alloc::vec;

    fn scalar_param(w: f64) -> Vec<ParamGroup> {
        vec![ParamGroup::new("w", vec![Tensor::new(vec![1], vec![w]).unwrap()])]
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar_param(0.0);
        let mut st = AdamState::new(&p);
        p[0].tensors[0].set_grad(vec![1.0]).unwrap();
        adam_step(&mut p, &mut st, 0.1).unwrap();
        let w = p[0].tensors[0].data()[0];
        assert!((w + 0.1).abs() < 1e-8, "{w}");
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn second_identical_step_is_not_larger() {
        let mut p = scalar_param(0.0);
        let mut st = AdamState::new(&p);
        p[0].tensors[0].set_grad(vec![1.0]).unwrap();
        adam_step(&mut p, &mut st, 0.1).unwrap();
        let w1 = p[0].tensors[0].data()[0];
        p[0].tensors[0].set_grad(vec![1.0]).unwrap();
        adam_step(&mut p, &mut st, 0.1).unwrap();
        let w2 = p[0].tensors[0].data()[0];
        let (d1, d2) = (w1.abs(), (w2 - w1).abs());
        assert!(d2 <= d1 * 1.1 && d2 >= d1 * 0.9, "{d1} {d2}");
    }

    #[test]
    fn frozen_groups_untouched() {
        let mut p = scalar_param(0.25);
        p[0].frozen = true;
        let before = p.clone();
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &mut st, 0.1).unwrap();
        assert_eq!(p[0].tensors[0].data()[0].to_bits(), before[0].tensors[0].data()[0].to_bits());
    }

    #[test]
    fn missing_gradient_is_a_config_error() {
        let mut p = scalar_param(0.0);
        let mut st = AdamState::new(&p);
        assert!(matches!(adam_step(&mut p, &mut st, 0.1), Err(crate::Error::Config(_))));
    }

    #[test]
    fn cosine_endpoints_and_midpoint() {
        let s = CosineSchedule::new(0.001, 1e-8, 100).unwrap();
        assert_eq!(cosine_lr(0, &s), 0.001);
        assert_eq!(cosine_lr(100, &s), 1e-8);
        assert!((cosine_lr(50, &s) - (0.001 + 1e-8) / 2.0).abs() < 1e-15);
        assert_eq!(cosine_lr(500, &s), 1e-8);
    }

    #[test]
    fn cosine_rejects_bad_bounds() {
        assert!(CosineSchedule::new(1e-8, 1e-3, 10).is_err());
        assert!(CosineSchedule::new(1e-3, 0.0, 10).is_err());
        assert!(CosineSchedule::new(1e-3, 1e-8, 0).is_err());
    }
}
