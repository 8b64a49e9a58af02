//! Dense tensors, reverse-mode autodiff, Adam and the cosine schedule.

mod gradcheck;
mod graph;
pub mod kernels;
mod math;
mod optim;
mod tensor;

pub use gradcheck::{grad_check, GradCheck};
pub use graph::{Gradients, Graph, KldDirection, Var};
pub use math::{gelu, gelu_grad, normal_cdf, sigmoid};
pub use optim::{adam_step, cosine_lr, AdamState, CosineSchedule};
pub use tensor::{freeze_all, param_count, ParamGroup, ParamRef, Tensor};

pub mod init {
    //! Seeded parameter initialisers.
    use alloc::vec::Vec;
    use rand::Rng;

    use super::Tensor;

    /// Uniform Glorot initialisation for a `fan_in × fan_out` weight.
    pub fn glorot<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor {
        let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
        uniform(rng, &[fan_in, fan_out], limit)
    }

    pub fn uniform<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], limit: f64) -> Tensor {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-limit..=limit)).collect();
        Tensor::new(shape.to_vec(), data).expect("shape matches")
    }

    pub fn constant(shape: &[usize], value: f64) -> Tensor {
        let mut t = Tensor::zeros(shape);
        t.data_mut().fill(value);
        t
    }
}
