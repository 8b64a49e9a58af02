use alloc::format;
use alloc::string::String;

use super::graph::{Graph, Var};
use super::tensor::{ParamGroup, ParamRef};
use crate::error::{bail, Result};

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// `group[tensor][index]` of the worst entry.
    pub worst: Option<String>,
    pub entries: usize,
}

/// Compares reverse-mode gradients with central differences for every entry
/// of every unfrozen tensor. The error per entry is
/// `|analytic − numeric| / max(1, |numeric|)`.
pub fn grad_check<F>(params: &mut [ParamGroup], eps: f64, mut loss_fn: F) -> Result<GradCheck>
where
    F: FnMut(&mut Graph<'_>) -> Result<Var>,
{
    if !(eps > 0.0) {
        bail!(Config, "grad_check step must be positive");
    }
    let analytic = {
        let mut g = Graph::new(params);
        let loss = loss_fn(&mut g)?;
        g.backward(loss)?
    };
    let eval = |params: &[ParamGroup], loss_fn: &mut F| -> Result<f64> {
        let mut g = Graph::inference(params);
        let loss = loss_fn(&mut g)?;
        Ok(g.scalar(loss))
    };
    let mut report = GradCheck { max_rel_error: 0.0, worst: None, entries: 0 };
    for gi in 0..params.len() {
        if params[gi].frozen {
            continue;
        }
        for ti in 0..params[gi].tensors.len() {
            let r = ParamRef::new(gi, ti);
            for i in 0..params[gi].tensors[ti].len() {
                let orig = params[gi].tensors[ti].data()[i];
                params[gi].tensors[ti].data_mut()[i] = orig + eps;
                let plus = eval(params, &mut loss_fn)?;
                params[gi].tensors[ti].data_mut()[i] = orig - eps;
                let minus = eval(params, &mut loss_fn)?;
                params[gi].tensors[ti].data_mut()[i] = orig;
                if !plus.is_finite() || !minus.is_finite() {
                    bail!(NonFinite, "loss not finite when perturbing {}[{}][{}]", params[gi].name, ti, i);
                }
                let numeric = (plus - minus) / (2.0 * eps);
                let a = analytic.get(r).map_or(0.0, |g| g[i]);
                let err = (a - numeric).abs() / numeric.abs().max(1.0);
                report.entries += 1;
                if err > report.max_rel_error || report.worst.is_none() {
                    if err >= report.max_rel_error {
                        report.max_rel_error = err;
                        report.worst = Some(format!("{}[{}][{}]", params[gi].name, ti, i));
                    }
                }
            }
        }
    }
    Ok(report)
}
