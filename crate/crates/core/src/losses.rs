//! Cross-entropy, logit regression, representation divergence and their
//! weighted combination, as plain functions and as graph terms.

use alloc::vec::Vec;

use crate::data::Batch;
use crate::error::{bail, Result};
use crate::models::StudentOutputs;
use crate::nn::{kernels, Graph, KldDirection, Tensor, Var};

/// Floor applied to probabilities before taking logs.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LossKind {
    /// Cross-entropy on labeled data.
    Ce,
    /// Logit regression against teacher logits.
    Ll,
    /// Representation divergence against a teacher layer.
    Rl,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Ce => "CE",
            LossKind::Ll => "LL",
            LossKind::Rl => "RL",
        }
    }
}

/// A subset of {CE, LL, RL}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct LossSet {
    pub ce: bool,
    pub ll: bool,
    pub rl: bool,
}

impl LossSet {
    pub const CE: LossSet = LossSet { ce: true, ll: false, rl: false };
    pub const LL: LossSet = LossSet { ce: false, ll: true, rl: false };
    pub const RL: LossSet = LossSet { ce: false, ll: false, rl: true };

    pub fn of(kinds: &[LossKind]) -> Self {
        let mut s = Self::default();
        for k in kinds {
            match k {
                LossKind::Ce => s.ce = true,
                LossKind::Ll => s.ll = true,
                LossKind::Rl => s.rl = true,
            }
        }
        s
    }

    pub fn contains(&self, k: LossKind) -> bool {
        match k {
            LossKind::Ce => self.ce,
            LossKind::Ll => self.ll,
            LossKind::Rl => self.rl,
        }
    }

    pub fn kinds(&self) -> Vec<LossKind> {
        [LossKind::Ce, LossKind::Ll, LossKind::Rl].into_iter().filter(|k| self.contains(*k)).collect()
    }

    pub fn is_empty(&self) -> bool {
        !(self.ce || self.ll || self.rl)
    }

    pub fn needs_unlabeled(&self) -> bool {
        self.ll || self.rl
    }
}

/// Weights of the joint objective `α·CE + β·RL + γ·LL`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0, gamma: 1.0 }
    }
}

impl LossWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let w = Self { alpha, beta, gamma };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.gamma];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            bail!(Config, "loss weights must be finite and non-negative: {:?}", self);
        }
        if all.iter().all(|w| *w == 0.0) {
            bail!(Config, "at least one loss weight must be positive");
        }
        Ok(())
    }

    pub fn weight(&self, k: LossKind) -> f64 {
        match k {
            LossKind::Ce => self.alpha,
            LossKind::Rl => self.beta,
            LossKind::Ll => self.gamma,
        }
    }
}

fn check_same(a: &Tensor, b: &Tensor, mask: &[bool]) -> Result<()> {
    if a.shape() != b.shape() {
        bail!(Shape, "shapes {:?} and {:?} differ", a.shape(), b.shape());
    }
    if mask.len() != a.rows() {
        bail!(Shape, "mask has {} entries for {} rows", mask.len(), a.rows());
    }
    Ok(())
}

fn masked_mean(mask: &[bool], mut per_row: impl FnMut(usize) -> f64) -> f64 {
    let n = mask.iter().filter(|m| **m).count();
    if n == 0 {
        return 0.0;
    }
    let total: f64 = mask.iter().enumerate().filter(|(_, m)| **m).map(|(r, _)| per_row(r)).sum();
    total / n as f64
}

/// Cross-entropy with diagnostics: the loss and the number of masked-in rows
/// whose true-class probability fell below [`LOG_FLOOR`].
pub fn ce_loss_with_diagnostics(p: &Tensor, y: &Tensor, mask: &[bool]) -> Result<(f64, usize)> {
    check_same(p, y, mask)?;
    let mut clamped = 0;
    let loss = masked_mean(mask, |r| {
        let mut s = 0.0;
        for (pc, yc) in p.row(r).iter().zip(y.row(r)) {
            if *yc != 0.0 {
                if *pc < LOG_FLOOR {
                    clamped += 1;
                }
                s -= yc * libm::log(pc.max(LOG_FLOOR));
            }
        }
        s
    });
    Ok((loss, clamped))
}

/// `−mean_k Σ_c y_kc log p_kc` over masked-in rows; 0 when nothing is masked in.
pub fn ce_loss(p: &Tensor, y: &Tensor, mask: &[bool]) -> Result<f64> {
    Ok(ce_loss_with_diagnostics(p, y, mask)?.0)
}

/// `mean_k ½‖r_k − t_k‖²`.
pub fn logit_loss(r: &Tensor, t: &Tensor, mask: &[bool]) -> Result<f64> {
    check_same(r, t, mask)?;
    Ok(masked_mean(mask, |k| r.row(k).iter().zip(t.row(k)).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum()))
}

/// Mean KL divergence between the feature softmaxes of teacher and student
/// representations, teacher as reference by default.
pub fn repr_loss(student: &Tensor, teacher: &Tensor, mask: &[bool]) -> Result<f64> {
    repr_loss_dir(student, teacher, mask, KldDirection::TeacherToStudent)
}

pub fn repr_loss_dir(student: &Tensor, teacher: &Tensor, mask: &[bool], dir: KldDirection) -> Result<f64> {
    check_same(student, teacher, mask)?;
    let d = student.cols();
    let mut ps = alloc::vec![0.0; d];
    let mut pt = alloc::vec![0.0; d];
    Ok(masked_mean(mask, |k| {
        let ls = kernels::softmax_into(student.row(k), &mut ps);
        let lt = kernels::softmax_into(teacher.row(k), &mut pt);
        let (zs, zt) = (student.row(k), teacher.row(k));
        (0..d)
            .map(|j| {
                let (log_s, log_t) = (zs[j] - ls, zt[j] - lt);
                match dir {
                    KldDirection::TeacherToStudent => pt[j] * (log_t - log_s),
                    KldDirection::StudentToTeacher => ps[j] * (log_s - log_t),
                }
            })
            .sum()
    }))
}

/// Inputs for the plain joint objective. The labeled part carries student
/// probabilities and one-hot targets, the unlabeled part the student's
/// projected states and logit scores with the matching teacher traces.
#[derive(Debug, Clone, Copy, Default)]
pub struct JointParts<'a> {
    pub labeled: Option<(&'a Tensor, &'a Tensor, &'a [bool])>,
    pub logits: Option<(&'a Tensor, &'a Tensor, &'a [bool])>,
    pub reps: Option<(&'a Tensor, &'a Tensor, &'a [bool])>,
}

/// `α·CE + β·RL + γ·LL` over the enabled terms.
pub fn joint_loss(parts: &JointParts, weights: LossWeights, enabled: LossSet) -> Result<f64> {
    weights.validate()?;
    let mut total = 0.0;
    if enabled.ce {
        let Some((p, y, m)) = parts.labeled else { bail!(Config, "CE enabled without a labeled batch") };
        total += weights.alpha * ce_loss(p, y, m)?;
    }
    if enabled.rl {
        let Some((s, t, m)) = parts.reps else { bail!(Config, "RL enabled without teacher representations") };
        total += weights.beta * repr_loss(s, t, m)?;
    }
    if enabled.ll {
        let Some((r, t, m)) = parts.logits else { bail!(Config, "LL enabled without teacher logits") };
        total += weights.gamma * logit_loss(r, t, m)?;
    }
    Ok(total)
}

/// Scalar values of the individual terms of a graph objective.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTerms {
    pub ce: Option<f64>,
    pub ll: Option<f64>,
    pub rl: Option<f64>,
    pub total: f64,
}

/// A student forward pass together with the batch it ran on.
#[derive(Debug, Clone, Copy)]
pub struct Pass<'a> {
    pub out: &'a StudentOutputs,
    pub batch: &'a Batch,
}

/// Builds `α·CE + β·RL + γ·LL` on the graph. Terms with zero weight are left
/// out of the graph entirely.
pub fn joint_loss_graph(
    g: &mut Graph,
    labeled: Option<Pass>,
    unlabeled: Option<Pass>,
    weights: LossWeights,
    enabled: LossSet,
    dir: KldDirection,
) -> Result<(Var, LossTerms)> {
    weights.validate()?;
    if enabled.is_empty() {
        bail!(Config, "no loss enabled");
    }
    let mut terms = Vec::new();
    let mut out = LossTerms::default();
    if enabled.ce {
        let Some(pass) = labeled else { bail!(Config, "CE enabled without a labeled batch") };
        let Some(targets) = pass.batch.targets.clone() else { bail!(Config, "CE enabled on an unlabeled batch") };
        if weights.alpha > 0.0 {
            let v = g.softmax_cross_entropy(pass.out.class_logits, targets, &pass.out.mask);
            out.ce = Some(g.scalar(v));
            terms.push((v, weights.alpha));
        }
    }
    if enabled.needs_unlabeled() && unlabeled.is_none() {
        bail!(Config, "{} enabled without an unlabeled batch", if enabled.rl { "RL" } else { "LL" });
    }
    if enabled.rl && weights.beta > 0.0 {
        let pass = unlabeled.expect("checked");
        let (Some(z), Some(t)) = (pass.out.projected, pass.batch.teacher_reps.as_ref()) else {
            bail!(Config, "RL needs a projection head and teacher representations")
        };
        if g.dims(z).1 * pass.batch.rows() != t.len() {
            bail!(Shape, "teacher representations do not match the projection width");
        }
        let v = g.softmax_kld(z, t, &pass.out.mask, dir);
        out.rl = Some(g.scalar(v));
        terms.push((v, weights.beta));
    }
    if enabled.ll && weights.gamma > 0.0 {
        let pass = unlabeled.expect("checked");
        let (Some(r), Some(t)) = (pass.out.logit_scores, pass.batch.teacher_logits.clone()) else {
            bail!(Config, "LL needs a logit head and teacher logits")
        };
        if g.dims(r).1 * pass.batch.rows() != t.len() {
            bail!(Shape, "teacher logits do not match the class count");
        }
        let v = g.half_squared_error(r, t, &pass.out.mask);
        out.ll = Some(g.scalar(v));
        terms.push((v, weights.gamma));
    }
    if terms.is_empty() {
        bail!(Config, "every enabled loss has zero weight");
    }
    let total = g.weighted_sum(terms);
    out.total = g.scalar(total);
    Ok((total, out))
}
