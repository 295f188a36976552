//! Loss functions: cross-entropy / mean-squared error, plus the adversarial
//! game objective with gradients for both the defense and the attack player.
//!
//! Batch reduction is the sum over samples; CLI output reports per-sample
//! means for readability.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{AttackModel, DefenseNet};
use crate::tensor::Tensor2;

/// Base discrepancy measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseLoss {
    CrossEntropy,
    MeanSquaredError,
}

/// How the adversarial and clean terms are mixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum LossMix {
    /// Sum of losses on perturbed inputs only.
    Plain,
    /// `(1-alpha) * adversarial + alpha * clean`, retaining original-data
    /// information to counter robust overfitting.
    AlphaWeighted { alpha: f64 },
    /// TRADES-style: the adversarial term compares perturbed scores against
    /// the (detached) clean scores instead of the labels.
    Trades { alpha: f64 },
}

impl LossMix {
    fn alpha(&self) -> f64 {
        match *self {
            LossMix::Plain => 0.0,
            LossMix::AlphaWeighted { alpha } | LossMix::Trades { alpha } => alpha,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossKind {
    pub base: BaseLoss,
    pub mix: LossMix,
}

impl LossKind {
    pub fn new(base: BaseLoss, mix: LossMix) -> Result<Self> {
        let alpha = mix.alpha();
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Config(format!("alpha must be in [0, 1], got {alpha}")));
        }
        Ok(LossKind { base, mix })
    }

    pub fn cross_entropy() -> Self {
        LossKind {
            base: BaseLoss::CrossEntropy,
            mix: LossMix::Plain,
        }
    }

    pub fn mse() -> Self {
        LossKind {
            base: BaseLoss::MeanSquaredError,
            mix: LossMix::Plain,
        }
    }
}

/// A supervised target: a class index or a real-valued response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    Class(usize),
    Real(f64),
}

/// Negative log-likelihood of class `y` under softmax(logits), with the
/// gradient w.r.t. the logits. Evaluated through log-sum-exp so large logits
/// cannot underflow the probability.
pub fn cross_entropy(logits: &[f64], y: usize) -> Result<(f64, Vec<f64>)> {
    if y >= logits.len() {
        return Err(Error::Config(format!(
            "class label {y} out of range for {} logits",
            logits.len()
        )));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|z| (z - max).exp()).sum();
    let lse = max + sum.ln();
    let loss = lse - logits[y];
    let mut grad: Vec<f64> = logits.iter().map(|z| (z - max).exp() / sum).collect();
    grad[y] -= 1.0;
    Ok((loss, grad))
}

/// Cross-entropy against a probability vector instead of a hard label.
pub fn cross_entropy_soft(logits: &[f64], target_probs: &[f64]) -> Result<(f64, Vec<f64>)> {
    if target_probs.len() != logits.len() {
        return Err(Error::shape("cross_entropy_soft", logits.len(), target_probs.len()));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|z| (z - max).exp()).sum();
    let lse = max + sum.ln();
    let mut loss = 0.0;
    for (z, p) in logits.iter().zip(target_probs) {
        loss += p * (lse - z);
    }
    let pt: f64 = target_probs.iter().sum();
    let grad: Vec<f64> = logits
        .iter()
        .zip(target_probs)
        .map(|(z, p)| pt * (z - max).exp() / sum - p)
        .collect();
    Ok((loss, grad))
}

/// Squared error `||pred - target||_2^2` with gradient w.r.t. `pred`.
pub fn squared_error(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(Error::shape("squared_error", target.len(), pred.len()));
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (p, t) in pred.iter().zip(target) {
        let d = p - t;
        loss += d * d;
        grad.push(2.0 * d);
    }
    Ok((loss, grad))
}

/// Per-sample loss for the base measure, dispatching on the target kind.
pub fn loss(base: BaseLoss, output: &[f64], target: &Target) -> Result<(f64, Vec<f64>)> {
    match (base, target) {
        (BaseLoss::CrossEntropy, Target::Class(y)) => cross_entropy(output, *y),
        (BaseLoss::MeanSquaredError, Target::Real(y)) => {
            if output.len() != 1 {
                return Err(Error::shape("squared error prediction", 1usize, output.len()));
            }
            squared_error(output, &[*y])
        }
        (BaseLoss::CrossEntropy, Target::Real(_)) => Err(Error::Config(
            "cross-entropy needs a class label, got a real target".into(),
        )),
        (BaseLoss::MeanSquaredError, Target::Class(_)) => Err(Error::Config(
            "mean-squared error needs a real target, got a class label".into(),
        )),
    }
}

/// Value and both gradients of the adversarial objective on a batch.
#[derive(Debug, Clone)]
pub struct AdversarialLoss {
    /// Summed objective over the batch (adversarial + mixed clean term).
    pub total: f64,
    /// Summed clean loss over the batch, for reference.
    pub clean_total: f64,
    /// Gradient w.r.t. the defense parameter vector.
    pub grad_defense: Vec<f64>,
    /// Gradient w.r.t. the attack parameter vector.
    pub grad_attack: Vec<f64>,
}

/// Evaluate `sum_i L(f(x_i + lambda(x_i, y_i)), y_i)` (or the alpha/TRADES
/// variants) together with gradients for both parameter vectors.
///
/// The TRADES target `f(x)` is treated as a constant when differentiating,
/// so its gradient flows only through the perturbed branch.
pub fn adversarial_loss(
    kind: &LossKind,
    defense: &DefenseNet,
    attack: &AttackModel,
    x: &Tensor2,
    targets: &[Target],
) -> Result<AdversarialLoss> {
    if x.rows() == 0 {
        return Err(Error::Config("adversarial loss needs a nonempty batch".into()));
    }
    if x.rows() != targets.len() {
        return Err(Error::shape("adversarial_loss targets", x.rows(), targets.len()));
    }
    let n = x.rows();
    let d = x.cols();
    let alpha = kind.mix.alpha();
    let adv_weight = 1.0 - alpha;

    // Attack forward per sample (labels select the decoder/scaler pair).
    let mut attack_tapes = Vec::with_capacity(n);
    let mut x_adv = Tensor2::zeros(n, d);
    for r in 0..n {
        let (perturbation, tape) = attack.forward_recorded(x.row(r), &targets[r])?;
        let row = x_adv.row_mut(r);
        for i in 0..d {
            row[i] = x.row(r)[i] + perturbation[i];
        }
        attack_tapes.push(tape);
    }

    // Clean branch: always evaluated (reported and used by alpha/TRADES).
    let (clean_out, clean_tape) = defense.net().forward_recorded(x)?;
    let (adv_out, adv_tape) = defense.net().forward_recorded(&x_adv)?;

    let k = adv_out.cols();
    let mut total = 0.0;
    let mut clean_total = 0.0;
    let mut adv_upstream = Tensor2::zeros(n, k);
    let mut clean_upstream = Tensor2::zeros(n, k);

    for r in 0..n {
        let (clean_loss, clean_grad) = loss(kind.base, clean_out.row(r), &targets[r])?;
        clean_total += clean_loss;

        let (adv_loss, adv_grad) = match kind.mix {
            LossMix::Trades { .. } => match kind.base {
                BaseLoss::CrossEntropy => {
                    let probs = softmax(clean_out.row(r));
                    cross_entropy_soft(adv_out.row(r), &probs)?
                }
                BaseLoss::MeanSquaredError => squared_error(adv_out.row(r), clean_out.row(r))?,
            },
            _ => loss(kind.base, adv_out.row(r), &targets[r])?,
        };

        total += adv_weight * adv_loss + alpha * clean_loss;
        for c in 0..k {
            adv_upstream.set(r, c, adv_weight * adv_grad[c]);
            clean_upstream.set(r, c, alpha * clean_grad[c]);
        }
    }
    if !total.is_finite() {
        return Err(Error::Numeric(format!("adversarial loss is not finite: {total}")));
    }

    let (mut grad_defense, adv_input_grad) = defense.net().backward(&adv_tape, &adv_upstream)?;
    if alpha != 0.0 {
        let (clean_pg, _) = defense.net().backward(&clean_tape, &clean_upstream)?;
        for (g, c) in grad_defense.iter_mut().zip(clean_pg) {
            *g += c;
        }
    }

    // d(total)/d(lambda_r) = adversarial input gradient row, since
    // x_adv = x + lambda and the clean branch does not touch lambda.
    let mut grad_attack = vec![0.0; attack.param_len()];
    for r in 0..n {
        attack.backward_accumulate(&attack_tapes[r], adv_input_grad.row(r), &mut grad_attack)?;
    }

    Ok(AdversarialLoss {
        total,
        clean_total,
        grad_defense,
        grad_attack,
    })
}

/// Summed clean loss over a batch with the gradient w.r.t. the defense
/// parameters. The backbone of clean training and the PGD baseline.
pub fn clean_loss(
    base: BaseLoss,
    defense: &DefenseNet,
    x: &Tensor2,
    targets: &[Target],
) -> Result<(f64, Vec<f64>)> {
    if x.rows() == 0 {
        return Err(Error::Config("clean loss needs a nonempty batch".into()));
    }
    if x.rows() != targets.len() {
        return Err(Error::shape("clean_loss targets", x.rows(), targets.len()));
    }
    let (out, tape) = defense.net().forward_recorded(x)?;
    let mut total = 0.0;
    let mut upstream = Tensor2::zeros(out.rows(), out.cols());
    for r in 0..x.rows() {
        let (l, g) = loss(base, out.row(r), &targets[r])?;
        total += l;
        upstream.row_mut(r).copy_from_slice(&g);
    }
    if !total.is_finite() {
        return Err(Error::Numeric(format!("clean loss is not finite: {total}")));
    }
    let (grad, _) = defense.net().backward(&tape, &upstream)?;
    Ok((total, grad))
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}
