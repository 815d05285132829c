//! Recommendation cross-entropy, the contrastive term, and the joint loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-step loss components. `joint = rec + rec_aug + lambda * contrastive`,
/// with absent terms contributing nothing (ablations).
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub rec: f64,
    pub rec_aug: Option<f64>,
    pub contrastive: Option<f64>,
    pub joint: f64,
    pub lambda: f64,
    pub tau: f64,
}

impl LossBreakdown {
    /// The joint value must equal the weighted sum of its parts.
    pub fn identity_holds(&self) -> bool {
        (self.joint - joint_loss(self.rec, self.rec_aug, self.contrastive, self.lambda)).abs()
            < 1e-9
    }
}

/// Which form the contrastive term takes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContrastiveVariant {
    /// Single negative in the denominator; collapses to
    /// `(sim(h, neg) - sim(h, pos)) / tau`. The default.
    #[default]
    Ratio,
    /// Standard two-term softmax denominator (positive + negative).
    InfoNce,
}

fn check_finite(scores: &[f64]) -> Result<()> {
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numerical("non-finite score encountered".into()));
    }
    Ok(())
}

/// Negative log-softmax of the target's score, computed with max
/// subtraction. `scores[i]` scores item `i + 1`.
pub fn rec_loss(scores: &[f64], target: u32) -> Result<f64> {
    check_finite(scores)?;
    let idx = target_position(scores, target)?;
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum_exp: f64 = scores.iter().map(|&s| (s - max).exp()).sum();
    Ok(max + sum_exp.ln() - scores[idx])
}

/// Loss plus gradient w.r.t. the scores (`softmax - onehot(target)`).
pub fn rec_loss_grad(scores: &[f64], target: u32) -> Result<(f64, Vec<f64>)> {
    check_finite(scores)?;
    let idx = target_position(scores, target)?;
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let sum_exp: f64 = exps.iter().sum();
    let loss = max + sum_exp.ln() - scores[idx];
    let mut grad: Vec<f64> = exps.iter().map(|&e| e / sum_exp).collect();
    grad[idx] -= 1.0;
    Ok((loss, grad))
}

fn target_position(scores: &[f64], target: u32) -> Result<usize> {
    if target == 0 || target as usize > scores.len() {
        return Err(Error::Index(format!(
            "target item {target} outside 1..={}",
            scores.len()
        )));
    }
    Ok(target as usize - 1)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Contrastive loss over one (anchor, positive view, negative view) triple
/// with inner-product similarity. The single-negative ratio collapses
/// analytically to `(sim(h, h_neg) - sim(h, h_pos)) / tau`, which is the
/// stable form computed here.
pub fn contrastive_loss(h: &[f64], h_pos: &[f64], h_neg: &[f64], tau: f64) -> Result<f64> {
    if tau <= 0.0 {
        return Err(Error::Config(format!("temperature must be positive, got {tau}")));
    }
    Ok((dot(h, h_neg) - dot(h, h_pos)) / tau)
}

/// Two-term softmax variant, `-log(exp(sp/tau) / (exp(sp/tau) + exp(sn/tau)))`,
/// evaluated as a stable log1p.
pub fn contrastive_loss_infonce(h: &[f64], h_pos: &[f64], h_neg: &[f64], tau: f64) -> Result<f64> {
    if tau <= 0.0 {
        return Err(Error::Config(format!("temperature must be positive, got {tau}")));
    }
    let x = (dot(h, h_neg) - dot(h, h_pos)) / tau;
    Ok(if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    })
}

/// Loss and gradients w.r.t. all three representations.
#[allow(clippy::type_complexity)]
pub fn contrastive_grads(
    variant: ContrastiveVariant,
    h: &[f64],
    h_pos: &[f64],
    h_neg: &[f64],
    tau: f64,
) -> Result<(f64, Vec<f64>, Vec<f64>, Vec<f64>)> {
    let loss = match variant {
        ContrastiveVariant::Ratio => contrastive_loss(h, h_pos, h_neg, tau)?,
        ContrastiveVariant::InfoNce => contrastive_loss_infonce(h, h_pos, h_neg, tau)?,
    };
    // d loss / d sim_pos and d loss / d sim_neg.
    let (dsp, dsn) = match variant {
        ContrastiveVariant::Ratio => (-1.0 / tau, 1.0 / tau),
        ContrastiveVariant::InfoNce => {
            let x = (dot(h, h_neg) - dot(h, h_pos)) / tau;
            let sigma = 1.0 / (1.0 + (-x).exp());
            (-sigma / tau, sigma / tau)
        }
    };
    let dh: Vec<f64> = h_pos
        .iter()
        .zip(h_neg)
        .map(|(p, n)| dsp * p + dsn * n)
        .collect();
    let dpos: Vec<f64> = h.iter().map(|v| dsp * v).collect();
    let dneg: Vec<f64> = h.iter().map(|v| dsn * v).collect();
    Ok((loss, dh, dpos, dneg))
}

/// Weighted sum of the loss components; absent components are omitted.
pub fn joint_loss(rec: f64, rec_aug: Option<f64>, contrastive: Option<f64>, lambda: f64) -> f64 {
    rec + rec_aug.unwrap_or(0.0) + lambda * contrastive.unwrap_or(0.0)
}
