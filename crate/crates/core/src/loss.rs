//! Classification and masked-regression losses.
//!
//! The training objective is `bce + masked smooth-L1`: the per-sample
//! regression term is multiplied by the puck label, so frames without a
//! visible puck contribute nothing to the coordinate head.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Graph, Var};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_labels(op: &'static str, labels: &[f64]) -> Result<()> {
    if let Some(bad) = labels.iter().find(|c| **c != 0.0 && **c != 1.0) {
        return Err(Error::contract(op, format!("labels must be 0 or 1, got {bad}")));
    }
    Ok(())
}

/// Mean binary cross-entropy on raw logits, in the overflow-free form
/// `max(l,0) − l·c + ln(1 + e^{−|l|})`.
pub fn bce_with_logits(logits: &[f64], labels: &[f64]) -> Result<f64> {
    if logits.len() != labels.len() {
        return Err(Error::shape(
            "bce_with_logits",
            format!("{} logits vs {} labels", logits.len(), labels.len()),
        ));
    }
    if logits.is_empty() {
        return Err(Error::contract("bce_with_logits", "empty batch"));
    }
    check_labels("bce_with_logits", labels)?;
    let total: f64 = logits
        .iter()
        .zip(labels)
        .map(|(l, c)| l.max(0.0) - l * c + (-l.abs()).exp().ln_1p())
        .sum();
    Ok(total / logits.len() as f64)
}

/// Smooth-L1 of one residual.
pub fn smooth_l1_term(d: f64) -> f64 {
    let a = d.abs();
    if a < 1.0 {
        0.5 * d * d
    } else {
        a - 0.5
    }
}

/// Derivative of [`smooth_l1_term`]; magnitude never exceeds 1.
pub fn smooth_l1_slope(d: f64) -> f64 {
    if d.abs() < 1.0 {
        d
    } else {
        d.signum()
    }
}

/// Elementwise smooth-L1 terms and their mean over all components.
pub fn smooth_l1(s: &[f64], y: &[f64]) -> Result<(Vec<f64>, f64)> {
    if s.len() != y.len() {
        return Err(Error::shape("smooth_l1", format!("{} vs {} values", s.len(), y.len())));
    }
    if s.is_empty() {
        return Err(Error::contract("smooth_l1", "empty input"));
    }
    let z: Vec<f64> = s.iter().zip(y).map(|(a, b)| smooth_l1_term(a - b)).collect();
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    Ok((z, mean))
}

/// `(1/N) Σ_i mask_i · mean_j smoothL1(pred_ij − target_ij)` where `pred` is
/// `N` rows of `D = pred.len()/N` components.
pub fn masked_smooth_l1(pred: &[f64], target: &[f64], mask: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::shape(
            "masked_smooth_l1",
            format!("{} predictions vs {} targets", pred.len(), target.len()),
        ));
    }
    let n = mask.len();
    if n == 0 || pred.len() % n != 0 {
        return Err(Error::shape(
            "masked_smooth_l1",
            format!("{} coordinates do not split into {n} samples", pred.len()),
        ));
    }
    let dim = pred.len() / n;
    let mut total = 0.0;
    for (i, m) in mask.iter().enumerate() {
        let row: f64 = (0..dim)
            .map(|j| smooth_l1_term(pred[i * dim + j] - target[i * dim + j]))
            .sum();
        total += m * (row / dim as f64);
    }
    Ok(total / n as f64)
}

/// Values of the combined objective for one batch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_class: f64,
    pub l_reg: f64,
    pub total: f64,
    pub n: usize,
}

impl LossReport {
    fn new(l_class: f64, l_reg: f64, n: usize) -> Self {
        Self {
            l_class,
            l_reg,
            total: l_class + l_reg,
            n,
        }
    }

    /// Sample-weighted mean of several batch reports.
    pub fn merge(reports: &[LossReport]) -> Option<LossReport> {
        let n: usize = reports.iter().map(|r| r.n).sum();
        if n == 0 {
            return None;
        }
        let w = |f: fn(&LossReport) -> f64| reports.iter().map(|r| f(r) * r.n as f64).sum::<f64>() / n as f64;
        Some(LossReport::new(w(|r| r.l_class), w(|r| r.l_reg), n))
    }
}

/// Classification loss plus label-masked regression loss.
///
/// `coords` and `targets` hold `N` `(x, y)` pairs; target pairs of label-0
/// samples are never read into the result.
pub fn combined_masked_loss(logits: &[f64], labels: &[f64], coords: &[f64], targets: &[f64]) -> Result<LossReport> {
    check_batch(logits, labels, coords, targets)?;
    let l_class = bce_with_logits(logits, labels)?;
    let l_reg = masked_smooth_l1(coords, targets, labels)?;
    Ok(LossReport::new(l_class, l_reg, labels.len()))
}

/// Differentiable form of [`combined_masked_loss`]; returns the scalar total.
pub fn combined_masked_loss_var(
    g: &mut Graph,
    logits: Var,
    coords: Var,
    labels: &[f64],
    targets: &[f64],
) -> Result<(Var, LossReport)> {
    check_batch(g.value(logits).data(), labels, g.value(coords).data(), targets)?;
    let class = g.bce_with_logits(logits, labels)?;
    let reg = g.masked_smooth_l1(coords, targets, labels)?;
    let total = g.add(class, reg)?;
    let report = LossReport::new(g.value(class).item()?, g.value(reg).item()?, labels.len());
    Ok((total, report))
}

fn check_batch(logits: &[f64], labels: &[f64], coords: &[f64], targets: &[f64]) -> Result<()> {
    let n = labels.len();
    if logits.len() != n || coords.len() != 2 * n || targets.len() != 2 * n {
        return Err(Error::shape(
            "combined_masked_loss",
            format!(
                "batch of {n} labels needs {n} logits and {} coordinates; got {} logits, {} predicted, {} target",
                2 * n,
                logits.len(),
                coords.len(),
                targets.len()
            ),
        ));
    }
    Ok(())
}
