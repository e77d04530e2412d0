//! Class-weighted binary cross-entropy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::sigmoid;

/// Probabilities are clamped to `[P_MIN, 1 - P_MIN]` before taking logs.
pub const P_MIN: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    /// Multiplier on the positive-class term: the negative prevalence.
    pub w_plus: f64,
    /// Multiplier on the negative-class term: the positive prevalence.
    pub w_minus: f64,
}

impl ClassWeights {
    pub const BALANCED: ClassWeights = ClassWeights {
        w_plus: 0.5,
        w_minus: 0.5,
    };
}

pub fn compute_class_weights(n_pos: usize, n_neg: usize) -> Result<ClassWeights> {
    let n = n_pos + n_neg;
    if n == 0 {
        return Err(Error::InvalidInput("class weights need at least one sample".into()));
    }
    if n_pos == 0 || n_neg == 0 {
        log::warn!("single-class training set ({n_pos} positive, {n_neg} negative)");
    }
    let w_plus = n_neg as f64 / n as f64;
    Ok(ClassWeights {
        w_plus,
        w_minus: 1.0 - w_plus,
    })
}

fn check_label(y: u8) -> Result<()> {
    if y > 1 {
        return Err(Error::InvalidInput(format!("label must be 0 or 1, got {y}")));
    }
    Ok(())
}

/// Loss of one prediction.
pub fn weighted_bce(p: f64, y: u8, w: ClassWeights) -> Result<f64> {
    check_label(y)?;
    let p = p.clamp(P_MIN, 1.0 - P_MIN);
    Ok(if y == 1 {
        -w.w_plus * p.ln()
    } else {
        -w.w_minus * (1.0 - p).ln()
    })
}

/// Mean loss over a batch of logits and its gradient with respect to each
/// logit. Where the clamp is active the gradient is zero.
pub fn batch_loss(logits: &[f64], labels: &[u8], w: ClassWeights) -> Result<(f64, Vec<f64>)> {
    if logits.len() != labels.len() || logits.is_empty() {
        return Err(Error::InvalidInput(format!(
            "batch of {} logits with {} labels",
            logits.len(),
            labels.len()
        )));
    }
    let n = logits.len() as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &y) in logits.iter().zip(labels) {
        let p = sigmoid(z);
        total += weighted_bce(p, y, w)?;
        let inside = p > P_MIN && p < 1.0 - P_MIN;
        let g = match (inside, y) {
            (false, _) => 0.0,
            (true, 1) => w.w_plus * (p - 1.0),
            (true, _) => w.w_minus * p,
        };
        grad.push(g / n);
    }
    Ok((total / n, grad))
}
