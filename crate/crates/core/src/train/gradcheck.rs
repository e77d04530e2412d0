//! Finite-difference verification of the analytic loss gradient.

use rayon::prelude::*;

use super::loss::{batch_loss, ClassWeights};
use crate::error::{Error, Result};
use crate::model::{ClassifierModel, Tensor};

/// Gradients smaller than this are compared absolutely rather than relatively.
pub const GRAD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `name[index]` of the worst scalar.
    pub worst: String,
    pub checked: usize,
}

/// `|a - n| / max(|a|, |n|, GRAD_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

fn loss_at(model: &ClassifierModel, batch: &Tensor, labels: &[u8], w: ClassWeights) -> Result<f64> {
    let (z, _) = model.clone().forward_train(batch.clone())?;
    Ok(batch_loss(&z, labels, w)?.0)
}

/// Compares the backward-pass gradient of the mean weighted loss with
/// central differences for every scalar parameter.
pub fn loss_gradient_check(
    model: &ClassifierModel,
    batch: &Tensor,
    labels: &[u8],
    w: ClassWeights,
    step: f64,
) -> Result<GradCheckReport> {
    let mut m = model.clone();
    m.zero_grad();
    let (z, cache) = m.forward_train(batch.clone())?;
    let (_, dz) = batch_loss(&z, labels, w)?;
    m.backward(cache, &dz);

    let mut params = Vec::new();
    m.visit_params(&mut |name, p| params.push((name, p.grad.clone())));
    for (name, g) in &params {
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::Training(format!("non-finite gradient at {name}[{i}]")));
        }
    }

    let per_param = params
        .par_iter()
        .map(|(name, grads)| -> Result<(f64, String)> {
            let mut probe = model.clone();
            let mut worst = (0.0, String::new());
            for (i, &a) in grads.iter().enumerate() {
                nudge(&mut probe, name, i, step);
                let plus = loss_at(&probe, batch, labels, w)?;
                nudge(&mut probe, name, i, -2.0 * step);
                let minus = loss_at(&probe, batch, labels, w)?;
                nudge(&mut probe, name, i, step);
                let numeric = (plus - minus) / (2.0 * step);
                if !numeric.is_finite() {
                    return Err(Error::Training(format!("non-finite numeric gradient at {name}[{i}]")));
                }
                let e = relative_error(a, numeric);
                if e > worst.0 || worst.1.is_empty() {
                    worst = (e, format!("{name}[{i}]"));
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<_>>>()?;

    let checked = params.iter().map(|(_, g)| g.len()).sum();
    let (max_rel_error, worst) = per_param
        .into_iter()
        .fold((0.0, String::new()), |acc, x| if x.0 > acc.0 || acc.1.is_empty() { x } else { acc });
    Ok(GradCheckReport {
        max_rel_error,
        worst,
        checked,
    })
}

fn nudge(m: &mut ClassifierModel, name: &str, i: usize, d: f64) {
    m.visit_params_mut(&mut |n, p| {
        if n == name {
            p.value[i] += d;
        }
    });
}
