use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{Precision, Tensor};

/// A scalar function of a flat parameter vector with an analytic gradient.
pub trait Objective {
    fn value(&self, params: &[f64]) -> Result<f64>;
    fn value_and_grad(&self, params: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// Adapter for closures, mostly for tests and one-off checks.
pub struct FnObjective<F, G> {
    pub value: F,
    pub grad: G,
}

impl<F, G> Objective for FnObjective<F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    fn value(&self, params: &[f64]) -> Result<f64> {
        Ok((self.value)(params))
    }

    fn value_and_grad(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok(((self.value)(params), (self.grad)(params)))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub checked: usize,
}

/// Compares the analytic gradient against central differences for every
/// parameter. Error per entry is `|a - n| / max(1, |n|)`.
pub fn grad_check(objective: &impl Objective, params: &Tensor, eps: f64) -> Result<GradCheckReport> {
    if params.precision() != Precision::F64 {
        return Err(Error::config("gradient checks require 64-bit mode"));
    }
    if !(1e-6..=1e-3).contains(&eps) {
        return Err(Error::config(format!("eps {eps} outside [1e-6, 1e-3]")));
    }
    let x0 = params.data();
    let (loss, analytic) = objective.value_and_grad(x0)?;
    if !loss.is_finite() {
        return Err(Error::Numerical {
            index: 0,
            detail: format!("base loss {loss}"),
        });
    }
    if analytic.len() != x0.len() {
        return Err(Error::dim("analytic gradient", x0.len(), analytic.len()));
    }
    let mut x = x0.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic_at_worst: analytic.first().copied().unwrap_or(0.0),
        numeric_at_worst: 0.0,
        checked: x0.len(),
    };
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + eps;
        let up = objective.value(&x)?;
        x[i] = orig - eps;
        let down = objective.value(&x)?;
        x[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Numerical {
                index: i,
                detail: format!("perturbed loss {up} / {down}"),
            });
        }
        let numeric = (up - down) / (2.0 * eps);
        let rel = (analytic[i] - numeric).abs() / numeric.abs().max(1.0);
        if i == 0 || rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = i;
            report.analytic_at_worst = analytic[i];
            report.numeric_at_worst = numeric;
        }
    }
    Ok(report)
}
