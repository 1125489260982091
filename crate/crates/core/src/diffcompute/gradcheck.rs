// SPDX-License-Identifier: MIT OR Apache-2.0

//! Central-difference gradient checking in f64.

use super::params::ParamStore;
use crate::error::Result;

/// A scalar objective over a parameter store, evaluated in f64.
pub trait Objective {
    fn loss(&self, params: &ParamStore<f64>) -> Result<f64>;

    /// Evaluates the loss and accumulates its analytic gradient into the
    /// store's (zeroed) gradient buffers.
    fn loss_and_grad(&self, params: &mut ParamStore<f64>) -> Result<f64>;
}

/// Objective built from two closures.
pub struct FnObjective<F, G> {
    pub loss: F,
    pub grad: G,
}

impl<F, G> Objective for FnObjective<F, G>
where
    F: Fn(&ParamStore<f64>) -> Result<f64>,
    G: Fn(&mut ParamStore<f64>) -> Result<f64>,
{
    fn loss(&self, params: &ParamStore<f64>) -> Result<f64> {
        (self.loss)(params)
    }

    fn loss_and_grad(&self, params: &mut ParamStore<f64>) -> Result<f64> {
        (self.grad)(params)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamError {
    pub name: String,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub params: Vec<ParamError>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.tolerance
    }
}

/// Relative error `|a - n| / max(|a|, |n|, floor)`. The floor keeps
/// entries whose true gradient is ~0 from dominating through round-off.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares the analytic gradient at `point` to central differences with
/// step `epsilon`. Failures are reported, not raised; only evaluation
/// errors (shape problems, non-finite values) propagate.
pub fn grad_check(
    objective: &impl Objective,
    point: &ParamStore<f64>,
    epsilon: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    assert!(epsilon > 0.0, "epsilon must be positive");
    let mut analytic = point.clone();
    analytic.zero_grads();
    objective.loss_and_grad(&mut analytic)?;

    let mut probe = point.clone();
    let mut params = Vec::with_capacity(point.len());
    for id in 0..point.len() {
        let name = point.iter().nth(id).map(|p| p.name.clone()).unwrap_or_default();
        let n = point.value(id).data().len();
        let mut worst_rel = 0f64;
        let mut worst_abs = 0f64;
        for i in 0..n {
            let orig = probe.value(id).data()[i];
            probe.value_mut(id).data_mut()[i] = orig + epsilon;
            let up = objective.loss(&probe)?;
            probe.value_mut(id).data_mut()[i] = orig - epsilon;
            let down = objective.loss(&probe)?;
            probe.value_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * epsilon);
            let a = analytic.grad(id).data()[i];
            worst_rel = worst_rel.max(relative_error(a, numeric));
            worst_abs = worst_abs.max((a - numeric).abs());
        }
        params.push(ParamError {
            name,
            max_rel_error: worst_rel,
            max_abs_error: worst_abs,
        });
    }
    Ok(GradCheckReport { params, tolerance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcompute::Tensor2D;

    fn quadratic() -> ParamStore<f64> {
        let mut p = ParamStore::new();
        p.insert("x", Tensor2D::from_vec(1, 3, vec![0.5, -1.0, 2.0]).unwrap())
            .unwrap();
        p
    }

    #[test]
    fn detects_correct_and_wrong_gradients() {
        let loss = |p: &ParamStore<f64>| Ok(p.value(0).data().iter().map(|x| x * x * x).sum());
        let good = FnObjective {
            loss,
            grad: |p: &mut ParamStore<f64>| {
                let g: Vec<f64> = p.value(0).data().iter().map(|x| 3.0 * x * x).collect();
                p.grad_mut(0).data_mut().copy_from_slice(&g);
                loss(p)
            },
        };
        let report = grad_check(&good, &quadratic(), 1e-4, 1e-6).unwrap();
        assert!(report.passed(), "{report:?}");

        let bad = FnObjective {
            loss,
            grad: |p: &mut ParamStore<f64>| {
                let g: Vec<f64> = p.value(0).data().iter().map(|x| 2.0 * x * x).collect();
                p.grad_mut(0).data_mut().copy_from_slice(&g);
                loss(p)
            },
        };
        let report = grad_check(&bad, &quadratic(), 1e-4, 1e-3).unwrap();
        assert!(!report.passed());
        assert!(report.params[0].max_rel_error > 0.3);
    }
}
