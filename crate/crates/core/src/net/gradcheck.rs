//! Central finite-difference verification of the analytic gradients.

use serde::Serialize;

use super::model::{model_backward, model_forward, ModelParams};
use crate::embed::FeatureSequence;
use crate::error::{Error, Result};

pub const FD_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
/// Denominator floor of the relative error.
pub const DEFAULT_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: FD_STEP,
            tolerance: DEFAULT_TOLERANCE,
            floor: DEFAULT_FLOOR,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub worst_index: usize,
    /// Analytic and numeric values at `worst_index`.
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    /// Largest `|analytic - numeric|` over the tensor.
    pub max_abs_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub config: GradCheckConfig,
    pub tensors: Vec<TensorCheck>,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn failures(&self) -> impl Iterator<Item = &TensorCheck> {
        self.tensors.iter().filter(|t| !t.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }

    pub fn max_abs_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_abs_error).fold(0.0, f64::max)
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    relative_error_with_floor(analytic, numeric, DEFAULT_FLOOR)
}

pub fn relative_error_with_floor(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn loss_at(m: &ModelParams, seq: &FeatureSequence, class: usize) -> Result<f64> {
    model_forward(seq, m, Some(class))?.loss.ok_or(Error::MissingLoss)
}

/// Compares `analytic` against central differences of the loss, tensor by tensor.
pub fn compare_gradients(
    analytic: &ModelParams,
    m: &ModelParams,
    seq: &FeatureSequence,
    true_class: usize,
    tol: f64,
) -> Result<GradCheckReport> {
    let cfg = GradCheckConfig {
        tolerance: tol,
        ..Default::default()
    };
    compare_gradients_with(analytic, m, seq, true_class, &cfg)
}

pub fn compare_gradients_with(
    analytic: &ModelParams,
    m: &ModelParams,
    seq: &FeatureSequence,
    true_class: usize,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let names: Vec<String> = m.tensors().into_iter().map(|(n, _)| n).collect();
    let grads: Vec<Vec<f64>> = analytic
        .tensors()
        .into_iter()
        .map(|(_, t)| t.as_slice().to_vec())
        .collect();
    let mut probe = m.clone();
    let mut tensors = Vec::with_capacity(names.len());

    for (ti, name) in names.into_iter().enumerate() {
        let mut check = TensorCheck {
            name,
            max_rel_error: 0.0,
            worst_index: 0,
            worst_analytic: 0.0,
            worst_numeric: 0.0,
            max_abs_error: 0.0,
            passed: true,
        };
        for (i, &a) in grads[ti].iter().enumerate() {
            let original = probe.tensors_mut()[ti].as_slice()[i];
            probe.tensors_mut()[ti].as_mut_slice()[i] = original + cfg.step;
            let plus = loss_at(&probe, seq, true_class)?;
            probe.tensors_mut()[ti].as_mut_slice()[i] = original - cfg.step;
            let minus = loss_at(&probe, seq, true_class)?;
            probe.tensors_mut()[ti].as_mut_slice()[i] = original;

            let numeric = (plus - minus) / (2.0 * cfg.step);
            check.max_abs_error = check.max_abs_error.max((a - numeric).abs());
            let err = relative_error_with_floor(a, numeric, cfg.floor);
            if err > check.max_rel_error || i == 0 {
                check.max_rel_error = err;
                check.worst_index = i;
                check.worst_analytic = a;
                check.worst_numeric = numeric;
            }
        }
        check.passed = check.max_rel_error < cfg.tolerance;
        tensors.push(check);
    }
    let passed = tensors.iter().all(|t| t.passed);
    Ok(GradCheckReport {
        config: *cfg,
        tensors,
        passed,
    })
}

/// Runs backward on one sample and checks every tensor against finite differences.
pub fn gradient_check(
    m: &ModelParams,
    seq: &FeatureSequence,
    true_class: usize,
    tol: f64,
) -> Result<GradCheckReport> {
    let cfg = GradCheckConfig {
        tolerance: tol,
        ..Default::default()
    };
    gradient_check_with(m, seq, true_class, &cfg)
}

pub fn gradient_check_with(
    m: &ModelParams,
    seq: &FeatureSequence,
    true_class: usize,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let trace = model_forward(seq, m, Some(true_class))?;
    let analytic = model_backward(&trace, m)?;
    compare_gradients_with(&analytic, m, seq, true_class, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_definition() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(1.0, 0.5) - 0.5).abs() < 1e-15);
        // both tiny: the floor takes over
        assert!((relative_error(1e-10, 0.0) - 1e-2).abs() < 1e-15);
        assert!((relative_error_with_floor(1e-10, 0.0, 1e-6) - 1e-4).abs() < 1e-15);
    }
}
