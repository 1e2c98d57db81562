//! Central-difference gradient checking.

use crate::tensor::Tensor;

use super::network::{Network, NetworkError};
use super::Objective;

/// Absolute error below which two gradient entries are considered equal
/// regardless of their relative error. Central differences with `eps = 1e-5`
/// carry round-off of roughly `1e-16 / eps` times the loss magnitude.
pub const ABS_FLOOR: f64 = 1e-9;

/// Numerical gradient of `f` at `x` by central differences.
pub fn central_difference(x: &Tensor, eps: f64, mut f: impl FnMut(&Tensor) -> f64) -> Tensor {
    let mut probe = x.clone();
    let mut grad = vec![0.0; x.len()];
    for (i, g) in grad.iter_mut().enumerate() {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - eps;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        *g = (plus - minus) / (2.0 * eps);
    }
    Tensor::from_values(x.shape(), grad).expect("same shape as x")
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        0.0
    } else {
        diff / analytic.abs().max(numeric.abs())
    }
}

pub fn within_tolerance(analytic: f64, numeric: f64, rel_tol: f64) -> bool {
    (analytic - numeric).abs() <= ABS_FLOOR || relative_error(analytic, numeric) <= rel_tol
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub failures: Vec<GradMismatch>,
    pub max_relative_error: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradMismatch {
    pub layer: String,
    pub param: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares every parameter gradient of `net` for one `(input, label)` pair
/// against central differences of the loss.
pub fn check_network(
    net: &mut Network,
    input: &Tensor,
    label: usize,
    objective: Objective,
    eps: f64,
    rel_tol: f64,
) -> Result<GradCheckReport, NetworkError> {
    let out = net.forward(input)?;
    let (_, loss_grad) = objective.loss_and_grad(&out, label)?;
    let grads = net.backward(&loss_grad)?;

    let mut report = GradCheckReport {
        checked: 0,
        failures: Vec::new(),
        max_relative_error: 0.0,
    };
    let loss_at = |net: &Network| -> f64 {
        let out = net.predict(input).expect("shapes already validated");
        objective.loss_and_grad(&out, label).expect("label validated").0
    };
    for li in 0..net.layers().len() {
        for (pi, analytic) in grads.layer(li).iter().enumerate() {
            let base = net.layers()[li].params()[pi].clone();
            let mut probe = net.clone();
            let numeric = central_difference(&base, eps, |p| {
                *probe.layers_mut()[li].params_mut()[pi] = p.clone();
                loss_at(&probe)
            });
            for (idx, (&a, &n)) in analytic.data().iter().zip(numeric.data()).enumerate() {
                report.checked += 1;
                if (a - n).abs() > ABS_FLOOR {
                    report.max_relative_error = report.max_relative_error.max(relative_error(a, n));
                }
                if !within_tolerance(a, n, rel_tol) {
                    report.failures.push(GradMismatch {
                        layer: net.names()[li].clone(),
                        param: pi,
                        index: idx,
                        analytic: a,
                        numeric: n,
                    });
                }
            }
        }
    }
    Ok(report)
}
