//! Central finite-difference verification of hand-derived gradients.

use crate::error::{Error, Result};
use crate::param::Parameterized;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Max over all coordinates of `|a - n| / max(|a|, |n|, 1e-8)`.
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub coordinates: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the gradients currently stored in `model` against central
/// differences of `loss_fn` with step `epsilon`.
///
/// `loss_fn` must be deterministic; it is evaluated twice at the unperturbed
/// point and a mismatch is reported as an error. Parameter values are
/// restored exactly after each probe.
pub fn finite_diff_check<M, F>(model: &mut M, epsilon: f64, loss_fn: F) -> Result<GradCheckReport>
where
    M: Parameterized,
    F: Fn(&M) -> f64,
{
    if !(1e-6..=1e-4).contains(&epsilon) {
        return Err(Error::GradCheck(format!(
            "epsilon {epsilon} outside [1e-6, 1e-4]"
        )));
    }
    let base = loss_fn(model);
    let again = loss_fn(model);
    if base.to_bits() != again.to_bits() {
        return Err(Error::GradCheck(format!(
            "loss function is not deterministic ({base} vs {again})"
        )));
    }

    let layout: Vec<(String, Vec<f64>)> = model
        .params()
        .into_iter()
        .map(|(n, p)| (n, p.grad.as_slice().to_vec()))
        .collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        coordinates: 0,
    };
    for (pi, (name, grads)) in layout.iter().enumerate() {
        for (j, &analytic) in grads.iter().enumerate() {
            let original = model.params_mut()[pi].value.as_slice()[j];
            model.params_mut()[pi].value.as_mut_slice()[j] = original + epsilon;
            let plus = loss_fn(model);
            model.params_mut()[pi].value.as_mut_slice()[j] = original - epsilon;
            let minus = loss_fn(model);
            model.params_mut()[pi].value.as_mut_slice()[j] = original;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let err = relative_error(analytic, numeric);
            if !err.is_finite() {
                return Err(Error::GradCheck(format!(
                    "non-finite comparison at {name}[{j}]: analytic {analytic}, numeric {numeric}"
                )));
            }
            report.coordinates += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((name.clone(), j));
                report.analytic_at_worst = analytic;
                report.numeric_at_worst = numeric;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use std::cell::Cell;

    use super::*;
    use crate::param::Param;
    use crate::tensor::Matrix;

    struct Scalar(Param);

    impl Parameterized for Scalar {
        fn params(&self) -> Vec<(String, &Param)> {
            vec![("w".into(), &self.0)]
        }
        fn params_mut(&mut self) -> Vec<&mut Param> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn quadratic_is_exact() {
        let mut m = Scalar(Param::new(Matrix::from_vec(1, 1, vec![3.0]).unwrap()));
        m.0.grad.set(0, 0, 6.0);
        let r = finite_diff_check(&mut m, 1e-5, |m| m.0.value.get(0, 0).powi(2)).unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
        assert_eq!(m.0.value.get(0, 0), 3.0);
    }

    #[test]
    fn wrong_gradient_is_reported() {
        let mut m = Scalar(Param::new(Matrix::from_vec(1, 1, vec![3.0]).unwrap()));
        m.0.grad.set(0, 0, 5.0);
        let r = finite_diff_check(&mut m, 1e-5, |m| m.0.value.get(0, 0).powi(2)).unwrap();
        assert!((r.max_rel_error - 1.0 / 6.0).abs() < 1e-6);
        assert_eq!(r.worst, Some(("w".to_string(), 0)));
    }

    #[test]
    fn nondeterministic_loss_rejected() {
        let mut m = Scalar(Param::zeros(1, 1));
        let calls = Cell::new(0u32);
        let res = finite_diff_check(&mut m, 1e-5, |_| {
            calls.set(calls.get() + 1);
            calls.get() as f64
        });
        assert!(matches!(res, Err(Error::GradCheck(_))));
    }

    #[test]
    fn epsilon_range_enforced() {
        let mut m = Scalar(Param::zeros(1, 1));
        assert!(finite_diff_check(&mut m, 1e-2, |_| 0.0).is_err());
        assert!(finite_diff_check(&mut m, 1e-9, |_| 0.0).is_err());
    }
}
