//! Central finite-difference verification of analytic gradients.

use super::params::{assign_values, flatten_values, Parameters};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Flat index of the worst parameter.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Compares analytic gradients against central differences for every scalar
/// parameter.
///
/// `loss_and_grad` returns the loss and its gradient as a tree shaped like
/// `params`. The relative error of one entry is
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<P, F>(params: &P, eps: f64, loss_and_grad: F) -> Result<GradCheckReport>
where
    P: Parameters + Clone,
    F: Fn(&P) -> Result<(f64, P)>,
{
    let (loss, grads) = loss_and_grad(params)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("loss {loss}")));
    }
    let analytic = flatten_values(&grads);
    let base = flatten_values(params);
    if analytic.len() != base.len() {
        return Err(Error::Shape("gradient tree differs from parameters".into()));
    }

    let mut probe = params.clone();
    let mut values = base.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: base.len(),
    };
    for i in 0..base.len() {
        values[i] = base[i] + eps;
        assign_values(&mut probe, &values)?;
        let plus = loss_and_grad(&probe)?.0;
        values[i] = base[i] - eps;
        assign_values(&mut probe, &values)?;
        let minus = loss_and_grad(&probe)?.0;
        values[i] = base[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("perturbed loss at parameter {i}")));
        }
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        if rel > report.max_relative_error {
            report = GradCheckReport {
                max_relative_error: rel,
                worst_index: i,
                analytic: a,
                numeric,
                checked: base.len(),
            };
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::mlp::Linear;
    use crate::numerics::tape::Tape;
    use crate::numerics::tensor::Matrix;

    #[test]
    fn half_squared_norm_has_identity_gradient() {
        let p = Linear {
            weight: Matrix::from_rows(&[vec![0.3, -1.1], vec![2.0, 0.05]]).unwrap(),
            bias: Matrix::row_vector(vec![-0.7, 4.0]),
        };
        let report = grad_check(&p, 1e-5, |p: &Linear| {
            let mut tape = Tape::new();
            let v = p.map(&mut |m| tape.leaf(m.clone()));
            let w2 = tape.mul(v.weight, v.weight)?;
            let b2 = tape.mul(v.bias, v.bias)?;
            let sw = tape.sum(w2);
            let sb = tape.sum(b2);
            let s = tape.add(sw, sb)?;
            let loss = tape.scale(s, 0.5);
            let g = tape.backward(loss)?;
            Ok((tape.value(loss).item(), v.map(&mut |x| g.wrt(*x))))
        })
        .unwrap();
        assert!(report.max_relative_error < 1e-9, "{report:?}");
        assert_eq!(report.checked, 6);
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let p = Linear {
            weight: Matrix::scalar(1.5),
            bias: Matrix::scalar(0.0),
        };
        let report = grad_check(&p, 1e-5, |p: &Linear| {
            let w = p.weight.item();
            let wrong = Linear {
                weight: Matrix::scalar(3.0 * w),
                bias: Matrix::scalar(0.0),
            };
            Ok((w * w, wrong))
        })
        .unwrap();
        assert!(report.max_relative_error > 0.3);
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let p = Linear::zeros(1, 1);
        let r = grad_check(&p, 1e-5, |p: &Linear| Ok((f64::NAN, p.clone())));
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }
}
