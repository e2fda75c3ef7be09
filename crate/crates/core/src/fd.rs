//! Central finite differences, used as an independent oracle for the jet
//! propagation. Gradient entries use the O(h^2) two-point stencil; Hessian
//! entries use the standard four-point (off-diagonal) and three-point
//! (diagonal) second-difference stencils.

use thiserror::Error;

use crate::jet::{constants, seed, ScalarJet2};

#[derive(Debug, Error)]
pub enum FdError {
    #[error("step size must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("function value is not finite at a stencil point")]
    NonFiniteValue,
    #[error("jet evaluation produced a non-finite result")]
    NonFiniteJet,
}

/// Maximum absolute discrepancy between jet derivatives and central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdReport {
    pub max_grad_err: f64,
    pub max_hess_err: f64,
}

/// Compare the jet-propagated gradient and Hessian of `f` at `point` against
/// central finite differences with step `h`.
pub fn finite_difference_check<F>(f: F, point: &[f64], h: f64) -> Result<FdReport, FdError>
where
    F: Fn(&[ScalarJet2]) -> ScalarJet2,
{
    if h <= 0.0 {
        return Err(FdError::NonPositiveStep(h));
    }
    let d = point.len();
    let jet = f(&seed(point).expect("nonempty point"));
    if !jet.is_finite() {
        return Err(FdError::NonFiniteJet);
    }

    let eval = |x: &[f64]| -> Result<f64, FdError> {
        let v = f(&constants(x)).value;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(FdError::NonFiniteValue)
        }
    };

    let f0 = eval(point)?;
    let mut x = point.to_vec();
    let mut max_grad_err: f64 = 0.0;
    let mut max_hess_err: f64 = 0.0;

    for i in 0..d {
        x[i] = point[i] + h;
        let fp = eval(&x)?;
        x[i] = point[i] - h;
        let fm = eval(&x)?;
        x[i] = point[i];

        let g = (fp - fm) / (2.0 * h);
        max_grad_err = max_grad_err.max((g - jet.grad[i]).abs());

        let hii = (fp - 2.0 * f0 + fm) / (h * h);
        max_hess_err = max_hess_err.max((hii - jet.hess.get(i, i)).abs());
    }

    for i in 0..d {
        for j in (i + 1)..d {
            let mut stencil = |si: f64, sj: f64| -> Result<f64, FdError> {
                x[i] = point[i] + si * h;
                x[j] = point[j] + sj * h;
                let v = eval(&x);
                x[i] = point[i];
                x[j] = point[j];
                v
            };
            let hij = (stencil(1.0, 1.0)? - stencil(1.0, -1.0)? - stencil(-1.0, 1.0)?
                + stencil(-1.0, -1.0)?)
                / (4.0 * h * h);
            max_hess_err = max_hess_err.max((hij - jet.hess.get(i, j)).abs());
        }
    }

    Ok(FdReport {
        max_grad_err,
        max_hess_err,
    })
}
