//! Forward-mode second-order jets: every scalar carries its value, gradient,
//! and full symmetric Hessian with respect to a fixed set of seed variables.
//!
//! Propagation is exact (product/quotient/chain rules, no truncation), so a
//! composed expression yields the true gradient and Hessian up to round-off.
//! Dense propagation costs O(d^2) per scalar operation, which is the right
//! trade for the parameter counts this crate works at (d <= ~100).

use nalgebra::DVector;
use thiserror::Error;

use crate::symmat::SymMat;

#[derive(Debug, Error, PartialEq)]
pub enum JetError {
    #[error("seed point must have at least one coordinate")]
    EmptySeed,
    #[error("jet dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("jet division by zero")]
    DivisionByZero,
}

/// Scalar value together with gradient and Hessian w.r.t. `d` seed variables.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarJet2 {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: SymMat,
}

impl ScalarJet2 {
    /// Constant: value with zero derivatives in a `d`-dimensional seed space.
    pub fn constant(value: f64, d: usize) -> Self {
        ScalarJet2 {
            value,
            grad: DVector::zeros(d),
            hess: SymMat::zeros(d),
        }
    }

    /// Seed jet for variable `i`: gradient e_i, zero Hessian.
    pub fn variable(value: f64, i: usize, d: usize) -> Self {
        assert!(i < d, "seed index out of range");
        let mut grad = DVector::zeros(d);
        grad[i] = 1.0;
        ScalarJet2 {
            value,
            grad,
            hess: SymMat::zeros(d),
        }
    }

    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.grad.iter().all(|x| x.is_finite()) && self.hess.is_finite()
    }

    fn check_dims(&self, other: &Self) -> Result<(), JetError> {
        if self.dim() != other.dim() {
            return Err(JetError::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, JetError> {
        self.check_dims(other)?;
        let mut hess = self.hess.clone();
        hess.axpy(1.0, &other.hess);
        Ok(ScalarJet2 {
            value: self.value + other.value,
            grad: &self.grad + &other.grad,
            hess,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, JetError> {
        self.check_dims(other)?;
        let mut hess = self.hess.clone();
        hess.axpy(-1.0, &other.hess);
        Ok(ScalarJet2 {
            value: self.value - other.value,
            grad: &self.grad - &other.grad,
            hess,
        })
    }

    /// Product rule: (fg)'' = f''g + f'g'^T + g'f'^T + fg''.
    pub fn mul(&self, other: &Self) -> Result<Self, JetError> {
        self.check_dims(other)?;
        let mut hess = self.hess.clone();
        hess.scale_mut(other.value);
        hess.axpy(self.value, &other.hess);
        hess.sym_outer_update(1.0, &self.grad, &other.grad);
        Ok(ScalarJet2 {
            value: self.value * other.value,
            grad: &self.grad * other.value + &other.grad * self.value,
            hess,
        })
    }

    /// Quotient a/b computed as a * (1/b); both rules are exact.
    pub fn div(&self, other: &Self) -> Result<Self, JetError> {
        self.check_dims(other)?;
        if other.value == 0.0 {
            return Err(JetError::DivisionByZero);
        }
        let inv = other.recip_unchecked();
        self.mul(&inv)
    }

    /// 1/b for b.value != 0: (1/b)' = -b'/b^2, (1/b)'' = -b''/b^2 + 2 b'b'^T/b^3.
    fn recip_unchecked(&self) -> Self {
        let inv = 1.0 / self.value;
        let inv2 = inv * inv;
        let inv3 = inv2 * inv;
        let mut hess = self.hess.clone();
        hess.scale_mut(-inv2);
        hess.rank1_update(2.0 * inv3, &self.grad);
        ScalarJet2 {
            value: inv,
            grad: &self.grad * (-inv2),
            hess,
        }
    }

    pub fn neg(&self) -> Self {
        let mut hess = self.hess.clone();
        hess.scale_mut(-1.0);
        ScalarJet2 {
            value: -self.value,
            grad: -&self.grad,
            hess,
        }
    }

    /// Scale by a constant.
    pub fn scale(&self, c: f64) -> Self {
        let mut hess = self.hess.clone();
        hess.scale_mut(c);
        ScalarJet2 {
            value: self.value * c,
            grad: &self.grad * c,
            hess,
        }
    }

    /// Add a constant.
    pub fn shift(&self, c: f64) -> Self {
        ScalarJet2 {
            value: self.value + c,
            grad: self.grad.clone(),
            hess: self.hess.clone(),
        }
    }

    /// Univariate chain rule for g = f(u), given f(u), f'(u), f''(u):
    /// grad = f' u', hess = f' u'' + f'' u' u'^T.
    pub fn chain(&self, f0: f64, f1: f64, f2: f64) -> Self {
        let mut hess = self.hess.clone();
        hess.scale_mut(f1);
        hess.rank1_update(f2, &self.grad);
        ScalarJet2 {
            value: f0,
            grad: &self.grad * f1,
            hess,
        }
    }

    pub fn square(&self) -> Self {
        let u = self.value;
        self.chain(u * u, 2.0 * u, 2.0)
    }

    pub fn sin(&self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(&self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn exp(&self) -> Self {
        let e = self.value.exp();
        self.chain(e, e, e)
    }

    /// Integer power by chain rule.
    pub fn powi(&self, n: i32) -> Self {
        let u = self.value;
        let f0 = u.powi(n);
        let f1 = f64::from(n) * u.powi(n - 1);
        let f2 = f64::from(n) * f64::from(n - 1) * u.powi(n - 2);
        self.chain(f0, f1, f2)
    }
}

macro_rules! jet_binop {
    ($trait:ident, $method:ident, $checked:ident) => {
        impl std::ops::$trait for &ScalarJet2 {
            type Output = ScalarJet2;
            fn $method(self, rhs: &ScalarJet2) -> ScalarJet2 {
                self.$checked(rhs).expect("jet arithmetic")
            }
        }
        impl std::ops::$trait for ScalarJet2 {
            type Output = ScalarJet2;
            fn $method(self, rhs: ScalarJet2) -> ScalarJet2 {
                (&self).$checked(&rhs).expect("jet arithmetic")
            }
        }
        impl std::ops::$trait<&ScalarJet2> for ScalarJet2 {
            type Output = ScalarJet2;
            fn $method(self, rhs: &ScalarJet2) -> ScalarJet2 {
                (&self).$checked(rhs).expect("jet arithmetic")
            }
        }
    };
}

jet_binop!(Add, add, add);
jet_binop!(Sub, sub, sub);
jet_binop!(Mul, mul, mul);
jet_binop!(Div, div, div);

impl std::ops::Neg for &ScalarJet2 {
    type Output = ScalarJet2;
    fn neg(self) -> ScalarJet2 {
        ScalarJet2::neg(self)
    }
}

/// The binary operators accepted by [`jet_arith`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JetOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Checked binary arithmetic on jets.
pub fn jet_arith(a: &ScalarJet2, b: &ScalarJet2, op: JetOp) -> Result<ScalarJet2, JetError> {
    match op {
        JetOp::Add => a.add(b),
        JetOp::Sub => a.sub(b),
        JetOp::Mul => a.mul(b),
        JetOp::Div => a.div(b),
    }
}

/// Seed jets for a point: jet `i` has value `point[i]`, gradient e_i, zero Hessian.
pub fn seed(point: &[f64]) -> Result<Vec<ScalarJet2>, JetError> {
    if point.is_empty() {
        return Err(JetError::EmptySeed);
    }
    let d = point.len();
    Ok(point
        .iter()
        .enumerate()
        .map(|(i, &v)| ScalarJet2::variable(v, i, d))
        .collect())
}

/// Constants at seed dimension zero: the cheap way to evaluate a jet
/// expression for its value only.
pub fn constants(point: &[f64]) -> Vec<ScalarJet2> {
    point.iter().map(|&v| ScalarJet2::constant(v, 0)).collect()
}

/// Smooth scalar activations with closed-form first and second derivatives.
#[derive(Debug, Clone, PartialEq)]
pub enum ActivationKind {
    Identity,
    Tanh,
    Sigmoid,
    Softplus,
    /// u -> u^2 + 1.
    SquarePlusOne,
    /// Coefficients in ascending degree order.
    Polynomial(Vec<f64>),
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

impl ActivationKind {
    /// (sigma(u), sigma'(u), sigma''(u)).
    pub fn eval012(&self, u: f64) -> (f64, f64, f64) {
        match self {
            ActivationKind::Identity => (u, 1.0, 0.0),
            ActivationKind::Tanh => {
                let t = u.tanh();
                let sech2 = 1.0 - t * t;
                (t, sech2, -2.0 * t * sech2)
            }
            ActivationKind::Sigmoid => {
                let s = sigmoid(u);
                let s1 = s * (1.0 - s);
                (s, s1, s1 * (1.0 - 2.0 * s))
            }
            ActivationKind::Softplus => {
                // log(1 + e^u) in the branch form that never overflows.
                let v = u.max(0.0) + (-u.abs()).exp().ln_1p();
                let s = sigmoid(u);
                (v, s, s * (1.0 - s))
            }
            ActivationKind::SquarePlusOne => (u * u + 1.0, 2.0 * u, 2.0),
            ActivationKind::Polynomial(coeffs) => {
                // Horner for p, p', p'' in one sweep.
                let (mut p, mut dp, mut ddp) = (0.0, 0.0, 0.0);
                for &c in coeffs.iter().rev() {
                    ddp = ddp * u + 2.0 * dp;
                    dp = dp * u + p;
                    p = p * u + c;
                }
                (p, dp, ddp)
            }
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, ActivationKind::Identity)
    }
}

/// Apply an activation to a jet by the univariate chain rule.
pub fn apply_activation(kind: &ActivationKind, u: &ScalarJet2) -> ScalarJet2 {
    if kind.is_identity() {
        return u.clone();
    }
    let (f0, f1, f2) = kind.eval012(u.value);
    u.chain(f0, f1, f2)
}
