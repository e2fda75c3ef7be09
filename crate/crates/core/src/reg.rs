//! Regularizers and the twice-differentiable objective abstraction.
//!
//! Every objective in this crate evaluates on jets, so its gradient and
//! Hessian are exact. Regularizer evaluation goes through the same jet
//! arithmetic as everything else; in particular the standard L2 regularizer
//! is literally the generalized one with a constant coefficient vector, so
//! the two agree bit for bit.

use nalgebra::DVector;
use thiserror::Error;

use crate::jet::{constants, seed, ScalarJet2};
use crate::net::{loss, DataSet, FeedforwardSpec, LossKind, ParamLayout};

#[derive(Debug, Error)]
pub enum RegError {
    #[error("coefficient vector has length {len}, expected {want}")]
    EpsLength { len: usize, want: usize },
    #[error("multiplicative regularizer needs a parameter layout")]
    NeedsLayout,
    #[error("network has no weight matrices")]
    NoWeightLayers,
}

/// Sum of eps_i * alpha_i^2 with independent per-coordinate coefficients.
pub fn generalized_l2(alpha: &[ScalarJet2], eps: &[f64]) -> Result<ScalarJet2, RegError> {
    if alpha.len() != eps.len() {
        return Err(RegError::EpsLength {
            len: eps.len(),
            want: alpha.len(),
        });
    }
    let d = alpha.first().map_or(0, ScalarJet2::dim);
    let mut total = ScalarJet2::constant(0.0, d);
    for (a, &e) in alpha.iter().zip(eps) {
        total = &total + &a.square().scale(e);
    }
    Ok(total)
}

/// eps * ||alpha||^2, computed as the generalized regularizer with constant
/// coefficients so the two are bit-identical.
pub fn standard_l2(alpha: &[ScalarJet2], eps: f64) -> ScalarJet2 {
    generalized_l2(alpha, &vec![eps; alpha.len()]).expect("lengths match by construction")
}

/// eps * prod_i ||M_i||_F^2 over the weight matrices; biases do not enter.
pub fn multiplicative(
    layout: &ParamLayout,
    alpha: &[ScalarJet2],
    eps: f64,
) -> Result<ScalarJet2, RegError> {
    if layout.n_layers() == 0 {
        return Err(RegError::NoWeightLayers);
    }
    let d = alpha.first().map_or(0, ScalarJet2::dim);
    let mut product = ScalarJet2::constant(eps, d);
    for layer in 1..=layout.n_layers() {
        let mut norm_sq = ScalarJet2::constant(0.0, d);
        for k in layout.weight_indices(layer) {
            norm_sq = &norm_sq + &alpha[k].square();
        }
        product = &product * &norm_sq;
    }
    Ok(product)
}

/// Which regularizer to add to the data loss.
#[derive(Debug, Clone, PartialEq)]
pub enum RegularizerSpec {
    None,
    GeneralizedL2(DVector<f64>),
    StandardL2(f64),
    Multiplicative(f64),
}

impl RegularizerSpec {
    /// Evaluate on jets. `layout` is required for the multiplicative variant.
    pub fn eval_jets(
        &self,
        alpha: &[ScalarJet2],
        layout: Option<&ParamLayout>,
    ) -> Result<ScalarJet2, RegError> {
        let d = alpha.first().map_or(0, ScalarJet2::dim);
        match self {
            RegularizerSpec::None => Ok(ScalarJet2::constant(0.0, d)),
            RegularizerSpec::GeneralizedL2(eps) => generalized_l2(alpha, eps.as_slice()),
            RegularizerSpec::StandardL2(eps) => Ok(standard_l2(alpha, *eps)),
            RegularizerSpec::Multiplicative(eps) => {
                multiplicative(layout.ok_or(RegError::NeedsLayout)?, alpha, *eps)
            }
        }
    }

    pub fn validate_dim(&self, d: usize) -> Result<(), RegError> {
        if let RegularizerSpec::GeneralizedL2(eps) = self {
            if eps.len() != d {
                return Err(RegError::EpsLength {
                    len: eps.len(),
                    want: d,
                });
            }
        }
        Ok(())
    }
}

/// A twice-differentiable function R^d -> R, evaluable on jets.
pub trait Objective {
    fn dim(&self) -> usize;

    /// Evaluate on caller-supplied jets (seed jets for derivatives,
    /// zero-dimensional constants for a value-only pass).
    fn eval_jets(&self, alpha: &[ScalarJet2]) -> ScalarJet2;

    /// Value, gradient, and Hessian at a point.
    fn eval_jet(&self, alpha: &DVector<f64>) -> ScalarJet2 {
        self.eval_jets(&seed(alpha.as_slice()).expect("objective dimension >= 1"))
    }

    /// Value only.
    fn eval_value(&self, alpha: &DVector<f64>) -> f64 {
        self.eval_jets(&constants(alpha.as_slice())).value
    }
}

/// Regularized network loss: data term plus regularizer, with the two parts
/// separately retrievable.
pub struct NetObjective {
    pub spec: FeedforwardSpec,
    pub layout: ParamLayout,
    pub data: DataSet,
    pub loss_kind: LossKind,
    pub regularizer: RegularizerSpec,
}

impl NetObjective {
    pub fn new(
        spec: FeedforwardSpec,
        data: DataSet,
        loss_kind: LossKind,
        regularizer: RegularizerSpec,
    ) -> Result<Self, RegError> {
        let layout = spec.layout();
        regularizer.validate_dim(layout.dim())?;
        Ok(NetObjective {
            spec,
            layout,
            data,
            loss_kind,
            regularizer,
        })
    }

    /// Unregularized data loss on jets.
    pub fn loss_part(&self, alpha: &[ScalarJet2]) -> ScalarJet2 {
        loss(&self.spec, &self.layout, &self.data, self.loss_kind, alpha)
            .expect("validated at construction")
    }

    /// Regularizer term on jets.
    pub fn reg_part(&self, alpha: &[ScalarJet2]) -> ScalarJet2 {
        self.regularizer
            .eval_jets(alpha, Some(&self.layout))
            .expect("validated at construction")
    }
}

impl Objective for NetObjective {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn eval_jets(&self, alpha: &[ScalarJet2]) -> ScalarJet2 {
        &self.loss_part(alpha) + &self.reg_part(alpha)
    }
}

/// Objective defined by a closure over jets.
pub struct FnObjective {
    dim: usize,
    f: Box<dyn Fn(&[ScalarJet2]) -> ScalarJet2 + Sync>,
}

impl FnObjective {
    pub fn new<F>(dim: usize, f: F) -> Self
    where
        F: Fn(&[ScalarJet2]) -> ScalarJet2 + Sync + 'static,
    {
        FnObjective { dim, f: Box::new(f) }
    }
}

impl Objective for FnObjective {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_jets(&self, alpha: &[ScalarJet2]) -> ScalarJet2 {
        (self.f)(alpha)
    }
}

/// A layout-free regularizer added to an arbitrary base objective.
pub struct Regularized<O> {
    pub base: O,
    pub reg: RegularizerSpec,
}

impl<O: Objective> Regularized<O> {
    pub fn new(base: O, reg: RegularizerSpec) -> Result<Self, RegError> {
        if matches!(reg, RegularizerSpec::Multiplicative(_)) {
            return Err(RegError::NeedsLayout);
        }
        reg.validate_dim(base.dim())?;
        Ok(Regularized { base, reg })
    }
}

impl<O: Objective> Objective for Regularized<O> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn eval_jets(&self, alpha: &[ScalarJet2]) -> ScalarJet2 {
        let l = self.base.eval_jets(alpha);
        let r = self.reg.eval_jets(alpha, None).expect("validated at construction");
        &l + &r
    }
}
