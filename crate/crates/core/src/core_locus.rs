//! Core-locus constructions for the multiplicative regularizer: parameter
//! points with two hidden weight matrices, the output weight matrix, and the
//! matching biases zeroed, and the output bias at the target mean. At such
//! points the network function is constant, the gradient of the regularized
//! loss vanishes, and the Hessian is singular.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::jet::seed;
use crate::net::{Coord, DataSet, FeedforwardSpec, ParamLayout, ParamVector};
use crate::reg::{NetObjective, Objective};

#[derive(Debug, Error)]
pub enum CoreLocusError {
    #[error("core locus needs a fully connected network")]
    NotFullyConnected,
    #[error("core locus needs depth >= 2, got {0}")]
    DepthTooSmall(usize),
    #[error("indices must satisfy 1 <= k1 < k2 <= depth; got k1={k1}, k2={k2}, depth={depth}")]
    BadIndices { k1: usize, k2: usize, depth: usize },
    #[error("core locus construction needs biases")]
    NoBias,
}

/// What the output bias of a core point is set to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetBias {
    /// Componentwise mean of the targets: the value at which the gradient
    /// w.r.t. the output bias actually vanishes for the squared-error loss.
    Mean,
    /// Componentwise sum of the targets. Kept for comparison; the gradient
    /// does not vanish there unless the targets sum to their mean.
    LiteralSum,
}

fn check_inputs(
    spec: &FeedforwardSpec,
    k1: usize,
    k2: usize,
) -> Result<(), CoreLocusError> {
    if !spec.is_fully_connected() {
        return Err(CoreLocusError::NotFullyConnected);
    }
    if !spec.uses_bias {
        return Err(CoreLocusError::NoBias);
    }
    let depth = spec.depth();
    if depth < 2 {
        return Err(CoreLocusError::DepthTooSmall(depth));
    }
    if k1 < 1 || k1 >= k2 || k2 > depth {
        return Err(CoreLocusError::BadIndices { k1, k2, depth });
    }
    Ok(())
}

fn constrained(layout: &ParamLayout, k1: usize, k2: usize, last: usize, index: usize) -> bool {
    match layout.coord(index) {
        Coord::Weight { layer, .. } => layer == k1 || layer == k2 || layer == last,
        Coord::Bias { layer, .. } => layer == k1 || layer == k2 || layer == last,
    }
}

/// Flat indices of the coordinates a core point leaves free.
pub fn free_coordinate_indices(
    spec: &FeedforwardSpec,
    k1: usize,
    k2: usize,
) -> Result<Vec<usize>, CoreLocusError> {
    check_inputs(spec, k1, k2)?;
    let layout = spec.layout();
    let last = spec.n_layers();
    Ok((0..layout.dim())
        .filter(|&idx| !constrained(&layout, k1, k2, last, idx))
        .collect())
}

/// Construct a core point: zero the weight matrices and biases of hidden
/// layers k1 and k2 and of the output layer, set the output bias per
/// `target_bias`, and draw every free coordinate i.i.d. uniform on [-1, 1].
pub fn core_locus_point(
    spec: &FeedforwardSpec,
    data: &DataSet,
    k1: usize,
    k2: usize,
    free_seed: u64,
    target_bias: TargetBias,
) -> Result<ParamVector, CoreLocusError> {
    check_inputs(spec, k1, k2)?;
    let layout = spec.layout();
    let last = spec.n_layers();
    let mut rng = ChaCha8Rng::seed_from_u64(free_seed);
    let mut alpha = DVector::zeros(layout.dim());
    for idx in 0..layout.dim() {
        if !constrained(&layout, k1, k2, last, idx) {
            alpha[idx] = rng.random_range(-1.0..1.0);
        }
    }
    let target = match target_bias {
        TargetBias::Mean => data.target_mean(),
        TargetBias::LiteralSum => data.target_sum(),
    };
    for (row, &v) in target.iter().enumerate() {
        alpha[layout.bias_index(last, row).expect("biases present")] = v;
    }
    Ok(ParamVector::new(alpha))
}

/// The core point with every free coordinate zero: all weights and biases
/// vanish except the output bias, which sits at the target mean.
pub fn origin_like_point(spec: &FeedforwardSpec, data: &DataSet) -> Result<ParamVector, CoreLocusError> {
    core_locus_point(spec, data, 1, 2, 0, TargetBias::Mean).map(|mut p| {
        let layout = spec.layout();
        let last = spec.n_layers();
        for idx in 0..layout.dim() {
            if !constrained(&layout, 1, 2, last, idx) {
                p.alpha[idx] = 0.0;
            }
        }
        p
    })
}

/// Measurements at a candidate core point. Assertions live in the test
/// suites; this only reports.
#[derive(Debug, Clone)]
pub struct CoreLocusCheck {
    pub grad_norm: f64,
    pub min_abs_eig: f64,
    pub eig_scale: f64,
    pub is_origin_like: bool,
    /// Largest |Hessian entry| outside the output-bias rows and columns,
    /// reported for origin-like points. The output-bias diagonal of the
    /// squared-error loss equals 2n at every point of parameter space, so
    /// those entries carry no information about the point itself.
    pub hess_max_abs_at_origin_like: Option<f64>,
    /// Largest |Hessian entry| over all coordinates, for reference.
    pub hess_max_abs_full: f64,
}

/// Evaluate gradient norm and Hessian structure at a point, flagging the
/// origin-like case where the second-derivative vanishing claim applies.
pub fn verify_core_locus(obj: &NetObjective, point: &ParamVector) -> CoreLocusCheck {
    let layout = &obj.layout;
    let last = obj.spec.n_layers();
    let jet = obj.eval_jets(&seed(point.alpha.as_slice()).expect("nonempty parameters"));
    let grad_norm = jet.grad.norm();
    let d = layout.dim();

    let output_bias: Vec<usize> = layout.bias_indices(last);
    let mean = obj.data.target_mean();
    let is_origin_like = (0..d).all(|i| match output_bias.iter().position(|&b| b == i) {
        Some(row) => point.alpha[i] == mean[row],
        None => point.alpha[i] == 0.0,
    });

    let mut full_max = 0.0f64;
    let mut excl_max = 0.0f64;
    for i in 0..d {
        for j in i..d {
            let v = jet.hess.get(i, j).abs();
            full_max = full_max.max(v);
            if !output_bias.contains(&i) && !output_bias.contains(&j) {
                excl_max = excl_max.max(v);
            }
        }
    }

    let dense = jet.hess.to_dmatrix();
    let eig = nalgebra::SymmetricEigen::new(dense);
    let min_abs_eig = eig.eigenvalues.iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
    let eig_scale = eig.eigenvalues.iter().fold(1.0f64, |m, x| m.max(x.abs()));

    CoreLocusCheck {
        grad_norm,
        min_abs_eig,
        eig_scale,
        is_origin_like,
        hess_max_abs_at_origin_like: is_origin_like.then_some(excl_max),
        hess_max_abs_full: full_max,
    }
}
