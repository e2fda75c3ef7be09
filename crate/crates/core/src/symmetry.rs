//! Per-hidden-layer group action on network parameters and the orbit checks
//! built on it.
//!
//! For an invertible S on hidden layer i, the induced map on parameters
//! premultiplies the incoming weights and bias by S and postmultiplies the
//! outgoing weights by S^-1, leaving everything else fixed. The index
//! convention is pinned by the requirement that identity-activation networks
//! compute the same function before and after, which the tests verify.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::net::{pack, unpack, FeedforwardSpec, ParamVector};
use crate::reg::Objective;

#[derive(Debug, Error)]
pub enum SymmetryError {
    #[error("layer index {layer} outside the hidden range 1..={hidden}")]
    LayerOutOfRange { layer: usize, hidden: usize },
    #[error("matrix is {rows}x{cols}, expected {want}x{want} for layer {layer}")]
    SizeMismatch {
        layer: usize,
        rows: usize,
        cols: usize,
        want: usize,
    },
    #[error("matrix is singular or too ill-conditioned to invert")]
    Singular,
    #[error("matrix is not a rotation (orthogonality defect {defect})")]
    NotARotation { defect: f64 },
    #[error("matrix is not skew-symmetric (defect {defect})")]
    NotSkew { defect: f64 },
    #[error("base point is not critical: gradient norm {grad_norm} exceeds {tol}")]
    NotCritical { grad_norm: f64, tol: f64 },
    #[error(transparent)]
    Net(#[from] crate::net::NetError),
}

/// An invertible matrix acting on one hidden layer.
#[derive(Debug, Clone)]
pub struct LayerAction {
    pub layer: usize,
    pub s: DMatrix<f64>,
    pub s_inv: DMatrix<f64>,
}

impl LayerAction {
    /// General invertible action; the inverse is computed and checked.
    pub fn new(layer: usize, s: DMatrix<f64>) -> Result<Self, SymmetryError> {
        let n = s.nrows();
        let s_inv = s.clone().try_inverse().ok_or(SymmetryError::Singular)?;
        let defect = (&s * &s_inv - DMatrix::identity(n, n)).norm();
        if defect > 1e-12 {
            return Err(SymmetryError::Singular);
        }
        Ok(LayerAction { layer, s, s_inv })
    }

    /// Rotation action: S must be orthogonal with determinant +1; the
    /// inverse is the transpose.
    pub fn rotation(layer: usize, s: DMatrix<f64>) -> Result<Self, SymmetryError> {
        let n = s.nrows();
        let defect = (s.transpose() * &s - DMatrix::identity(n, n)).norm();
        if defect > 1e-12 || (s.determinant() - 1.0).abs() > 1e-10 {
            return Err(SymmetryError::NotARotation { defect });
        }
        let s_inv = s.transpose();
        Ok(LayerAction { layer, s, s_inv })
    }
}

/// Generator of a one-parameter rotation subgroup on one hidden layer.
#[derive(Debug, Clone)]
pub struct SkewGenerator {
    pub layer: usize,
    pub a: DMatrix<f64>,
}

impl SkewGenerator {
    pub fn new(layer: usize, a: DMatrix<f64>) -> Result<Self, SymmetryError> {
        let defect = (&a + a.transpose()).norm();
        if defect > 1e-12 {
            return Err(SymmetryError::NotSkew { defect });
        }
        Ok(SkewGenerator { layer, a })
    }

    /// exp(t A), a rotation for every t.
    pub fn rotation_at(&self, t: f64) -> Result<LayerAction, SymmetryError> {
        LayerAction::rotation(self.layer, expm(&(&self.a * t)))
    }
}

/// Matrix exponential by scaling and squaring with a Taylor series on the
/// scaled matrix. Fine for the small layer matrices this crate handles.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm = m.norm();
    let squarings = if norm > 0.25 {
        (norm / 0.25).log2().ceil() as u32
    } else {
        0
    };
    let scaled = m / 2f64.powi(squarings as i32);
    let mut result = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..=30 {
        term = (&term * &scaled) / k as f64;
        result += &term;
        if term.norm() < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Apply the layer action to a parameter vector: S * M_in, S * b_in,
/// M_out * S^-1; all other coordinates unchanged.
pub fn apply_layer_symmetry(
    spec: &FeedforwardSpec,
    alpha: &ParamVector,
    action: &LayerAction,
) -> Result<ParamVector, SymmetryError> {
    let hidden = spec.depth();
    if action.layer < 1 || action.layer > hidden {
        return Err(SymmetryError::LayerOutOfRange {
            layer: action.layer,
            hidden,
        });
    }
    let width = spec.widths()[action.layer];
    if action.s.nrows() != width || action.s.ncols() != width {
        return Err(SymmetryError::SizeMismatch {
            layer: action.layer,
            rows: action.s.nrows(),
            cols: action.s.ncols(),
            want: width,
        });
    }
    let (mut matrices, mut biases) = unpack(alpha, spec)?;
    let i = action.layer;
    matrices[i - 1] = &action.s * &matrices[i - 1];
    matrices[i] = &matrices[i] * &action.s_inv;
    if spec.uses_bias {
        biases[i - 1] = &action.s * &biases[i - 1];
    }
    Ok(pack(&matrices, &biases, spec)?)
}

/// |f(alpha) - f(S~ alpha)|: how far the objective is from being invariant
/// under the action.
pub fn check_invariance(
    obj: &dyn Objective,
    spec: &FeedforwardSpec,
    alpha: &ParamVector,
    action: &LayerAction,
) -> Result<f64, SymmetryError> {
    let moved = apply_layer_symmetry(spec, alpha, action)?;
    let a = obj.eval_value(&alpha.alpha);
    let b = obj.eval_value(&moved.alpha);
    Ok((a - b).abs())
}

/// Gradient norms along the one-parameter orbit through a critical point.
#[derive(Debug, Clone, Copy)]
pub struct OrbitReport {
    pub max_grad_norm_on_orbit: f64,
    pub orbit_arc_length: f64,
}

/// Map a critical point through exp(t A) for each t and measure how far the
/// orbit strays from the critical locus.
pub fn orbit_criticality(
    obj: &dyn Objective,
    spec: &FeedforwardSpec,
    alpha_star: &ParamVector,
    generator: &SkewGenerator,
    t_samples: &[f64],
    grad_tol: f64,
) -> Result<OrbitReport, SymmetryError> {
    let grad_norm = obj.eval_jet(&alpha_star.alpha).grad.norm();
    if grad_norm > grad_tol {
        return Err(SymmetryError::NotCritical {
            grad_norm,
            tol: grad_tol,
        });
    }
    let mut max_grad = 0.0f64;
    let mut arc = 0.0;
    let mut prev: Option<DVector<f64>> = None;
    for &t in t_samples {
        let action = generator.rotation_at(t)?;
        let moved = apply_layer_symmetry(spec, alpha_star, &action)?;
        max_grad = max_grad.max(obj.eval_jet(&moved.alpha).grad.norm());
        if let Some(p) = prev {
            arc += (&moved.alpha - &p).norm();
        }
        prev = Some(moved.alpha);
    }
    Ok(OrbitReport {
        max_grad_norm_on_orbit: max_grad,
        orbit_arc_length: arc,
    })
}

/// Random rotation matrix (orthogonal, determinant +1) for test fixtures and
/// sweeps: QR of a Gaussian-free uniform matrix with the sign fixed.
pub fn random_rotation<R: Rng>(k: usize, rng: &mut R) -> DMatrix<f64> {
    loop {
        let m = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
        let qr = m.qr();
        let mut q = qr.q();
        let r = qr.r();
        // Fix column signs so the factorization is canonical, then repair
        // the determinant by flipping one column if needed.
        for j in 0..k {
            if r[(j, j)] < 0.0 {
                for i in 0..k {
                    q[(i, j)] = -q[(i, j)];
                }
            }
        }
        if q.determinant() < 0.0 {
            for i in 0..k {
                q[(i, 0)] = -q[(i, 0)];
            }
        }
        if (q.transpose() * &q - DMatrix::identity(k, k)).norm() <= 1e-12 {
            return q;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::{seed, ActivationKind};
    use crate::net::{forward, DataSet, LossKind};
    use crate::reg::{NetObjective, RegularizerSpec};
    use nalgebra::dvector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear_net(widths: Vec<usize>) -> FeedforwardSpec {
        FeedforwardSpec::fully_connected(widths, ActivationKind::Identity).unwrap()
    }

    fn random_params(spec: &FeedforwardSpec, rng: &mut ChaCha8Rng) -> ParamVector {
        let d = spec.layout().dim();
        ParamVector::new(DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn identity_action_is_a_no_op() {
        let spec = linear_net(vec![1, 2, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let alpha = random_params(&spec, &mut rng);
        let action = LayerAction::rotation(1, DMatrix::identity(2, 2)).unwrap();
        let moved = apply_layer_symmetry(&spec, &alpha, &action).unwrap();
        assert_eq!(alpha.alpha, moved.alpha);
    }

    #[test]
    fn identity_activation_preserves_the_network_function() {
        let spec = linear_net(vec![1, 2, 1]);
        let layout = spec.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let alpha = random_params(&spec, &mut rng);
        let s = random_rotation(2, &mut rng);
        let action = LayerAction::rotation(1, s).unwrap();
        let moved = apply_layer_symmetry(&spec, &alpha, &action).unwrap();
        let j0 = seed(alpha.alpha.as_slice()).unwrap();
        let j1 = seed(moved.alpha.as_slice()).unwrap();
        for _ in 0..10 {
            let x = [rng.random_range(-2.0..2.0)];
            let a = forward(&spec, &layout, &j0, &x).unwrap();
            let b = forward(&spec, &layout, &j1, &x).unwrap();
            assert!((a[0].value - b[0].value).abs() <= 1e-12 * (1.0 + a[0].value.abs()));
        }
    }

    #[test]
    fn tanh_activation_breaks_the_symmetry() {
        let spec = FeedforwardSpec::fully_connected(vec![1, 2, 1], ActivationKind::Tanh).unwrap();
        let layout = spec.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let alpha = random_params(&spec, &mut rng);
        let s = random_rotation(2, &mut rng);
        let action = LayerAction::rotation(1, s).unwrap();
        let moved = apply_layer_symmetry(&spec, &alpha, &action).unwrap();
        let j0 = seed(alpha.alpha.as_slice()).unwrap();
        let j1 = seed(moved.alpha.as_slice()).unwrap();
        let mut max_diff = 0.0f64;
        for _ in 0..10 {
            let x = [rng.random_range(-2.0..2.0)];
            let a = forward(&spec, &layout, &j0, &x).unwrap();
            let b = forward(&spec, &layout, &j1, &x).unwrap();
            max_diff = max_diff.max((a[0].value - b[0].value).abs());
        }
        assert!(max_diff > 1e-6, "outputs unexpectedly agree: {max_diff}");
    }

    #[test]
    fn induced_map_is_orthogonal_on_parameter_space() {
        let spec = linear_net(vec![2, 3, 3, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for layer in 1..=2 {
            for _ in 0..5 {
                let alpha = random_params(&spec, &mut rng);
                let s = random_rotation(3, &mut rng);
                let action = LayerAction::rotation(layer, s).unwrap();
                let moved = apply_layer_symmetry(&spec, &alpha, &action).unwrap();
                assert!(
                    (moved.alpha.norm() - alpha.alpha.norm()).abs()
                        <= 1e-12 * (1.0 + alpha.alpha.norm())
                );
            }
        }
    }

    #[test]
    fn actions_on_the_same_layer_compose() {
        let spec = linear_net(vec![1, 2, 2, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let alpha = random_params(&spec, &mut rng);
        let s1 = random_rotation(2, &mut rng);
        let s2 = random_rotation(2, &mut rng);
        let a1 = LayerAction::rotation(2, s1.clone()).unwrap();
        let a2 = LayerAction::rotation(2, s2.clone()).unwrap();
        let via_steps =
            apply_layer_symmetry(&spec, &apply_layer_symmetry(&spec, &alpha, &a1).unwrap(), &a2)
                .unwrap();
        let combined = LayerAction::rotation(2, &s2 * &s1).unwrap();
        let direct = apply_layer_symmetry(&spec, &alpha, &combined).unwrap();
        assert!((via_steps.alpha - direct.alpha).norm() < 1e-13);
    }

    #[test]
    fn exp_of_skew_is_a_rotation_at_sampled_times() {
        let a = nalgebra::dmatrix![0.0, -1.0; 1.0, 0.0];
        let generator = SkewGenerator::new(1, a).unwrap();
        for &t in &[-2.0, -0.3, 0.0, 0.5, 1.7, 3.2] {
            let action = generator.rotation_at(t).unwrap();
            // Planar rotation by angle t.
            assert!((action.s[(0, 0)] - t.cos()).abs() < 1e-14);
            assert!((action.s[(1, 0)] - t.sin()).abs() < 1e-14);
        }
        let not_skew = nalgebra::dmatrix![0.0, 1.0; 1.0, 0.0];
        assert!(SkewGenerator::new(1, not_skew).is_err());
    }

    #[test]
    fn singular_action_is_rejected() {
        let s = nalgebra::dmatrix![1.0, 2.0; 2.0, 4.0];
        assert!(LayerAction::new(1, s).is_err());
    }

    fn fixture_objective(activation: ActivationKind, reg: RegularizerSpec) -> NetObjective {
        let spec = FeedforwardSpec::fully_connected(vec![1, 2, 2, 1], activation).unwrap();
        let pairs: Vec<_> = (-2..=2)
            .map(|k| (vec![0.5 * k as f64], vec![1.0 * k as f64]))
            .collect();
        let data = DataSet::new(pairs, 1, 1).unwrap();
        NetObjective::new(spec, data, LossKind::L2, reg).unwrap()
    }

    #[test]
    fn linear_loss_and_l2_regularized_loss_are_invariant() {
        let obj = fixture_objective(ActivationKind::Identity, RegularizerSpec::StandardL2(0.01));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let spec = obj.spec.clone();
        for _ in 0..10 {
            let alpha = random_params(&spec, &mut rng);
            let layer = rng.random_range(1..=2);
            let s = random_rotation(2, &mut rng);
            let action = LayerAction::rotation(layer, s).unwrap();
            let value = obj.eval_value(&alpha.alpha);
            let defect = check_invariance(&obj, &spec, &alpha, &action).unwrap();
            assert!(
                defect <= 1e-10 * (1.0 + value.abs()),
                "defect {defect} at value {value}"
            );
        }
    }

    #[test]
    fn identity_action_has_zero_defect() {
        let obj = fixture_objective(ActivationKind::Identity, RegularizerSpec::None);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let spec = obj.spec.clone();
        let alpha = random_params(&spec, &mut rng);
        let action = LayerAction::rotation(1, DMatrix::identity(2, 2)).unwrap();
        assert_eq!(check_invariance(&obj, &spec, &alpha, &action).unwrap(), 0.0);
    }

    #[test]
    fn nonconstant_generalized_coefficients_break_invariance() {
        let spec = FeedforwardSpec::fully_connected(vec![1, 2, 2, 1], ActivationKind::Identity)
            .unwrap();
        let d = spec.layout().dim();
        let eps = DVector::from_fn(d, |i, _| 0.01 + 0.02 * i as f64);
        let pairs: Vec<_> = (-2..=2)
            .map(|k| (vec![0.5 * k as f64], vec![1.0 * k as f64]))
            .collect();
        let data = DataSet::new(pairs, 1, 1).unwrap();
        let obj = NetObjective::new(
            spec.clone(),
            data,
            LossKind::L2,
            RegularizerSpec::GeneralizedL2(eps),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let alpha = random_params(&spec, &mut rng);
        let s = random_rotation(2, &mut rng);
        let action = LayerAction::rotation(1, s).unwrap();
        let defect = check_invariance(&obj, &spec, &alpha, &action).unwrap();
        assert!(defect > 1e-8, "defect unexpectedly small: {defect}");
    }

    #[test]
    fn orbit_through_a_found_minimizer_stays_critical_for_linear_nets() {
        use crate::critfind::{find_critical_points, SearchBox, SearchOptions};
        let obj = fixture_objective(ActivationKind::Identity, RegularizerSpec::StandardL2(0.01));
        let box_ = SearchBox::centered(obj.dim(), 3.0);
        let opts = SearchOptions {
            n_starts: 120,
            ..Default::default()
        };
        let search = find_critical_points(&obj, &box_, &opts);
        let minimizer = search
            .points
            .iter()
            .min_by(|a, b| a.value.total_cmp(&b.value))
            .expect("found at least one critical point");
        let spec = obj.spec.clone();
        let generator = SkewGenerator::new(1, nalgebra::dmatrix![0.0, -1.0; 1.0, 0.0]).unwrap();
        let ts: Vec<f64> = (0..16)
            .map(|k| k as f64 / 15.0 * std::f64::consts::FRAC_PI_2)
            .collect();
        let report = orbit_criticality(
            &obj,
            &spec,
            &ParamVector::new(minimizer.location.clone()),
            &generator,
            &ts,
            search.grad_tol,
        )
        .unwrap();
        assert!(report.max_grad_norm_on_orbit <= 1e-7);
        assert!(report.orbit_arc_length > 0.0);

        // A single sample at t = 0 reproduces the base point's gradient norm.
        let at_zero = orbit_criticality(
            &obj,
            &spec,
            &ParamVector::new(minimizer.location.clone()),
            &generator,
            &[0.0],
            search.grad_tol,
        )
        .unwrap();
        assert!((at_zero.max_grad_norm_on_orbit - minimizer.grad_norm).abs() <= 1e-14);
    }

    #[test]
    fn orbit_off_a_tanh_critical_point_leaves_the_critical_locus() {
        use crate::critfind::{find_critical_points, SearchBox, SearchOptions};
        let obj = fixture_objective(ActivationKind::Tanh, RegularizerSpec::StandardL2(0.01));
        let box_ = SearchBox::centered(obj.dim(), 3.0);
        let opts = SearchOptions {
            n_starts: 120,
            ..Default::default()
        };
        let search = find_critical_points(&obj, &box_, &opts);
        let minimizer = search
            .points
            .iter()
            .min_by(|a, b| a.value.total_cmp(&b.value))
            .expect("found at least one critical point");
        let spec = obj.spec.clone();
        let generator = SkewGenerator::new(1, nalgebra::dmatrix![0.0, -1.0; 1.0, 0.0]).unwrap();
        let ts: Vec<f64> = (0..16)
            .map(|k| k as f64 / 15.0 * std::f64::consts::FRAC_PI_2)
            .collect();
        let report = orbit_criticality(
            &obj,
            &spec,
            &ParamVector::new(minimizer.location.clone()),
            &generator,
            &ts,
            search.grad_tol,
        )
        .unwrap();
        assert!(
            report.max_grad_norm_on_orbit > 1e3 * search.grad_tol,
            "orbit stayed critical: {}",
            report.max_grad_norm_on_orbit
        );
    }

    #[test]
    fn orbit_requires_a_critical_base_point() {
        let obj = fixture_objective(ActivationKind::Identity, RegularizerSpec::StandardL2(0.01));
        let spec = obj.spec.clone();
        let generator = SkewGenerator::new(1, nalgebra::dmatrix![0.0, -1.0; 1.0, 0.0]).unwrap();
        let alpha = ParamVector::new(dvector![1.0, 0.5, -0.2, 0.3, 0.1, 0.7, -0.4, 0.2, 0.6, -0.1, 0.9, 0.3, 0.2]);
        let err = orbit_criticality(&obj, &spec, &alpha, &generator, &[0.0, 0.1], 1e-9);
        assert!(matches!(err, Err(SymmetryError::NotCritical { .. })));
    }
}
