//! Critical-point location and classification.
//!
//! The finder runs damped Newton iterations on the gradient system from a
//! low-discrepancy set of starts, deduplicates the converged points, and
//! classifies each via a full symmetric eigendecomposition of the Hessian.
//! Degeneracy is always a thresholded numerical judgment; reports carry the
//! smallest-magnitude eigenvalue so a reader can re-threshold without
//! re-running the search.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::reg::Objective;

#[derive(Debug, Error)]
pub enum CritError {
    #[error("point has gradient norm {grad_norm}, above the criticality tolerance {tol}")]
    NotCritical { grad_norm: f64, tol: f64 },
    #[error("point is not degenerate (min |eig| = {min_abs_eig})")]
    NotDegenerate { min_abs_eig: f64 },
    #[error("symmetric eigensolver did not converge")]
    EigenSolver,
    #[error("box bounds must be finite with lo < hi in every coordinate")]
    BadBox,
}

/// Axis-aligned search region.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchBox {
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
}

impl SearchBox {
    pub fn new(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self, CritError> {
        if lo.len() != hi.len()
            || lo.len() == 0
            || lo.iter().zip(hi.iter()).any(|(a, b)| !a.is_finite() || !b.is_finite() || a >= b)
        {
            return Err(CritError::BadBox);
        }
        Ok(SearchBox { lo, hi })
    }

    /// [-half, half]^d.
    pub fn centered(d: usize, half: f64) -> Self {
        SearchBox {
            lo: DVector::from_element(d, -half),
            hi: DVector::from_element(d, half),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn center(&self) -> DVector<f64> {
        (&self.lo + &self.hi) * 0.5
    }

    pub fn diagonal(&self) -> f64 {
        (&self.hi - &self.lo).norm()
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.iter()
            .enumerate()
            .all(|(i, &v)| v >= self.lo[i] && v <= self.hi[i])
    }
}

/// Solver knobs. `None` tolerances are resolved against the objective's
/// natural scale when the search starts.
#[derive(Debug, Clone)]
pub struct SearchOptions {
    pub n_starts: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Absolute gradient tolerance; default 1e-9 * (1 + ||grad at box center||).
    pub grad_tol: Option<f64>,
    /// Relative eigenvalue threshold for the degeneracy verdict.
    pub degeneracy_rel: f64,
    /// Pairwise merge radius; default 1e-6 * box diagonal.
    pub dedupe_radius: Option<f64>,
    pub lm_lambda_init: f64,
    pub lm_lambda_max: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            n_starts: 100,
            seed: 42,
            max_iters: 200,
            grad_tol: None,
            degeneracy_rel: 1e-6,
            dedupe_radius: None,
            lm_lambda_init: 1e-3,
            lm_lambda_max: 1e12,
        }
    }
}

/// A located critical point together with its classification.
#[derive(Debug, Clone)]
pub struct CriticalPoint {
    pub location: DVector<f64>,
    pub value: f64,
    pub grad_norm: f64,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Count of eigenvalues below -tau (tau = degeneracy_rel * max(1, max |eig|)).
    pub index: usize,
    pub min_abs_eig: f64,
    pub degenerate: bool,
    /// Index of the start whose trajectory produced this point.
    pub basin_start: usize,
}

impl CriticalPoint {
    /// max(1, largest |eigenvalue|): the scale degeneracy is judged against.
    pub fn eig_scale(&self) -> f64 {
        self.eigenvalues.iter().fold(1.0f64, |m, x| m.max(x.abs()))
    }

    /// min |eig| / max(1, max |eig|).
    pub fn rel_min_abs_eig(&self) -> f64 {
        self.min_abs_eig / self.eig_scale()
    }
}

/// Verdict over a whole search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LandscapeVerdict {
    MorseEvidence,
    DegenerateFound,
    PositiveDimensionalFound,
}

impl LandscapeVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            LandscapeVerdict::MorseEvidence => "morse_evidence",
            LandscapeVerdict::DegenerateFound => "degenerate_found",
            LandscapeVerdict::PositiveDimensionalFound => "positive_dimensional_found",
        }
    }
}

/// Search result: deduplicated points plus the resolved tolerances and
/// provenance needed to reproduce the run.
#[derive(Debug, Clone)]
pub struct CriticalSearch {
    pub points: Vec<CriticalPoint>,
    pub box_: SearchBox,
    pub n_starts: usize,
    pub seed: u64,
    pub grad_tol: f64,
    pub degeneracy_rel: f64,
    pub dedupe_radius: f64,
    pub n_eigen_failures: usize,
}

/// Aggregate landscape report.
#[derive(Debug, Clone)]
pub struct MorseReport {
    pub points: Vec<CriticalPoint>,
    pub verdict: LandscapeVerdict,
    /// True when the verdict is Morse-by-absence: no critical points found.
    pub vacuous: bool,
    pub grad_tol: f64,
    pub degeneracy_rel: f64,
    pub dedupe_radius: f64,
    pub n_starts: usize,
    pub seed: u64,
    pub box_: SearchBox,
}

/// Trace of a predictor-corrector walk along a near-null Hessian direction.
#[derive(Debug, Clone)]
pub struct NullTrace {
    pub samples: Vec<DVector<f64>>,
    pub max_grad_norm_along: f64,
    pub arc_length: f64,
    pub verdict: TraceVerdict,
    /// Set when the corrector failed before the requested number of steps.
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceVerdict {
    CriticalCurve,
    Isolated,
}

impl TraceVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            TraceVerdict::CriticalCurve => "critical_curve",
            TraceVerdict::Isolated => "isolated",
        }
    }
}

/// 1 + gradient norm at the box center: the scale against which gradient
/// tolerances are set.
pub fn grad_scale(obj: &dyn Objective, box_: &SearchBox) -> f64 {
    1.0 + obj.eval_jet(&box_.center()).grad.norm()
}

fn resolve_grad_tol(obj: &dyn Objective, box_: &SearchBox, opts: &SearchOptions) -> f64 {
    opts.grad_tol.unwrap_or_else(|| 1e-9 * grad_scale(obj, box_))
}

fn resolve_dedupe(box_: &SearchBox, opts: &SearchOptions) -> f64 {
    opts.dedupe_radius.unwrap_or_else(|| 1e-6 * box_.diagonal())
}

// --- low-discrepancy starts ------------------------------------------------

fn primes(count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut candidate = 2u64;
    while out.len() < count {
        if out.iter().all(|&p| candidate % p != 0) {
            out.push(candidate);
        }
        candidate += 1;
    }
    out
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut result = 0.0;
    while i > 0 {
        result += (i % base) as f64 * inv;
        i /= base;
        inv /= base as f64;
    }
    result
}

/// Halton points scaled into the box; index 0 is the box center.
fn starts(box_: &SearchBox, n: usize) -> Vec<DVector<f64>> {
    let d = box_.dim();
    let bases = primes(d);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        if k == 0 {
            out.push(box_.center());
            continue;
        }
        let x = DVector::from_fn(d, |j, _| {
            let u = radical_inverse(k as u64, bases[j]);
            box_.lo[j] + u * (box_.hi[j] - box_.lo[j])
        });
        out.push(x);
    }
    out
}

// --- Newton with Levenberg-Marquardt damping --------------------------------

/// Run one damped-Newton trajectory on grad f = 0. Returns the converged
/// point, or None if the trajectory diverged or ran out of iterations.
fn newton_trajectory(
    obj: &dyn Objective,
    x0: &DVector<f64>,
    grad_tol: f64,
    opts: &SearchOptions,
) -> Option<DVector<f64>> {
    let d = x0.len();
    let mut x = x0.clone();
    let mut jet = obj.eval_jet(&x);
    if !jet.is_finite() {
        return None;
    }
    let mut lambda = opts.lm_lambda_init;
    for _ in 0..opts.max_iters {
        let gnorm = jet.grad.norm();
        if gnorm <= grad_tol {
            return Some(x);
        }
        let hess = jet.hess.to_dmatrix();
        let mut stepped = false;
        while lambda <= opts.lm_lambda_max {
            let mut damped = hess.clone();
            for i in 0..d {
                damped[(i, i)] += lambda;
            }
            // Newton step; a failed solve falls back to a gradient step of
            // length ||g|| / lambda, which is what the damped system tends to
            // as lambda grows.
            let delta = match damped.lu().solve(&(-&jet.grad)) {
                Some(s) if s.iter().all(|v| v.is_finite()) => s,
                _ => &jet.grad * (-1.0 / lambda),
            };
            let trial = &x + &delta;
            let trial_jet = obj.eval_jet(&trial);
            if trial_jet.is_finite() && trial_jet.grad.norm() < gnorm {
                x = trial;
                jet = trial_jet;
                lambda = (lambda * 0.1).max(1e-15);
                stepped = true;
                break;
            }
            lambda *= 10.0;
        }
        if !stepped || x.norm() > 1e8 {
            return None;
        }
    }
    // One last check: the loop may have converged on its final step.
    if jet.grad.norm() <= grad_tol {
        return Some(x);
    }
    None
}

fn sorted_eigen(hess: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>), CritError> {
    let n = hess.nrows();
    let eig = nalgebra::SymmetricEigen::try_new(hess.clone(), f64::EPSILON, 100_000)
        .ok_or(CritError::EigenSolver)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    Ok((values, vectors))
}

/// Classify a point that already satisfies the criticality tolerance.
pub fn classify(
    obj: &dyn Objective,
    location: &DVector<f64>,
    grad_tol: f64,
    degeneracy_rel: f64,
    basin_start: usize,
) -> Result<CriticalPoint, CritError> {
    let jet = obj.eval_jet(location);
    let grad_norm = jet.grad.norm();
    if grad_norm > grad_tol {
        return Err(CritError::NotCritical {
            grad_norm,
            tol: grad_tol,
        });
    }
    let (eigenvalues, _) = sorted_eigen(&jet.hess.to_dmatrix())?;
    let scale = eigenvalues.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let tau = degeneracy_rel * scale;
    let index = eigenvalues.iter().filter(|&&l| l < -tau).count();
    let min_abs_eig = eigenvalues
        .iter()
        .fold(f64::INFINITY, |m, x| m.min(x.abs()));
    Ok(CriticalPoint {
        location: location.clone(),
        value: jet.value,
        grad_norm,
        degenerate: min_abs_eig <= tau,
        eigenvalues,
        index,
        min_abs_eig,
        basin_start,
    })
}

fn round_key(x: &DVector<f64>) -> Vec<i64> {
    x.iter().map(|&v| (v / 1e-12).round() as i64).collect()
}

/// Multistart search: damped Newton from each start, deterministic dedup
/// (sorted by rounded location; ties keep the smaller gradient norm),
/// classification of every survivor.
pub fn find_critical_points(
    obj: &dyn Objective,
    box_: &SearchBox,
    opts: &SearchOptions,
) -> CriticalSearch {
    assert!(opts.n_starts >= 1, "need at least one start");
    let grad_tol = resolve_grad_tol(obj, box_, opts);
    let dedupe_radius = resolve_dedupe(box_, opts);

    let mut converged: Vec<(DVector<f64>, f64, usize)> = Vec::new();
    for (k, x0) in starts(box_, opts.n_starts).into_iter().enumerate() {
        if let Some(x) = newton_trajectory(obj, &x0, grad_tol, opts) {
            let gn = obj.eval_jet(&x).grad.norm();
            converged.push((x, gn, k));
        }
    }

    // Canonical order before dedup so the report is independent of the order
    // in which trajectories finished.
    converged.sort_by(|a, b| round_key(&a.0).cmp(&round_key(&b.0)));

    let mut kept: Vec<(DVector<f64>, f64, usize)> = Vec::new();
    'cand: for cand in converged {
        for slot in kept.iter_mut() {
            if (&slot.0 - &cand.0).norm() <= dedupe_radius {
                if cand.1 < slot.1 {
                    *slot = cand;
                }
                continue 'cand;
            }
        }
        kept.push(cand);
    }

    let mut points = Vec::new();
    let mut n_eigen_failures = 0;
    for (loc, _, start) in kept {
        match classify(obj, &loc, grad_tol, opts.degeneracy_rel, start) {
            Ok(p) => points.push(p),
            Err(CritError::EigenSolver) => n_eigen_failures += 1,
            Err(_) => {}
        }
    }

    CriticalSearch {
        points,
        box_: box_.clone(),
        n_starts: opts.n_starts,
        seed: opts.seed,
        grad_tol,
        degeneracy_rel: opts.degeneracy_rel,
        dedupe_radius,
        n_eigen_failures,
    }
}

/// Walk along the smallest-|eigenvalue| direction of a degenerate point:
/// predictor along the near-null eigenvector, corrector by Newton restricted
/// to the hyperplane orthogonal to the predictor direction.
pub fn trace_null_direction(
    obj: &dyn Objective,
    point: &CriticalPoint,
    grad_tol: f64,
    step: f64,
    n_steps: usize,
) -> Result<NullTrace, CritError> {
    if !point.degenerate {
        return Err(CritError::NotDegenerate {
            min_abs_eig: point.min_abs_eig,
        });
    }
    let d = point.location.len();
    let mut x = point.location.clone();
    let mut dir = null_direction(obj, &x)?;
    let mut samples = vec![x.clone()];
    let mut max_grad = point.grad_norm;
    let mut arc = 0.0;
    let mut truncated = false;

    for _ in 0..n_steps {
        let pred = &x + &dir * step;
        match correct_in_hyperplane(obj, &pred, &dir, grad_tol, step) {
            Some(z) => {
                let gn = obj.eval_jet(&z).grad.norm();
                max_grad = max_grad.max(gn);
                arc += (&z - &x).norm();
                x = z;
                samples.push(x.clone());
                if d > 1 {
                    let mut v = null_direction(obj, &x)?;
                    if v.dot(&dir) < 0.0 {
                        v = -v;
                    }
                    dir = v;
                }
            }
            None => {
                truncated = true;
                break;
            }
        }
    }

    let verdict = if !truncated && max_grad <= grad_tol {
        TraceVerdict::CriticalCurve
    } else {
        TraceVerdict::Isolated
    };
    Ok(NullTrace {
        samples,
        max_grad_norm_along: max_grad,
        arc_length: arc,
        verdict,
        truncated,
    })
}

fn null_direction(obj: &dyn Objective, x: &DVector<f64>) -> Result<DVector<f64>, CritError> {
    let jet = obj.eval_jet(x);
    let (values, vectors) = sorted_eigen(&jet.hess.to_dmatrix())?;
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if v.abs() < values[best].abs() {
            best = i;
        }
    }
    Ok(vectors.column(best).into_owned())
}

/// Orthonormal basis of the hyperplane orthogonal to unit vector `v`,
/// via the Householder reflector that maps e_1 to (minus) v.
fn hyperplane_basis(v: &DVector<f64>) -> DMatrix<f64> {
    let d = v.len();
    let mut u = v.clone();
    u[0] += v[0].signum() * v.norm();
    let nn = u.norm_squared();
    let mut p = DMatrix::identity(d, d);
    if nn > 0.0 {
        p -= (&u * u.transpose()) * (2.0 / nn);
    }
    p.columns(1, d - 1).into_owned()
}

fn correct_in_hyperplane(
    obj: &dyn Objective,
    pred: &DVector<f64>,
    dir: &DVector<f64>,
    grad_tol: f64,
    step: f64,
) -> Option<DVector<f64>> {
    let d = pred.len();
    if d == 1 {
        return Some(pred.clone());
    }
    let q = hyperplane_basis(dir);
    let mut z = pred.clone();
    let mut lambda = 1e-9;
    for _ in 0..30 {
        let jet = obj.eval_jet(&z);
        if !jet.is_finite() {
            return None;
        }
        let gr = q.transpose() * &jet.grad;
        if gr.norm() <= grad_tol {
            return Some(z);
        }
        let hr = q.transpose() * jet.hess.to_dmatrix() * &q;
        let mut delta = None;
        while lambda <= 1e12 {
            let mut damped = hr.clone();
            for i in 0..d - 1 {
                damped[(i, i)] += lambda;
            }
            if let Some(s) = damped.lu().solve(&(-&gr)) {
                if s.iter().all(|v| v.is_finite()) {
                    delta = Some(s);
                    break;
                }
            }
            lambda *= 10.0;
        }
        let delta = delta?;
        z += &q * delta;
        lambda = (lambda * 0.1).max(1e-9);
        if (&z - pred).norm() > 10.0 * step.abs().max(1e-6) {
            return None;
        }
    }
    None
}

/// Combine classified points and null traces into the aggregate verdict.
/// Positive-dimensional evidence dominates degeneracy, which dominates the
/// Morse verdict; an empty point list is Morse vacuously.
pub fn morse_verdict(search: &CriticalSearch, traces: &[NullTrace]) -> MorseReport {
    let verdict = if traces.iter().any(|t| t.verdict == TraceVerdict::CriticalCurve) {
        LandscapeVerdict::PositiveDimensionalFound
    } else if search.points.iter().any(|p| p.degenerate) {
        LandscapeVerdict::DegenerateFound
    } else {
        LandscapeVerdict::MorseEvidence
    };
    MorseReport {
        points: search.points.clone(),
        vacuous: search.points.is_empty(),
        verdict,
        grad_tol: search.grad_tol,
        degeneracy_rel: search.degeneracy_rel,
        dedupe_radius: search.dedupe_radius,
        n_starts: search.n_starts,
        seed: search.seed,
        box_: search.box_.clone(),
    }
}

impl MorseReport {
    /// One row per accepted point. Column order is frozen:
    /// x0..x{d-1}, grad_norm, eig0..eig{d-1}, index, degenerate.
    pub fn to_csv(&self) -> String {
        let d = self.box_.dim();
        let mut out = String::new();
        for i in 0..d {
            out.push_str(&format!("x{i},"));
        }
        out.push_str("grad_norm,");
        for i in 0..d {
            out.push_str(&format!("eig{i},"));
        }
        out.push_str("index,degenerate\n");
        for p in &self.points {
            for v in p.location.iter() {
                out.push_str(&format!("{v:.16e},"));
            }
            out.push_str(&format!("{:.16e},", p.grad_norm));
            for v in &p.eigenvalues {
                out.push_str(&format!("{v:.16e},"));
            }
            out.push_str(&format!("{},{}\n", p.index, p.degenerate));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reg::FnObjective;

    fn bowl() -> FnObjective {
        FnObjective::new(2, |x| &x[0].square() + &x[1].square())
    }

    fn saddle() -> FnObjective {
        FnObjective::new(2, |x| &x[0].square() - &x[1].square())
    }

    fn radial_quartic(eps: f64) -> FnObjective {
        FnObjective::new(2, move |x| {
            let r2 = &x[0].square() + &x[1].square();
            &r2.square().scale(-0.25) + &r2.scale(0.5 * eps)
        })
    }

    #[test]
    fn convex_quadratic_has_single_minimum() {
        let obj = bowl();
        let box_ = SearchBox::centered(2, 2.0);
        let opts = SearchOptions {
            n_starts: 10,
            ..Default::default()
        };
        let search = find_critical_points(&obj, &box_, &opts);
        assert_eq!(search.points.len(), 1);
        let p = &search.points[0];
        assert!(p.location.norm() < 1e-9);
        assert_eq!(p.index, 0);
        assert!(!p.degenerate);
        assert_eq!(p.eigenvalues, vec![2.0, 2.0]);
    }

    #[test]
    fn saddle_has_index_one() {
        let obj = saddle();
        let box_ = SearchBox::centered(2, 2.0);
        let opts = SearchOptions {
            n_starts: 20,
            ..Default::default()
        };
        let search = find_critical_points(&obj, &box_, &opts);
        assert_eq!(search.points.len(), 1);
        let p = &search.points[0];
        assert!(p.location.norm() < 1e-9);
        assert_eq!(p.index, 1);
        assert!(!p.degenerate);
    }

    #[test]
    fn radial_quartic_finds_origin_and_circle() {
        let obj = radial_quartic(0.25);
        let box_ = SearchBox::centered(2, 2.0);
        let opts = SearchOptions {
            n_starts: 200,
            ..Default::default()
        };
        let search = find_critical_points(&obj, &box_, &opts);
        let mut on_circle = 0;
        let mut at_origin = 0;
        for p in &search.points {
            let r = p.location.norm();
            if r < 1e-6 {
                at_origin += 1;
            } else {
                assert!((r - 0.5).abs() <= 1e-8, "stray point at radius {r}");
                assert!(p.degenerate);
                on_circle += 1;
            }
        }
        assert_eq!(at_origin, 1);
        assert!(on_circle >= 8, "only {on_circle} circle points");
    }

    #[test]
    fn classify_zero_hessian_as_degenerate() {
        // x^2 y^2 at the origin: all second partials vanish.
        let obj = FnObjective::new(2, |x| {
            let p = &x[0] * &x[1];
            p.square()
        });
        let origin = DVector::zeros(2);
        let p = classify(&obj, &origin, 1e-9, 1e-6, 0).unwrap();
        assert!(p.degenerate);
        assert_eq!(p.eigenvalues, vec![0.0, 0.0]);
        assert_eq!(p.index, 0);
    }

    #[test]
    fn classify_rejects_noncritical_points() {
        let obj = bowl();
        let p = DVector::from_vec(vec![0.5, 0.0]);
        assert!(matches!(
            classify(&obj, &p, 1e-9, 1e-6, 0),
            Err(CritError::NotCritical { .. })
        ));
    }

    #[test]
    fn trace_follows_the_critical_circle() {
        let obj = radial_quartic(0.25);
        let box_ = SearchBox::centered(2, 2.0);
        let opts = SearchOptions {
            n_starts: 100,
            ..Default::default()
        };
        let search = find_critical_points(&obj, &box_, &opts);
        let start = search
            .points
            .iter()
            .find(|p| p.degenerate && p.location.norm() > 0.1)
            .expect("a circle point");
        let trace =
            trace_null_direction(&obj, start, search.grad_tol, 0.01, 120).unwrap();
        assert_eq!(trace.verdict, TraceVerdict::CriticalCurve);
        assert!(trace.arc_length >= 1.0);
        for s in &trace.samples {
            assert!((s.norm() - 0.5).abs() <= 1e-6);
        }
        // Consecutive samples are step-length apart within 50%.
        for w in trace.samples.windows(2) {
            let gap = (&w[1] - &w[0]).norm();
            assert!(gap >= 0.005 && gap <= 0.015, "gap {gap}");
        }
    }

    #[test]
    fn trace_off_a_pinched_degenerate_point_is_isolated() {
        // x^2 - y^4: degenerate at the origin, but the gradient is nonzero
        // everywhere along the null direction off the origin.
        let obj = FnObjective::new(2, |x| &x[0].square() - &x[1].square().square());
        let origin = DVector::zeros(2);
        let p = classify(&obj, &origin, 1e-9, 1e-6, 0).unwrap();
        assert!(p.degenerate);
        let trace = trace_null_direction(&obj, &p, 1e-9, 0.05, 10).unwrap();
        assert_eq!(trace.verdict, TraceVerdict::Isolated);
        assert!(trace.max_grad_norm_along > 1e-9);
    }

    #[test]
    fn trace_requires_a_degenerate_point() {
        let obj = bowl();
        let p = classify(&obj, &DVector::zeros(2), 1e-9, 1e-6, 0).unwrap();
        assert!(matches!(
            trace_null_direction(&obj, &p, 1e-9, 0.05, 10),
            Err(CritError::NotDegenerate { .. })
        ));
    }

    #[test]
    fn verdict_precedence_and_vacuous_case() {
        let obj = radial_quartic(0.25);
        let box_ = SearchBox::centered(2, 2.0);
        let opts = SearchOptions {
            n_starts: 100,
            ..Default::default()
        };
        let search = find_critical_points(&obj, &box_, &opts);
        let no_traces = morse_verdict(&search, &[]);
        assert_eq!(no_traces.verdict, LandscapeVerdict::DegenerateFound);
        let start = search.points.iter().find(|p| p.degenerate).unwrap();
        let trace = trace_null_direction(&obj, start, search.grad_tol, 0.01, 50).unwrap();
        let with_trace = morse_verdict(&search, &[trace]);
        assert_eq!(
            with_trace.verdict,
            LandscapeVerdict::PositiveDimensionalFound
        );

        // No critical points in the box: vacuous Morse evidence.
        let shifted = FnObjective::new(2, |x| x[0].clone() + x[1].clone());
        let search = find_critical_points(&shifted, &box_, &opts);
        let report = morse_verdict(&search, &[]);
        assert!(report.points.is_empty());
        assert!(report.vacuous);
        assert_eq!(report.verdict, LandscapeVerdict::MorseEvidence);
    }

    #[test]
    fn reports_are_deterministic() {
        let obj = radial_quartic(0.09);
        let box_ = SearchBox::centered(2, 2.0);
        let opts = SearchOptions {
            n_starts: 150,
            ..Default::default()
        };
        let a = morse_verdict(&find_critical_points(&obj, &box_, &opts), &[]);
        let b = morse_verdict(&find_critical_points(&obj, &box_, &opts), &[]);
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn no_two_accepted_points_are_within_the_dedupe_radius() {
        let obj = radial_quartic(1.0);
        let box_ = SearchBox::centered(2, 2.0);
        let opts = SearchOptions {
            n_starts: 300,
            ..Default::default()
        };
        let search = find_critical_points(&obj, &box_, &opts);
        for (i, a) in search.points.iter().enumerate() {
            for b in search.points.iter().skip(i + 1) {
                assert!((&a.location - &b.location).norm() > search.dedupe_radius);
            }
        }
    }

    #[test]
    fn grid_sign_change_cells_are_covered_by_accepted_points() {
        // Oracle: a 41x41 grid; every cell whose corners show a sign change
        // in both gradient components must contain an accepted point or lie
        // within the dedupe radius of one.
        let cases: Vec<FnObjective> = vec![bowl(), saddle(), radial_quartic(0.25)];
        for obj in cases {
            let box_ = SearchBox::centered(2, 2.0);
            let opts = SearchOptions {
                n_starts: 400,
                ..Default::default()
            };
            let search = find_critical_points(&obj, &box_, &opts);
            let n = 41usize;
            let hx = (box_.hi[0] - box_.lo[0]) / (n - 1) as f64;
            let hy = (box_.hi[1] - box_.lo[1]) / (n - 1) as f64;
            let grad_at = |x: f64, y: f64| {
                let jet = obj.eval_jet(&DVector::from_vec(vec![x, y]));
                (jet.grad[0], jet.grad[1])
            };
            for i in 0..n - 1 {
                for j in 0..n - 1 {
                    let x0 = box_.lo[0] + i as f64 * hx;
                    let y0 = box_.lo[1] + j as f64 * hy;
                    let corners = [
                        grad_at(x0, y0),
                        grad_at(x0 + hx, y0),
                        grad_at(x0, y0 + hy),
                        grad_at(x0 + hx, y0 + hy),
                    ];
                    // Corner values at machine zero carry no sign information
                    // (grid corners can land exactly on the critical locus).
                    let sign_change = |sel: fn(&(f64, f64)) -> f64| {
                        let mut pos = false;
                        let mut neg = false;
                        for c in &corners {
                            let v = sel(c);
                            pos |= v > 1e-12;
                            neg |= v < -1e-12;
                        }
                        pos && neg
                    };
                    if sign_change(|c| c.0) && sign_change(|c| c.1) {
                        let hit = search.points.iter().any(|p| {
                            let px = p.location[0];
                            let py = p.location[1];
                            let r = search.dedupe_radius;
                            px >= x0 - r
                                && px <= x0 + hx + r
                                && py >= y0 - r
                                && py <= y0 + hy + r
                        });
                        assert!(hit, "uncovered sign-change cell at ({x0}, {y0})");
                    }
                }
            }
        }
    }
}
