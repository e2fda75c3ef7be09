//! The radially symmetric quartic f(x,y) = -1/4 (x^2+y^2)^2 with an L2
//! perturbation: the textbook case of a function that stays non-Morse for
//! every positive perturbation strength, because its critical locus is a
//! whole circle.

use nalgebra::DVector;

use crate::critfind::{
    find_critical_points, morse_verdict, trace_null_direction, CriticalPoint, LandscapeVerdict,
    SearchBox, SearchOptions, TraceVerdict,
};
use crate::jet::ScalarJet2;
use crate::reg::Objective;

/// f_eps(x, y) = -1/4 (x^2+y^2)^2 + eps/2 (x^2+y^2), evaluable on jets.
#[derive(Debug, Clone, Copy)]
pub struct RadialQuartic {
    pub eps: f64,
}

impl Objective for RadialQuartic {
    fn dim(&self) -> usize {
        2
    }

    fn eval_jets(&self, alpha: &[ScalarJet2]) -> ScalarJet2 {
        let r2 = &alpha[0].square() + &alpha[1].square();
        &r2.square().scale(-0.25) + &r2.scale(0.5 * self.eps)
    }
}

/// Every measurement the radial scenario produces; assertions against these
/// live in the test suites, not here.
#[derive(Debug, Clone)]
pub struct RadialVerifyReport {
    pub eps: f64,
    pub n_points: usize,
    pub n_circle_points: usize,
    /// Mean radius of the non-origin points, when any exist.
    pub circle_radius_found: Option<f64>,
    /// max | ||p|| - sqrt(eps) | over non-origin points.
    pub max_radius_err: f64,
    /// Largest smallest-|eigenvalue| over the circle points.
    pub max_circle_min_abs_eig: f64,
    /// max | lambda_transverse - (-2 eps) | over the circle points.
    pub max_second_eig_err: f64,
    pub origin: Option<CriticalPoint>,
    /// Distance between the trace's one-full-winding point and its start.
    pub loop_closure_dist: Option<f64>,
    pub trace_arc_length: Option<f64>,
    pub trace_verdict: Option<TraceVerdict>,
    pub verdict: LandscapeVerdict,
    pub grad_tol: f64,
}

/// Locate and classify the critical set of the perturbed quartic, walk the
/// null direction around the circle when there is one, and report every
/// measured quantity. For eps <= 0 the critical set is the origin alone and
/// the scenario still runs.
pub fn radial_verify(eps: f64, seed: u64) -> RadialVerifyReport {
    let obj = RadialQuartic { eps };
    let half = if eps > 0.0 { 2.0f64.max(2.0 * eps.sqrt()) } else { 2.0 };
    let box_ = SearchBox::centered(2, half);
    let opts = SearchOptions {
        n_starts: 300,
        seed,
        ..Default::default()
    };
    let search = find_critical_points(&obj, &box_, &opts);

    let origin_radius = if eps > 0.0 { 0.5 * eps.sqrt() } else { 0.1 };
    let mut circle: Vec<&CriticalPoint> = Vec::new();
    let mut origin: Option<CriticalPoint> = None;
    for p in &search.points {
        if p.location.norm() < origin_radius {
            let better = origin
                .as_ref()
                .map_or(true, |o| p.location.norm() < o.location.norm());
            if better {
                origin = Some(p.clone());
            }
        } else {
            circle.push(p);
        }
    }

    let mut max_radius_err = 0.0f64;
    let mut max_circle_min_abs_eig = 0.0f64;
    let mut max_second_eig_err = 0.0f64;
    let mut radius_sum = 0.0;
    for p in &circle {
        let r = p.location.norm();
        radius_sum += r;
        if eps > 0.0 {
            max_radius_err = max_radius_err.max((r - eps.sqrt()).abs());
        }
        max_circle_min_abs_eig = max_circle_min_abs_eig.max(p.min_abs_eig);
        let transverse = p
            .eigenvalues
            .iter()
            .copied()
            .min_by(|a, b| (a + 2.0 * eps).abs().total_cmp(&(b + 2.0 * eps).abs()))
            .unwrap_or(f64::NAN);
        max_second_eig_err = max_second_eig_err.max((transverse + 2.0 * eps).abs());
    }
    let circle_radius_found = if circle.is_empty() {
        None
    } else {
        Some(radius_sum / circle.len() as f64)
    };

    let mut traces = Vec::new();
    let mut loop_closure_dist = None;
    let mut trace_arc_length = None;
    let mut trace_verdict = None;
    if let Some(start) = circle.first().filter(|p| p.degenerate) {
        let radius = eps.sqrt();
        let step = radius / 100.0;
        // Enough steps to wind past a full turn, plus margin.
        let n_steps = (2.0 * std::f64::consts::PI * radius / step).ceil() as usize + 10;
        if let Ok(trace) = trace_null_direction(&obj, start, search.grad_tol, step, n_steps) {
            loop_closure_dist = winding_closure(&trace.samples);
            trace_arc_length = Some(trace.arc_length);
            trace_verdict = Some(trace.verdict);
            traces.push(trace);
        }
    }

    let report = morse_verdict(&search, &traces);
    RadialVerifyReport {
        eps,
        n_points: search.points.len(),
        n_circle_points: circle.len(),
        circle_radius_found,
        max_radius_err,
        max_circle_min_abs_eig,
        max_second_eig_err,
        origin,
        loop_closure_dist,
        trace_arc_length,
        trace_verdict,
        verdict: report.verdict,
        grad_tol: search.grad_tol,
    }
}

/// Accumulate the winding angle of a planar polyline about the origin and
/// return the distance from the start to the (interpolated) point where the
/// winding first reaches a full turn.
fn winding_closure(samples: &[DVector<f64>]) -> Option<f64> {
    if samples.len() < 3 {
        return None;
    }
    let angle = |p: &DVector<f64>| p[1].atan2(p[0]);
    let mut winding = 0.0;
    let mut prev = angle(&samples[0]);
    let target = 2.0 * std::f64::consts::PI;
    for k in 1..samples.len() {
        let a = angle(&samples[k]);
        let mut delta = a - prev;
        if delta > std::f64::consts::PI {
            delta -= target;
        } else if delta < -std::f64::consts::PI {
            delta += target;
        }
        let next_winding = winding + delta;
        if next_winding.abs() >= target {
            // Interpolate within this segment to exactly one turn.
            let t = (target - winding.abs()) / delta.abs();
            let p = &samples[k - 1] + (&samples[k] - &samples[k - 1]) * t;
            return Some((p - &samples[0]).norm());
        }
        winding = next_winding;
        prev = a;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positive_eps_yields_the_critical_circle() {
        let r = radial_verify(0.25, 42);
        assert!(r.n_circle_points >= 8, "{} circle points", r.n_circle_points);
        assert!((r.circle_radius_found.unwrap() - 0.5).abs() < 1e-8);
        assert!(r.max_radius_err <= 1e-8);
        assert!(r.max_circle_min_abs_eig <= 1e-8);
        assert!(r.max_second_eig_err <= 1e-6);
        assert_eq!(r.verdict, LandscapeVerdict::PositiveDimensionalFound);
        assert!(r.loop_closure_dist.unwrap() <= 1e-4);
        let origin = r.origin.unwrap();
        assert_eq!(origin.index, 0);
        assert!(!origin.degenerate);
    }

    #[test]
    fn negative_eps_leaves_only_a_nondegenerate_maximum() {
        let r = radial_verify(-0.1, 42);
        assert_eq!(r.n_circle_points, 0);
        let origin = r.origin.unwrap();
        assert_eq!(origin.index, 2);
        assert!(!origin.degenerate);
        // Hessian at the origin is eps * I.
        for ev in &origin.eigenvalues {
            assert!((ev + 0.1).abs() < 1e-12);
        }
        assert_eq!(r.verdict, LandscapeVerdict::MorseEvidence);
    }

    #[test]
    fn zero_eps_makes_the_origin_degenerate() {
        let r = radial_verify(0.0, 42);
        assert_eq!(r.n_circle_points, 0);
        let origin = r.origin.unwrap();
        assert!(origin.degenerate);
        assert_eq!(r.verdict, LandscapeVerdict::DegenerateFound);
    }
}
