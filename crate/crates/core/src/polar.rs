//! Rank condition checker for functions of polar coordinates (rho, theta)
//! with rho > 0: at every point where the angular derivative vanishes, the
//! 1x2 matrix (d_rho d_theta L, d2_theta L) must have full rank for the
//! linear-in-rho perturbation L + eps*rho to be Morse for almost every eps.
//! A radially symmetric L fails the condition everywhere, which is exactly
//! the circle-of-critical-points failure mode.

use nalgebra::DVector;
use thiserror::Error;

use crate::critfind::SearchBox;
use crate::jet::{seed, ScalarJet2};
use crate::reg::Objective;

#[derive(Debug, Error)]
pub enum PolarError {
    #[error("polar domain needs 0 < rho_min < rho_max, got [{0}, {1}]")]
    BadDomain(f64, f64),
    #[error("search box must lie inside the rho > 0 domain")]
    BoxOutsideDomain,
}

/// Twice-differentiable function of (rho, theta), rho > 0, on jets.
pub struct PolarFunction {
    rho_min: f64,
    rho_max: f64,
    f: Box<dyn Fn(&ScalarJet2, &ScalarJet2) -> ScalarJet2 + Sync>,
}

impl PolarFunction {
    pub fn new<F>(rho_min: f64, rho_max: f64, f: F) -> Result<Self, PolarError>
    where
        F: Fn(&ScalarJet2, &ScalarJet2) -> ScalarJet2 + Sync + 'static,
    {
        if !(rho_min > 0.0 && rho_min < rho_max && rho_max.is_finite()) {
            return Err(PolarError::BadDomain(rho_min, rho_max));
        }
        Ok(PolarFunction {
            rho_min,
            rho_max,
            f: Box::new(f),
        })
    }

    pub fn rho_range(&self) -> (f64, f64) {
        (self.rho_min, self.rho_max)
    }

    pub fn eval_jet(&self, rho: f64, theta: f64) -> ScalarJet2 {
        let jets = seed(&[rho, theta]).expect("two coordinates");
        (self.f)(&jets[0], &jets[1])
    }
}

/// L + eps * rho as a search objective. Off the rho > 0 half-plane the value
/// is non-finite, which makes the critical-point finder discard trajectories
/// that leave the chart.
pub struct PerturbedPolar<'a> {
    pub polar: &'a PolarFunction,
    pub eps: f64,
}

impl Objective for PerturbedPolar<'_> {
    fn dim(&self) -> usize {
        2
    }

    fn eval_jets(&self, alpha: &[ScalarJet2]) -> ScalarJet2 {
        let d = alpha[0].dim();
        if alpha[0].value <= 0.0 {
            return ScalarJet2::constant(f64::NAN, d);
        }
        let l = (self.polar.f)(&alpha[0], &alpha[1]);
        &l + &alpha[0].scale(self.eps)
    }
}

/// One examined angular-critical point.
#[derive(Debug, Clone)]
pub struct JetConditionPoint {
    pub point: [f64; 2],
    /// Numerical rank of (d_rho d_theta L, d2_theta L), 0 or 1.
    pub rank: usize,
    pub passes: bool,
}

/// Find points with d_theta L = 0 from `n_starts` low-discrepancy starts
/// (Newton in theta at fixed rho, then a Gauss-Newton polish in both
/// variables on the same constraint) and evaluate the rank condition at
/// each. An empty result means no angular-critical points were found, which
/// passes vacuously.
pub fn jet_condition_check(
    polar: &PolarFunction,
    box_: &SearchBox,
    n_starts: usize,
) -> Result<Vec<JetConditionPoint>, PolarError> {
    if box_.lo[0] < polar.rho_min || box_.hi[0] > polar.rho_max {
        return Err(PolarError::BoxOutsideDomain);
    }
    let center = box_.center();
    let tol = 1e-10 * (1.0 + polar.eval_jet(center[0], center[1]).grad.norm());

    let mut found: Vec<(f64, f64)> = Vec::new();
    'start: for k in 0..n_starts {
        // Plain 2-d Halton over the box.
        let u = radical(k as u64 + 1, 2);
        let v = radical(k as u64 + 1, 3);
        let rho = box_.lo[0] + u * (box_.hi[0] - box_.lo[0]);
        let mut theta = box_.lo[1] + v * (box_.hi[1] - box_.lo[1]);

        // Newton on g(theta) = d_theta L at fixed rho.
        let mut converged = false;
        for _ in 0..60 {
            let jet = polar.eval_jet(rho, theta);
            let g = jet.grad[1];
            if g.abs() <= tol {
                converged = true;
                break;
            }
            let gp = jet.hess.get(1, 1);
            if gp.abs() < 1e-14 {
                continue 'start;
            }
            let step = (-g / gp).clamp(-1.0, 1.0);
            theta += step;
            if !theta.is_finite() {
                continue 'start;
            }
        }
        if !converged {
            continue;
        }

        // Polish in (rho, theta) with the minimal-norm Gauss-Newton step on
        // the single constraint; the Jacobian row is the rank-check matrix.
        let mut p = (rho, theta);
        for _ in 0..5 {
            let jet = polar.eval_jet(p.0, p.1);
            let g = jet.grad[1];
            let row = [jet.hess.get(0, 1), jet.hess.get(1, 1)];
            let nn = row[0] * row[0] + row[1] * row[1];
            if nn < 1e-28 || g.abs() <= tol * 0.01 {
                break;
            }
            p.0 -= g * row[0] / nn;
            p.1 -= g * row[1] / nn;
            p.0 = p.0.clamp(polar.rho_min, polar.rho_max);
        }

        let margin = 1e-6 * box_.diagonal();
        let inside = p.0 >= box_.lo[0] - margin
            && p.0 <= box_.hi[0] + margin
            && p.1 >= box_.lo[1] - margin
            && p.1 <= box_.hi[1] + margin;
        if inside && polar.eval_jet(p.0, p.1).grad[1].abs() <= tol {
            found.push(p);
        }
    }

    // Deterministic order, then dedupe by distance.
    found.sort_by(|a, b| {
        let ka = ((a.0 / 1e-9).round() as i64, (a.1 / 1e-9).round() as i64);
        let kb = ((b.0 / 1e-9).round() as i64, (b.1 / 1e-9).round() as i64);
        ka.cmp(&kb)
    });
    let dedupe = 1e-6 * box_.diagonal();
    let mut points: Vec<(f64, f64)> = Vec::new();
    for cand in found {
        if points
            .iter()
            .all(|p| ((p.0 - cand.0).powi(2) + (p.1 - cand.1).powi(2)).sqrt() > dedupe)
        {
            points.push(cand);
        }
    }

    Ok(points
        .into_iter()
        .map(|(rho, theta)| {
            let jet = polar.eval_jet(rho, theta);
            let row = DVector::from_vec(vec![jet.hess.get(0, 1), jet.hess.get(1, 1)]);
            // The lone singular value of a 1x2 matrix is its norm; numerical
            // rank with relative threshold 1e-8.
            let sigma = row.norm();
            let rank = usize::from(sigma > 1e-8 * sigma.max(1.0));
            JetConditionPoint {
                point: [rho, theta],
                rank,
                passes: rank == 1,
            }
        })
        .collect())
}

fn radical(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut result = 0.0;
    while i > 0 {
        result += (i % base) as f64 * inv;
        i /= base;
        inv /= base as f64;
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critfind::{find_critical_points, morse_verdict, LandscapeVerdict, SearchOptions};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rho_cos_theta() -> PolarFunction {
        PolarFunction::new(0.25, 4.0, |rho, theta| rho * &theta.cos()).unwrap()
    }

    fn test_box() -> SearchBox {
        SearchBox::new(
            DVector::from_vec(vec![0.5, -std::f64::consts::PI]),
            DVector::from_vec(vec![2.0, std::f64::consts::PI]),
        )
        .unwrap()
    }

    #[test]
    fn rho_cos_theta_passes_everywhere() {
        let points = jet_condition_check(&rho_cos_theta(), &test_box(), 80).unwrap();
        assert!(!points.is_empty());
        for p in &points {
            // Angular criticality happens at theta in {0, +-pi}.
            let s = p.point[1].sin().abs();
            assert!(s < 1e-8, "theta = {}", p.point[1]);
            assert!(p.passes, "rank {} at {:?}", p.rank, p.point);
        }
    }

    #[test]
    fn radially_symmetric_function_fails_everywhere() {
        let radial =
            PolarFunction::new(0.25, 4.0, |rho, _| rho.square().scale(-0.25)).unwrap();
        let points = jet_condition_check(&radial, &test_box(), 40).unwrap();
        assert!(!points.is_empty());
        for p in &points {
            assert_eq!(p.rank, 0);
            assert!(!p.passes);
        }
    }

    #[test]
    fn quadratic_valley_in_theta_passes_near_zero() {
        // L = rho * theta^2 / 2: matrix (theta, rho) = (0, rho) at theta = 0.
        let valley =
            PolarFunction::new(0.25, 4.0, |rho, theta| (rho * &theta.square()).scale(0.5))
                .unwrap();
        let box_ = SearchBox::new(
            DVector::from_vec(vec![0.5, -1.0]),
            DVector::from_vec(vec![2.0, 1.0]),
        )
        .unwrap();
        let points = jet_condition_check(&valley, &box_, 60).unwrap();
        assert!(!points.is_empty());
        for p in &points {
            assert!(p.point[1].abs() < 1e-8);
            assert!(p.passes);
        }
    }

    #[test]
    fn theta_translation_shifts_points_and_preserves_verdicts() {
        let c = 0.3;
        let base = rho_cos_theta();
        let shifted =
            PolarFunction::new(0.25, 4.0, move |rho, theta| rho * &theta.shift(c).cos()).unwrap();
        // A theta window in which the in-box roots of the two functions
        // correspond one to one under the shift.
        let box_ = SearchBox::new(
            DVector::from_vec(vec![0.5, -1.5]),
            DVector::from_vec(vec![2.0, 1.5]),
        )
        .unwrap();
        let a = jet_condition_check(&base, &box_, 80).unwrap();
        let b = jet_condition_check(&shifted, &box_, 80).unwrap();
        let mut thetas_a: Vec<f64> = a.iter().map(|p| p.point[1]).collect();
        let mut thetas_b: Vec<f64> = b.iter().map(|p| p.point[1] + c).collect();
        thetas_a.sort_by(f64::total_cmp);
        thetas_b.sort_by(f64::total_cmp);
        thetas_a.dedup_by(|x, y| (*x - *y).abs() < 1e-6);
        thetas_b.dedup_by(|x, y| (*x - *y).abs() < 1e-6);
        assert_eq!(thetas_a.len(), thetas_b.len());
        for (x, y) in thetas_a.iter().zip(&thetas_b) {
            assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
        assert!(a.iter().all(|p| p.passes) && b.iter().all(|p| p.passes));
    }

    #[test]
    fn passing_condition_implies_morse_perturbations() {
        // All rank checks pass for rho cos(theta); for sampled eps away from
        // +-1 the perturbed function has no critical points in the chart, so
        // the finder reports (vacuous) Morse evidence.
        let polar = rho_cos_theta();
        let box_ = test_box();
        let points = jet_condition_check(&polar, &box_, 80).unwrap();
        assert!(points.iter().all(|p| p.passes));
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut sampled = 0;
        while sampled < 10 {
            let eps: f64 = rng.random_range(-2.0..2.0);
            if (eps.abs() - 1.0).abs() <= 0.05 {
                continue;
            }
            sampled += 1;
            let obj = PerturbedPolar { polar: &polar, eps };
            let opts = SearchOptions {
                n_starts: 60,
                ..Default::default()
            };
            let search = find_critical_points(&obj, &box_, &opts);
            let report = morse_verdict(&search, &[]);
            assert_eq!(report.verdict, LandscapeVerdict::MorseEvidence, "eps = {eps}");
        }
    }

    #[test]
    fn domain_validation() {
        assert!(PolarFunction::new(0.0, 1.0, |r, _| r.clone()).is_err());
        let polar = rho_cos_theta();
        let outside = SearchBox::new(
            DVector::from_vec(vec![0.1, -1.0]),
            DVector::from_vec(vec![2.0, 1.0]),
        )
        .unwrap();
        assert!(jet_condition_check(&polar, &outside, 10).is_err());
    }
}
