//! Bad-set scanner for polynomials under the quadratic perturbation
//! L(x) + eps/2 ||x||^2: sweep eps over a grid, locate the critical points of
//! each perturbed function, and estimate the set of eps at which some
//! critical point is degenerate.
//!
//! Isolated bad eps generically show up as folds (a pair of critical points
//! collides and disappears as eps crosses the bad value), so the scanner
//! tracks point branches between neighboring grid values and bisects on
//! branch disappearance; it also bisects on the rarer signed-eigenvalue
//! crossing of a persisting branch. A run of grid values whose critical sets
//! stay degenerate is flagged as a continuum instead.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::critfind::{find_critical_points, CriticalPoint, SearchBox, SearchOptions};
use crate::jet::ScalarJet2;
use crate::reg::Objective;

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("eps grid must have at least 16 points, got {0}")]
    GridTooSmall(usize),
    #[error("eps grid must be strictly increasing")]
    GridUnsorted,
    #[error("scan supports at most 3 variables, got {0}")]
    TooManyVars(usize),
    #[error("polynomial term has {got} exponents, expected {want}")]
    ExponentArity { got: usize, want: usize },
}

/// Sparse polynomial in `n` variables: exponent vectors with coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    n: usize,
    terms: Vec<(Vec<u32>, f64)>,
}

impl Polynomial {
    pub fn new(n: usize, mut terms: Vec<(Vec<u32>, f64)>) -> Result<Self, ScanError> {
        for (e, _) in &terms {
            if e.len() != n {
                return Err(ScanError::ExponentArity {
                    got: e.len(),
                    want: n,
                });
            }
        }
        terms.sort_by(|a, b| {
            let ta: u32 = a.0.iter().sum();
            let tb: u32 = b.0.iter().sum();
            ta.cmp(&tb).then_with(|| a.0.cmp(&b.0))
        });
        Ok(Polynomial { n, terms })
    }

    pub fn zero(n: usize) -> Self {
        Polynomial { n, terms: Vec::new() }
    }

    pub fn n_vars(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[(Vec<u32>, f64)] {
        &self.terms
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|(e, _)| e.iter().sum())
            .max()
            .unwrap_or(0)
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    /// Multiply every coefficient by `c`.
    pub fn scaled(&self, c: f64) -> Polynomial {
        Polynomial {
            n: self.n,
            terms: self.terms.iter().map(|(e, a)| (e.clone(), a * c)).collect(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                c * e
                    .iter()
                    .zip(x)
                    .map(|(&k, &v)| v.powi(k as i32))
                    .product::<f64>()
            })
            .sum()
    }

    pub fn eval_jets(&self, x: &[ScalarJet2]) -> ScalarJet2 {
        let d = x.first().map_or(0, ScalarJet2::dim);
        // Power tables per variable up to the needed exponent.
        let max_exp: Vec<u32> = (0..self.n)
            .map(|i| self.terms.iter().map(|(e, _)| e[i]).max().unwrap_or(0))
            .collect();
        let mut powers: Vec<Vec<ScalarJet2>> = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let mut table = vec![ScalarJet2::constant(1.0, d)];
            for k in 1..=max_exp[i] {
                let next = &table[(k - 1) as usize] * &x[i];
                table.push(next);
            }
            powers.push(table);
        }
        let mut total = ScalarJet2::constant(0.0, d);
        for (e, c) in &self.terms {
            let mut term = ScalarJet2::constant(*c, d);
            for (i, &k) in e.iter().enumerate() {
                if k > 0 {
                    term = &term * &powers[i][k as usize];
                }
            }
            total = &total + &term;
        }
        total
    }
}

/// All exponent vectors of total degree <= d in graded lexicographic order.
pub fn monomials(n: usize, d: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for total in 0..=d {
        let mut current = vec![0u32; n];
        compositions(total, 0, &mut current, &mut out);
    }
    out
}

fn compositions(remaining: u32, pos: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if pos == current.len() - 1 {
        current[pos] = remaining;
        out.push(current.clone());
        current[pos] = 0;
        return;
    }
    for k in (0..=remaining).rev() {
        current[pos] = k;
        compositions(remaining - k, pos + 1, current, out);
        current[pos] = 0;
    }
}

/// Dense random polynomial: one i.i.d. uniform [-scale, scale] coefficient
/// per monomial of total degree <= d, deterministic in the seed.
pub fn random_polynomial(n: usize, d: u32, seed: u64, coeff_scale: f64) -> Polynomial {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms = monomials(n, d)
        .into_iter()
        .map(|e| (e, rng.random_range(-coeff_scale..coeff_scale)))
        .collect();
    Polynomial::new(n, terms).expect("arity correct by construction")
}

/// L(x) + eps/2 ||x||^2 as a search objective.
pub struct PerturbedPolynomial<'a> {
    pub poly: &'a Polynomial,
    pub eps: f64,
}

impl Objective for PerturbedPolynomial<'_> {
    fn dim(&self) -> usize {
        self.poly.n_vars()
    }

    fn eval_jets(&self, alpha: &[ScalarJet2]) -> ScalarJet2 {
        let d = alpha.first().map_or(0, ScalarJet2::dim);
        let mut norm_sq = ScalarJet2::constant(0.0, d);
        for a in alpha {
            norm_sq = &norm_sq + &a.square();
        }
        &self.poly.eval_jets(alpha) + &norm_sq.scale(0.5 * self.eps)
    }
}

/// Per-grid-value scan record.
#[derive(Debug, Clone)]
pub struct EpsScanRow {
    pub eps: f64,
    pub n_critical_points: usize,
    /// Smallest |eigenvalue| over the accepted points; NaN when none.
    pub min_abs_eig_over_points: f64,
    pub degenerate_found: bool,
}

/// Estimated bad set: isolated values plus continuum intervals.
#[derive(Debug, Clone)]
pub struct BadSetEstimate {
    pub isolated_bad_eps: Vec<f64>,
    pub continuum_flags: Vec<(f64, f64)>,
    pub rows: Vec<EpsScanRow>,
    pub grid_resolution: f64,
}

impl BadSetEstimate {
    /// CSV with the frozen column order:
    /// eps, n_critical_points, min_abs_eig_over_points, degenerate_found.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eps,n_critical_points,min_abs_eig_over_points,degenerate_found\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:.16e},{},{:.16e},{}\n",
                r.eps, r.n_critical_points, r.min_abs_eig_over_points, r.degenerate_found
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ScanOptions {
    pub starts_per_eps: usize,
    pub seed: u64,
    /// Bisection stops when the bracket is this narrow.
    pub bisection_tol: f64,
    pub degeneracy_rel: f64,
    /// Two points in consecutive critical sets match when this close.
    pub match_radius: f64,
    /// Consecutive degenerate grid points needed for a continuum flag
    /// (4 points = 3 grid cells).
    pub min_continuum_run: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            starts_per_eps: 48,
            seed: 42,
            bisection_tol: 1e-9,
            degeneracy_rel: 1e-6,
            match_radius: 0.7,
            min_continuum_run: 4,
        }
    }
}

fn nearest_within(x: &DVector<f64>, pool: &[CriticalPoint], radius: f64) -> Option<usize> {
    pool.iter()
        .enumerate()
        .map(|(j, q)| (j, (&q.location - x).norm()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .filter(|&(_, d)| d <= radius)
        .map(|(j, _)| j)
}

/// Signed eigenvalue of smallest magnitude.
fn signed_min_eig(p: &CriticalPoint) -> f64 {
    p.eigenvalues
        .iter()
        .copied()
        .min_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(f64::NAN)
}

fn search_options(scan: &ScanOptions) -> SearchOptions {
    SearchOptions {
        n_starts: scan.starts_per_eps,
        seed: scan.seed,
        degeneracy_rel: scan.degeneracy_rel,
        ..Default::default()
    }
}

/// Re-locate a critical point of L_eps near `guess` by a short damped-Newton
/// run; None if the tracked point wanders farther than the match radius.
fn track_point(
    poly: &Polynomial,
    eps: f64,
    guess: &DVector<f64>,
    box_: &SearchBox,
    opts: &ScanOptions,
) -> Option<(DVector<f64>, f64)> {
    let obj = PerturbedPolynomial { poly, eps };
    let grad_tol = 1e-10 * (1.0 + obj.eval_jet(&box_.center()).grad.norm());
    let mut x = guess.clone();
    let mut lambda = 1e-6;
    for _ in 0..80 {
        let jet = obj.eval_jet(&x);
        if !jet.is_finite() {
            return None;
        }
        let gnorm = jet.grad.norm();
        if gnorm <= grad_tol {
            let point = crate::critfind::classify(&obj, &x, grad_tol, opts.degeneracy_rel, 0).ok()?;
            return Some((x, signed_min_eig(&point)));
        }
        let hess = jet.hess.to_dmatrix();
        let mut stepped = false;
        while lambda <= 1e12 {
            let mut damped = hess.clone();
            for i in 0..damped.nrows() {
                damped[(i, i)] += lambda;
            }
            let delta = match damped.lu().solve(&(-&jet.grad)) {
                Some(s) if s.iter().all(|v| v.is_finite()) => s,
                _ => &jet.grad * (-1.0 / lambda),
            };
            let trial = &x + &delta;
            let tj = obj.eval_jet(&trial);
            if tj.is_finite() && tj.grad.norm() < gnorm {
                x = trial;
                lambda = (lambda * 0.1).max(1e-12);
                stepped = true;
                break;
            }
            lambda *= 10.0;
        }
        if !stepped {
            return None;
        }
        if (&x - guess).norm() > opts.match_radius {
            return None;
        }
    }
    None
}

/// Bisect on branch existence: `lo` has the tracked point, `hi` does not.
/// The result is certified by the smallest eigenvalue of the surviving
/// point, which must be collapsing toward zero at a genuine fold; this
/// rejects candidates born of matching noise or a flaky multistart miss.
fn bisect_fold(
    poly: &Polynomial,
    mut lo: f64,
    mut hi: f64,
    eig_scale: f64,
    mut anchor: DVector<f64>,
    box_: &SearchBox,
    opts: &ScanOptions,
) -> Option<f64> {
    for _ in 0..60 {
        if (hi - lo).abs() <= opts.bisection_tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match track_point(poly, mid, &anchor, box_, opts) {
            Some((x, _)) => {
                anchor = x;
                lo = mid;
            }
            None => hi = mid,
        }
    }
    let (_, eig) = track_point(poly, lo, &anchor, box_, opts)?;
    if eig.abs() <= 1e-3 * (1.0 + eig_scale) {
        Some(0.5 * (lo + hi))
    } else {
        None
    }
}

/// Bisect on the sign of the smallest eigenvalue along a persisting branch.
/// Certified the same way: the eigenvalue at the located crossing must
/// actually be near zero.
fn bisect_eig_sign(
    poly: &Polynomial,
    mut lo: f64,
    mut hi: f64,
    lo_sign: f64,
    eig_scale: f64,
    mut anchor: DVector<f64>,
    box_: &SearchBox,
    opts: &ScanOptions,
) -> Option<f64> {
    for _ in 0..60 {
        if (hi - lo).abs() <= opts.bisection_tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let (x, eig) = track_point(poly, mid, &anchor, box_, opts)?;
        anchor = x;
        if eig.signum() == lo_sign.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let star = 0.5 * (lo + hi);
    let (_, eig) = track_point(poly, star, &anchor, box_, opts)?;
    if eig.abs() <= 1e-3 * (1.0 + eig_scale) {
        Some(star)
    } else {
        None
    }
}

/// Sweep the grid, flag continua of degeneracy, and refine isolated bad eps.
pub fn scan_bad_eps(
    poly: &Polynomial,
    eps_grid: &[f64],
    box_: &SearchBox,
    opts: &ScanOptions,
) -> Result<BadSetEstimate, ScanError> {
    if eps_grid.len() < 16 {
        return Err(ScanError::GridTooSmall(eps_grid.len()));
    }
    if eps_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ScanError::GridUnsorted);
    }
    if poly.n_vars() > 3 {
        return Err(ScanError::TooManyVars(poly.n_vars()));
    }

    let grid_resolution = eps_grid
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let search_opts = search_options(opts);

    let mut rows = Vec::with_capacity(eps_grid.len());
    let mut point_sets: Vec<Vec<CriticalPoint>> = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let obj = PerturbedPolynomial { poly, eps };
        let search = find_critical_points(&obj, box_, &search_opts);
        let min_abs = search
            .points
            .iter()
            .map(|p| p.min_abs_eig)
            .fold(f64::INFINITY, f64::min);
        rows.push(EpsScanRow {
            eps,
            n_critical_points: search.points.len(),
            min_abs_eig_over_points: if search.points.is_empty() {
                f64::NAN
            } else {
                min_abs
            },
            degenerate_found: search.points.iter().any(|p| p.degenerate),
        });
        point_sets.push(search.points);
    }

    // Continuum flags: runs of consecutive degenerate grid values.
    let mut continuum_flags: Vec<(f64, f64)> = Vec::new();
    let mut run_start: Option<usize> = None;
    for (i, row) in rows.iter().enumerate() {
        if row.degenerate_found {
            run_start.get_or_insert(i);
        } else if let Some(s) = run_start.take() {
            if i - s >= opts.min_continuum_run {
                continuum_flags.push((rows[s].eps, rows[i - 1].eps));
            }
        }
    }
    if let Some(s) = run_start {
        if rows.len() - s >= opts.min_continuum_run {
            continuum_flags.push((rows[s].eps, rows[rows.len() - 1].eps));
        }
    }

    let in_continuum = |eps: f64| -> bool {
        continuum_flags
            .iter()
            .any(|&(a, b)| eps >= a - 1.5 * grid_resolution && eps <= b + 1.5 * grid_resolution)
    };

    // Candidate isolated bad eps.
    let mut candidates: Vec<f64> = Vec::new();

    // Grid values whose critical set is already degenerate to tolerance but
    // which do not sit in a continuum run.
    for row in &rows {
        if row.degenerate_found && !in_continuum(row.eps) {
            candidates.push(row.eps);
        }
    }

    for k in 0..rows.len() - 1 {
        let (lo_eps, hi_eps) = (rows[k].eps, rows[k + 1].eps);
        if in_continuum(lo_eps) && in_continuum(hi_eps) {
            continue;
        }
        let left = &point_sets[k];
        let right = &point_sets[k + 1];

        // Mutual-nearest matching: i and j pair only when each is the other's
        // closest point within the match radius.
        let nearest_right: Vec<Option<usize>> = left
            .iter()
            .map(|p| nearest_within(&p.location, right, opts.match_radius))
            .collect();
        let nearest_left: Vec<Option<usize>> = right
            .iter()
            .map(|q| nearest_within(&q.location, left, opts.match_radius))
            .collect();
        let mut right_matched = vec![false; right.len()];

        for (i, p) in left.iter().enumerate() {
            let pair = nearest_right[i].filter(|&j| nearest_left[j] == Some(i));
            match pair {
                Some(j) => {
                    right_matched[j] = true;
                    let (a, b) = (signed_min_eig(p), signed_min_eig(&right[j]));
                    if a * b < 0.0 {
                        let scale = a.abs().max(b.abs());
                        if let Some(star) = bisect_eig_sign(
                            poly,
                            lo_eps,
                            hi_eps,
                            a,
                            scale,
                            p.location.clone(),
                            box_,
                            opts,
                        ) {
                            candidates.push(star);
                        }
                    }
                }
                None => {
                    // Branch disappears somewhere in (lo, hi): a fold.
                    let scale = signed_min_eig(p).abs();
                    if let Some(star) =
                        bisect_fold(poly, lo_eps, hi_eps, scale, p.location.clone(), box_, opts)
                    {
                        candidates.push(star);
                    }
                }
            }
        }
        // Branches that appear from the right side: folds approached from above.
        for (j, q) in right.iter().enumerate() {
            if !right_matched[j] {
                let scale = signed_min_eig(q).abs();
                if let Some(star) =
                    bisect_fold(poly, hi_eps, lo_eps, scale, q.location.clone(), box_, opts)
                {
                    candidates.push(star);
                }
            }
        }
    }

    candidates.retain(|&e| !in_continuum(e));
    candidates.sort_by(f64::total_cmp);
    let mut isolated_bad_eps: Vec<f64> = Vec::new();
    for c in candidates {
        match isolated_bad_eps.last() {
            Some(&last) if (c - last).abs() <= grid_resolution => {}
            _ => isolated_bad_eps.push(c),
        }
    }

    Ok(BadSetEstimate {
        isolated_bad_eps,
        continuum_flags,
        rows,
        grid_resolution,
    })
}
