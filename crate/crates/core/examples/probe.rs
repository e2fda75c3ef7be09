use morseland::critfind::{find_critical_points, SearchBox, SearchOptions};
use morseland::polyscan::{random_polynomial, PerturbedPolynomial};

fn main() {
    let p = random_polynomial(2, 4, 23, 1.0).scaled(2.0);
    let box_ = SearchBox::centered(2, 5.0);
    for &eps in &[4.1f64, 4.15, 4.2] {
        let obj = PerturbedPolynomial { poly: &p, eps };
        let opts = SearchOptions { n_starts: 48, ..Default::default() };
        let s = find_critical_points(&obj, &box_, &opts);
        print!("eps={eps:6.3} n={} grad_tol={:.2e} ", s.points.len(), s.grad_tol);
        for pt in &s.points {
            print!(" ({:.3},{:.3})", pt.location[0], pt.location[1]);
        }
        println!();
    }
}
