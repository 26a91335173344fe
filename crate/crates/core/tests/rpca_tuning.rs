//! Calibration harness for the low-rank plus sparse penalty weights (run
//! with --ignored). The frozen defaults in the config module came from the
//! grid below: λ1 = 0.8, λ2 = 0.56 minimize the worst component error at
//! 500 iterations on the 32×50 rank-2, 5% density, amplitude-5 instance.
//!
//! The achievable floor on that instance is ≈ 0.41 relative error per
//! component, for any (λ1, λ2): with every row of the planted sparse part
//! active, the mixed-norm subgradient pins all rows of the dual certificate,
//! so the planted pair is never the program's minimizer (its objective sits
//! well above the converged one). The floor is the structural mixing of the
//! components, not a convergence artifact.

use unroll_core::datagen::gen_rpca_dataset;
use unroll_core::iterative::power_iteration;
use unroll_core::solvers::{rpca_ista_solve, rpca_objective};
use unroll_core::Matrix;

fn hstack(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.rows(), a.cols() + b.cols());
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            out.set(i, j, a.get(i, j));
        }
        for j in 0..b.cols() {
            out.set(i, a.cols() + j, b.get(i, j));
        }
    }
    out
}

#[test]
#[ignore]
fn grid_tune_lambdas() {
    let data = gen_rpca_dataset(32, 50, 2, 0.05, 5.0, 3).unwrap();
    let y = data.y_train.as_ref().unwrap();
    let h1 = data.h1.as_ref().unwrap();
    let h2 = data.h2.as_ref().unwrap();
    let l_true = data.l_mat.as_ref().unwrap();
    let s_true = data.s_mat.as_ref().unwrap();
    let mu = 1.01 * power_iteration(&hstack(h1, h2), 200, 3).unwrap();

    let mut best = (f64::INFINITY, 0.0, 0.0);
    for &l1 in &[0.2, 0.4, 0.8, 1.6] {
        for &ratio in &[0.5, 0.6, 0.7, 0.8] {
            let l2 = l1 * ratio;
            let (l, s, _) = rpca_ista_solve(y, h1, h2, l1, l2, mu, 500).unwrap();
            let rel_l = l.sub(l_true).unwrap().frobenius_norm() / l_true.frobenius_norm();
            let rel_s = s.sub(s_true).unwrap().frobenius_norm() / s_true.frobenius_norm();
            let worst = rel_l.max(rel_s);
            println!("l1={l1:<4} l2={l2:<5.3} rel_l={rel_l:.4e} rel_s={rel_s:.4e}");
            if worst < best.0 {
                best = (worst, l1, l2);
            }
        }
    }
    println!("best worst-component rel err {:.4e} at l1={} l2={}", best.0, best.1, best.2);

    // The planted pair is not the program's minimizer: its objective exceeds
    // the converged objective at the tuned weights.
    let (_, _, trace) = rpca_ista_solve(y, h1, h2, best.1, best.2, mu, 2000).unwrap();
    let at_truth = rpca_objective(y, h1, h2, best.1, best.2, l_true, s_true).unwrap();
    println!(
        "objective: converged {:.4}, at planted truth {:.4}",
        trace.objectives.last().unwrap(),
        at_truth
    );
}
