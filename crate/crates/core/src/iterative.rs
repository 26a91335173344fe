//! Iterative kernels shared by the solvers: power iteration for spectral
//! bounds and conjugate gradients for data-consistency solves.

use crate::error::{contract, numeric, Result};
use crate::matrix::Matrix;
use crate::rng::{gaussian_matrix, Rng};

/// Estimates the largest eigenvalue of aᵀa, i.e. σ_max(a)².
///
/// This is the step-size bound every gradient-step solver divides by. The
/// start vector is gaussian from the given seed, so the estimate is
/// reproducible.
pub fn power_iteration(a: &Matrix, iters: usize, seed: u64) -> Result<f64> {
    if a.max_abs() == 0.0 {
        return Err(contract("power_iteration requires a nonzero matrix"));
    }
    let at = a.transpose();
    let mut rng = Rng::new(seed);
    let mut v = gaussian_matrix(a.cols(), 1, &mut rng);
    let norm = v.frobenius_norm();
    v = v.scale(1.0 / norm);
    for _ in 0..iters {
        let z = at.matmul(&a.matmul(&v)?)?;
        let zn = z.frobenius_norm();
        if zn == 0.0 {
            return Err(numeric("power_iteration start vector lies in the null space"));
        }
        v = z.scale(1.0 / zn);
    }
    let av = a.matmul(&v)?;
    Ok(av.inner(&av)?)
}

/// Conjugate gradients for a symmetric positive definite operator.
///
/// Solves `A·x = b` where `apply_a` computes matrix-vector products, stopping
/// once `‖A·x - b‖₂ ≤ tol·‖b‖₂`. Errors if that residual is not reached
/// within `max_iters` iterations (the message carries the final residual).
pub fn cg_solve(
    apply_a: &dyn Fn(&Matrix) -> Result<Matrix>,
    b: &Matrix,
    tol: f64,
    max_iters: usize,
) -> Result<Matrix> {
    if tol < 0.0 {
        return Err(contract("cg_solve tolerance must be nonnegative"));
    }
    let b_norm = b.frobenius_norm();
    let mut x = Matrix::zeros(b.rows(), b.cols());
    if b_norm == 0.0 {
        return Ok(x);
    }
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rs = r.inner(&r)?;
    let target = tol * b_norm;

    for _ in 0..max_iters {
        if rs.sqrt() <= target {
            return Ok(x);
        }
        let ap = apply_a(&p)?;
        let p_ap = p.inner(&ap)?;
        if p_ap <= 0.0 {
            return Err(numeric(format!(
                "cg_solve operator is not positive definite (pᵀAp = {p_ap})"
            )));
        }
        let alpha = rs / p_ap;
        x = x.add(&p.scale(alpha))?;
        r = r.sub(&ap.scale(alpha))?;
        let rs_next = r.inner(&r)?;
        let beta = rs_next / rs;
        p = r.add(&p.scale(beta))?;
        rs = rs_next;
    }
    if rs.sqrt() <= target {
        return Ok(x);
    }
    Err(numeric(format!(
        "cg_solve did not converge in {max_iters} iterations (residual {:.3e}, target {:.3e})",
        rs.sqrt(),
        target
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svd::svd;

    #[test]
    fn power_iteration_scaled_identity() {
        let a = Matrix::identity(4).scale(2.0);
        let est = power_iteration(&a, 50, 0).unwrap();
        assert!((est - 4.0).abs() < 1e-9, "{est}");
    }

    #[test]
    fn power_iteration_diagonal() {
        let a = Matrix::diag(&[3.0, 1.0]);
        let est = power_iteration(&a, 200, 1).unwrap();
        assert!((est - 9.0).abs() <= 1e-6, "{est}");
    }

    #[test]
    fn power_iteration_matches_svd_oracle() {
        let mut rng = Rng::new(41);
        let a = gaussian_matrix(10, 20, &mut rng);
        let est = power_iteration(&a, 200, 2).unwrap();
        let smax = svd(&a).unwrap().s[0];
        let truth = smax * smax;
        assert!((est - truth).abs() <= 1e-6 * truth, "{est} vs {truth}");
        // The Rayleigh quotient never exceeds the true top eigenvalue.
        assert!(est <= truth * (1.0 + 1e-6));
    }

    #[test]
    fn power_iteration_never_exceeds_svd_bound() {
        for seed in 0..10u64 {
            let mut rng = Rng::new(500 + seed);
            let a = gaussian_matrix(6, 9, &mut rng);
            let est = power_iteration(&a, 200, seed).unwrap();
            let smax = svd(&a).unwrap().s[0];
            let truth = smax * smax;
            assert!(est <= truth * (1.0 + 1e-6), "seed {seed}: {est} > {truth}");
        }
    }

    #[test]
    fn power_iteration_rejects_zero() {
        let a = Matrix::zeros(3, 3);
        assert!(power_iteration(&a, 10, 0).is_err());
    }

    #[test]
    fn cg_identity_returns_rhs() {
        let b = Matrix::from_col(&[1.0, -2.0, 3.0]);
        let apply = |v: &Matrix| Ok(v.clone());
        let x = cg_solve(&apply, &b, 1e-12, 10).unwrap();
        assert!(x.sub(&b).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn cg_diagonal_analytic() {
        let d = Matrix::diag(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let b = Matrix::from_col(&[1.0; 5]);
        let apply = |v: &Matrix| d.matmul(v);
        let x = cg_solve(&apply, &b, 1e-14, 20).unwrap();
        for i in 0..5 {
            assert!((x.get(i, 0) - 1.0 / (i as f64 + 1.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn cg_matches_dense_solve_on_ridge_system() {
        let mut rng = Rng::new(43);
        let w = gaussian_matrix(8, 5, &mut rng);
        let lam = 0.5;
        let a = w
            .transpose()
            .matmul(&w)
            .unwrap()
            .add(&Matrix::identity(5).scale(lam))
            .unwrap();
        let b = gaussian_matrix(5, 1, &mut rng);
        let apply = |v: &Matrix| a.matmul(v);
        let x_cg = cg_solve(&apply, &b, 1e-12, 200).unwrap();
        let x_dense = a.lu_solve(&b).unwrap();
        let rel = x_cg.sub(&x_dense).unwrap().frobenius_norm() / x_dense.frobenius_norm();
        assert!(rel <= 1e-8, "rel diff {rel}");
    }

    #[test]
    fn cg_reports_nonconvergence_with_residual() {
        let d = Matrix::diag(&[1.0, 1e6]);
        let b = Matrix::from_col(&[1.0, 1.0]);
        let apply = |v: &Matrix| d.matmul(v);
        let err = cg_solve(&apply, &b, 1e-300, 1).unwrap_err();
        assert!(err.to_string().contains("residual"), "{err}");
    }
}
