//! Reference iterative solvers: proximal gradient (ISTA and the generic
//! form), iterative hard thresholding, generalized ISTA for low-rank plus
//! sparse separation, ADMM for generalized compressed sensing, and the
//! alternating data-consistency scheme with a pluggable denoiser.
//!
//! These are the oracles and baselines the unrolled networks are measured
//! against, so their arithmetic is kept deliberately plain.

use crate::error::{contract, Result};
use crate::iterative::cg_solve;
use crate::matrix::Matrix;
use crate::prox::{
    hard_threshold_topk, row_group_soft_threshold, singular_value_threshold, soft_threshold,
};

/// Record of one solver run.
#[derive(Debug, Clone)]
pub struct SolveTrace {
    /// Every iterate, kept only on request.
    pub iterates: Option<Vec<Matrix>>,
    /// Objective value after each iteration; length equals `iterations`.
    pub objectives: Vec<f64>,
    /// Final iterate.
    pub x: Matrix,
    pub iterations: usize,
    pub converged: bool,
    /// ADMM only: per-iteration primal residuals ‖D_i·x − z_i‖₂, one inner
    /// vector per iteration.
    pub primal_residuals: Vec<Vec<f64>>,
}

/// Generic proximal gradient descent:
/// `x_{k+1} = prox(x_k − γ_{k+1}·grad(x_k); λ·γ_{k+1})`.
///
/// `objective` is evaluated on every iterate for the trace. Stops early once
/// `‖x_{k+1} − x_k‖₂ ≤ tol` (pass 0 to always run `max_iters`).
#[allow(clippy::too_many_arguments)]
pub fn pgd_solve(
    grad: &dyn Fn(&Matrix) -> Result<Matrix>,
    prox: &dyn Fn(&Matrix, f64) -> Result<Matrix>,
    objective: &dyn Fn(&Matrix) -> Result<f64>,
    x0: &Matrix,
    gamma: &dyn Fn(usize) -> f64,
    lambda: f64,
    max_iters: usize,
    tol: f64,
    keep_iterates: bool,
) -> Result<SolveTrace> {
    let mut x = x0.clone();
    let mut iterates = keep_iterates.then(|| vec![x.clone()]);
    let mut objectives = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for k in 0..max_iters {
        let step = gamma(k);
        if step <= 0.0 {
            return Err(contract(format!("step size γ_{} must be positive", k + 1)));
        }
        let g = grad(&x)?;
        let pre = x.sub(&g.scale(step))?;
        let next = prox(&pre, lambda * step)?;
        let delta = next.sub(&x)?.frobenius_norm();
        x = next;
        iterations = k + 1;
        objectives.push(objective(&x)?);
        if let Some(it) = iterates.as_mut() {
            it.push(x.clone());
        }
        if delta <= tol {
            converged = true;
            break;
        }
    }

    Ok(SolveTrace {
        iterates,
        objectives,
        x,
        iterations,
        converged,
        primal_residuals: Vec::new(),
    })
}

/// Lasso objective `½‖y − W·x‖² + λ‖x‖₁`.
pub fn lasso_objective(w: &Matrix, y: &Matrix, lambda: f64, x: &Matrix) -> Result<f64> {
    let resid = y.sub(&w.matmul(x)?)?;
    let l1: f64 = x.as_slice().iter().map(|v| v.abs()).sum();
    Ok(0.5 * resid.inner(&resid)? + lambda * l1)
}

/// ISTA for `min ½‖y − W·x‖² + λ‖x‖₁` from x⁰ = 0.
///
/// The gradient step uses 1/μ, so μ must dominate σ_max(WᵀW) for descent.
/// The shrinkage threshold is λ/μ — the scaling that makes fixed points
/// solve the lasso problem. Stops when ‖x_{l+1} − x_l‖₂ ≤ tol.
pub fn ista_solve(
    w: &Matrix,
    y: &Matrix,
    lambda: f64,
    mu: f64,
    max_iters: usize,
    tol: f64,
    keep_iterates: bool,
) -> Result<SolveTrace> {
    if mu <= 0.0 {
        return Err(contract(format!("ista_solve requires μ > 0, got {mu}")));
    }
    if lambda < 0.0 {
        return Err(contract(format!("ista_solve requires λ ≥ 0, got {lambda}")));
    }
    let wt = w.transpose();
    let x0 = Matrix::zeros(w.cols(), y.cols());
    let gamma = 1.0 / mu;
    pgd_solve(
        &|x| wt.matmul(&w.matmul(x)?.sub(y)?),
        &|v, t| soft_threshold(v, t),
        &|x| lasso_objective(w, y, lambda, x),
        &x0,
        &|_| gamma,
        lambda,
        max_iters,
        tol,
        keep_iterates,
    )
}

/// Iterative hard thresholding: `x_{l+1} = H_k(W_t·x_l + W_e·y)` with the
/// analytic matrices `W_t = I − (1/μ)WᵀW`, `W_e = (1/μ)Wᵀ`, from x⁰ = 0.
///
/// Implemented in exactly that matrix form so the unrolled network with
/// analytic weights reproduces it bit for bit. Runs `max_iters` iterations
/// (the objective ½‖y − W·x‖² is recorded per iterate).
pub fn iht_solve(
    w: &Matrix,
    y: &Matrix,
    k: usize,
    mu: f64,
    max_iters: usize,
    keep_iterates: bool,
) -> Result<SolveTrace> {
    if mu <= 0.0 {
        return Err(contract(format!("iht_solve requires μ > 0, got {mu}")));
    }
    if k < 1 {
        return Err(contract("iht_solve requires k ≥ 1"));
    }
    let (w_t, w_e) = iht_analytic_weights(w, mu)?;
    let mut x = Matrix::zeros(w.cols(), y.cols());
    let mut iterates = keep_iterates.then(|| vec![x.clone()]);
    let mut objectives = Vec::new();
    let w_e_y = w_e.matmul(y)?;
    for _ in 0..max_iters {
        let pre = w_t.matmul(&x)?.add(&w_e_y)?;
        x = hard_threshold_topk(&pre, k)?;
        let resid = y.sub(&w.matmul(&x)?)?;
        objectives.push(0.5 * resid.inner(&resid)?);
        if let Some(it) = iterates.as_mut() {
            it.push(x.clone());
        }
    }
    Ok(SolveTrace {
        iterates,
        objectives,
        x,
        iterations: max_iters,
        converged: true,
        primal_residuals: Vec::new(),
    })
}

/// The substitution `W_t = I − (1/μ)WᵀW`, `W_e = (1/μ)Wᵀ` shared by the
/// gradient-step solvers and the analytic network initializers.
pub fn iht_analytic_weights(w: &Matrix, mu: f64) -> Result<(Matrix, Matrix)> {
    let gamma = 1.0 / mu;
    let wt = w.transpose();
    let w_e = wt.scale(gamma);
    let w_t = Matrix::identity(w.cols()).sub(&wt.matmul(w)?.scale(gamma))?;
    Ok((w_t, w_e))
}

/// Low-rank plus row-sparse separation of `Y ≈ H1·L + H2·S` by generalized
/// ISTA: singular-value thresholding on the L update, row-group shrinkage on
/// the S update, both with thresholds divided by μ and a uniform 1/μ on the
/// self, cross, and data terms.
///
/// Both updates read the previous (L, S) pair. Runs `max_iters` iterations;
/// the trace records the objective
/// `½‖Y − H1·L − H2·S‖_F² + λ1‖L‖_* + λ2·Σ‖S row‖₂`.
#[allow(clippy::too_many_arguments)]
pub fn rpca_ista_solve(
    y: &Matrix,
    h1: &Matrix,
    h2: &Matrix,
    lambda1: f64,
    lambda2: f64,
    mu: f64,
    max_iters: usize,
) -> Result<(Matrix, Matrix, SolveTrace)> {
    if mu <= 0.0 {
        return Err(contract(format!("rpca_ista_solve requires μ > 0, got {mu}")));
    }
    if lambda1 < 0.0 || lambda2 < 0.0 {
        return Err(contract("rpca_ista_solve requires λ1, λ2 ≥ 0"));
    }
    let gamma = 1.0 / mu;
    let h1t = h1.transpose();
    let h2t = h2.transpose();
    let g11 = Matrix::identity(h1.cols()).sub(&h1t.matmul(h1)?.scale(gamma))?;
    let g22 = Matrix::identity(h2.cols()).sub(&h2t.matmul(h2)?.scale(gamma))?;
    let c12 = h1t.matmul(h2)?.scale(gamma);
    let c21 = h2t.matmul(h1)?.scale(gamma);
    let b1 = h1t.matmul(y)?.scale(gamma);
    let b2 = h2t.matmul(y)?.scale(gamma);

    let mut l = Matrix::zeros(h1.cols(), y.cols());
    let mut s = Matrix::zeros(h2.cols(), y.cols());
    let mut objectives = Vec::with_capacity(max_iters);

    for _ in 0..max_iters {
        let l_pre = g11.matmul(&l)?.sub(&c12.matmul(&s)?)?.add(&b1)?;
        let s_pre = g22.matmul(&s)?.sub(&c21.matmul(&l)?)?.add(&b2)?;
        l = singular_value_threshold(&l_pre, lambda1 * gamma)?;
        s = row_group_soft_threshold(&s_pre, lambda2 * gamma)?;
        objectives.push(rpca_objective(y, h1, h2, lambda1, lambda2, &l, &s)?);
    }

    let trace = SolveTrace {
        iterates: None,
        objectives,
        x: l.clone(),
        iterations: max_iters,
        converged: true,
        primal_residuals: Vec::new(),
    };
    Ok((l, s, trace))
}

/// Objective of the low-rank plus sparse program.
pub fn rpca_objective(
    y: &Matrix,
    h1: &Matrix,
    h2: &Matrix,
    lambda1: f64,
    lambda2: f64,
    l: &Matrix,
    s: &Matrix,
) -> Result<f64> {
    let resid = y.sub(&h1.matmul(l)?)?.sub(&h2.matmul(s)?)?;
    let nuclear: f64 = crate::svd::svd(l)?.s.iter().sum();
    let mut row_l2 = 0.0;
    for i in 0..s.rows() {
        row_l2 += s.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    Ok(0.5 * resid.inner(&resid)? + lambda1 * nuclear + lambda2 * row_l2)
}

/// One splitting operator of the generalized compressed-sensing program,
/// with its penalty weight, quadratic coupling, and dual step.
#[derive(Debug, Clone)]
pub struct AdmmOp {
    pub d: Matrix,
    pub lambda: f64,
    pub rho: f64,
    pub eta: f64,
}

/// ADMM for `min ½‖W·x − y‖² + Σ_i λ_i·‖D_i·x‖₁` by variable splitting
/// z_i = D_i·x.
///
/// Per iteration: a dense solve of
/// `(WᵀW + Σρ_i·D_iᵀD_i)·x = Wᵀy + Σρ_i·D_iᵀ(z_i − α_i)`, soft thresholding
/// of each `D_i·x + α_i` at λ_i/ρ_i, then the dual step
/// `α_i += η_i·(D_i·x − z_i)`. The system matrix is validated by an attempted
/// factorization up front; a singular system is a numeric error.
pub fn admm_cs_solve(
    w: &Matrix,
    y: &Matrix,
    ops: &[AdmmOp],
    max_iters: usize,
    keep_iterates: bool,
) -> Result<SolveTrace> {
    if ops.is_empty() {
        return Err(contract("admm_cs_solve requires at least one operator"));
    }
    for (i, op) in ops.iter().enumerate() {
        if op.rho <= 0.0 {
            return Err(contract(format!("ρ_{i} must be positive, got {}", op.rho)));
        }
        if op.lambda < 0.0 {
            return Err(contract(format!("λ_{i} must be nonnegative, got {}", op.lambda)));
        }
    }

    let wt = w.transpose();
    let wty = wt.matmul(y)?;
    let mut system = wt.matmul(w)?;
    for op in ops {
        let dt = op.d.transpose();
        system = system.add(&dt.matmul(&op.d)?.scale(op.rho))?;
    }
    // Attempted factorization: fails fast on a singular system.
    system.lu_solve(&wty)?;

    let mut x = Matrix::zeros(w.cols(), y.cols());
    let mut z: Vec<Matrix> = ops
        .iter()
        .map(|op| Matrix::zeros(op.d.rows(), y.cols()))
        .collect();
    let mut alpha = z.clone();
    let mut iterates = keep_iterates.then(Vec::new);
    let mut objectives = Vec::with_capacity(max_iters);
    let mut primal_residuals = Vec::with_capacity(max_iters);

    for _ in 0..max_iters {
        let mut rhs = wty.clone();
        for (op, (zi, ai)) in ops.iter().zip(z.iter().zip(&alpha)) {
            let dt = op.d.transpose();
            rhs = rhs.add(&dt.matmul(&zi.sub(ai)?)?.scale(op.rho))?;
        }
        x = system.lu_solve(&rhs)?;

        let mut resids = Vec::with_capacity(ops.len());
        for (i, op) in ops.iter().enumerate() {
            let dx = op.d.matmul(&x)?;
            z[i] = soft_threshold(&dx.add(&alpha[i])?, op.lambda / op.rho)?;
            let gap = dx.sub(&z[i])?;
            resids.push(gap.frobenius_norm());
            alpha[i] = alpha[i].add(&gap.scale(op.eta))?;
        }
        primal_residuals.push(resids);
        objectives.push(admm_objective(w, y, ops, &x)?);
        if let Some(it) = iterates.as_mut() {
            it.push(x.clone());
        }
    }

    Ok(SolveTrace {
        iterates,
        objectives,
        x,
        iterations: max_iters,
        converged: true,
        primal_residuals,
    })
}

fn admm_objective(w: &Matrix, y: &Matrix, ops: &[AdmmOp], x: &Matrix) -> Result<f64> {
    let resid = w.matmul(x)?.sub(y)?;
    let mut value = 0.5 * resid.inner(&resid)?;
    for op in ops {
        let dx = op.d.matmul(x)?;
        value += op.lambda * dx.as_slice().iter().map(|v| v.abs()).sum::<f64>();
    }
    Ok(value)
}

/// Denoisers shipped for the alternating data-consistency solver.
pub mod denoisers {
    use super::*;

    pub fn identity() -> impl Fn(&Matrix) -> Result<Matrix> {
        |x: &Matrix| Ok(x.clone())
    }

    pub fn soft(lambda: f64) -> impl Fn(&Matrix) -> Result<Matrix> {
        move |x: &Matrix| soft_threshold(x, lambda)
    }

    /// 3-tap running median down each column, ends replicated.
    pub fn median3() -> impl Fn(&Matrix) -> Result<Matrix> {
        |x: &Matrix| {
            let mut out = x.clone();
            for c in 0..x.cols() {
                for r in 0..x.rows() {
                    let lo = r.saturating_sub(1);
                    let hi = (r + 1).min(x.rows() - 1);
                    let mut window = [x.get(lo, c), x.get(r, c), x.get(hi, c)];
                    window.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    out.set(r, c, window[1]);
                }
            }
            Ok(out)
        }
    }
}

/// Alternation between a denoiser and a ridge data-consistency solve:
/// `z_k = denoiser(x_k)`, then `(WᵀW + λI)·x_{k+1} = Wᵀy + λ·z_k` by
/// conjugate gradients to `cg_tol`, starting from x₀ = 0, for K rounds.
pub fn modl_alternation(
    w: &Matrix,
    y: &Matrix,
    lambda: f64,
    denoiser: &dyn Fn(&Matrix) -> Result<Matrix>,
    rounds: usize,
    cg_tol: f64,
) -> Result<Matrix> {
    if lambda <= 0.0 {
        return Err(contract(format!("modl_alternation requires λ > 0, got {lambda}")));
    }
    if rounds < 1 {
        return Err(contract("modl_alternation requires K ≥ 1"));
    }
    let wt = w.transpose();
    let wty = wt.matmul(y)?;
    let apply = |v: &Matrix| -> Result<Matrix> {
        wt.matmul(&w.matmul(v)?)?.add(&v.scale(lambda))
    };
    let mut x = Matrix::zeros(w.cols(), y.cols());
    for _ in 0..rounds {
        let z = denoiser(&x)?;
        let rhs = wty.add(&z.scale(lambda))?;
        x = cg_solve(&apply, &rhs, cg_tol, 10 * w.cols().max(50))?;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iterative::power_iteration;
    use crate::rng::{gaussian_matrix, Rng};

    #[test]
    fn ista_one_step_identity_dictionary_is_soft_threshold() {
        let y = Matrix::from_col(&[2.0, -0.4, 0.9]);
        let w = Matrix::identity(3);
        let trace = ista_solve(&w, &y, 0.5, 1.0, 1, 0.0, false).unwrap();
        let expected = soft_threshold(&y, 0.5).unwrap();
        assert_eq!(trace.x, expected);
    }

    #[test]
    fn ista_orthonormal_no_penalty_recovers_projection() {
        // W with orthonormal columns and λ = 0 converges to Wᵀy.
        let w = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]]);
        let y = Matrix::from_col(&[0.3, -0.7, 2.0]);
        let trace = ista_solve(&w, &y, 0.0, 1.0, 100, 1e-14, false).unwrap();
        let expected = w.transpose().matmul(&y).unwrap();
        assert!(trace.x.sub(&expected).unwrap().max_abs() < 1e-12);
        assert!(trace.converged);
    }

    #[test]
    fn ista_recovers_planted_support_and_descends() {
        let mut rng = Rng::new(7);
        let n = 20;
        let m = 40;
        let mut w = gaussian_matrix(n, m, &mut rng);
        // unit columns
        for j in 0..m {
            let norm: f64 = (0..n).map(|i| w.get(i, j).powi(2)).sum::<f64>().sqrt();
            for i in 0..n {
                w.set(i, j, w.get(i, j) / norm);
            }
        }
        let mut x_true = Matrix::zeros(m, 1);
        for (idx, val) in [(3usize, 1.2), (17, -0.9), (31, 1.0)] {
            x_true.set(idx, 0, val);
        }
        let y = w.matmul(&x_true).unwrap();
        let mu = 1.01 * power_iteration(&w, 200, 1).unwrap();
        let trace = ista_solve(&w, &y, 0.1, mu, 2000, 1e-12, false).unwrap();

        for pair in trace.objectives.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "objective increased");
        }
        // The three largest coefficients sit on the planted support.
        let top = hard_threshold_topk(&trace.x, 3).unwrap();
        assert!(top.get(3, 0) != 0.0 && top.get(17, 0) != 0.0 && top.get(31, 0) != 0.0);
    }

    #[test]
    fn ista_rejects_bad_mu() {
        let w = Matrix::identity(2);
        let y = Matrix::from_col(&[1.0, 1.0]);
        assert!(ista_solve(&w, &y, 0.1, 0.0, 5, 0.0, false).is_err());
    }

    #[test]
    fn pgd_identity_prox_is_gradient_descent_on_least_squares() {
        let mut rng = Rng::new(9);
        let w = gaussian_matrix(6, 4, &mut rng);
        let y = gaussian_matrix(6, 1, &mut rng);
        let wt = w.transpose();
        let mu = 1.01 * power_iteration(&w, 200, 2).unwrap();
        let x0 = Matrix::zeros(4, 1);
        let trace = pgd_solve(
            &|x| wt.matmul(&w.matmul(x)?.sub(&y)?),
            &|v, _| Ok(v.clone()),
            &|x| {
                let r = y.sub(&w.matmul(x)?)?;
                Ok(0.5 * r.inner(&r)?)
            },
            &x0,
            &|_| 1.0 / mu,
            0.0,
            5000,
            1e-13,
            false,
        )
        .unwrap();
        let normal = wt.matmul(&w).unwrap();
        let x_star = normal.lu_solve(&wt.matmul(&y).unwrap()).unwrap();
        assert!(trace.x.sub(&x_star).unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn pgd_with_soft_threshold_is_trajectory_identical_to_ista() {
        let mut rng = Rng::new(10);
        let w = gaussian_matrix(8, 12, &mut rng);
        let y = gaussian_matrix(8, 1, &mut rng);
        let lambda = 0.15;
        let mu = 1.01 * power_iteration(&w, 200, 3).unwrap();

        let ista = ista_solve(&w, &y, lambda, mu, 40, 0.0, true).unwrap();
        let wt = w.transpose();
        let x0 = Matrix::zeros(12, 1);
        let pgd = pgd_solve(
            &|x| wt.matmul(&w.matmul(x)?.sub(&y)?),
            &|v, t| soft_threshold(v, t),
            &|x| lasso_objective(&w, &y, lambda, x),
            &x0,
            &|_| 1.0 / mu,
            lambda,
            40,
            0.0,
            true,
        )
        .unwrap();

        let a = ista.iterates.unwrap();
        let b = pgd.iterates.unwrap();
        assert_eq!(a.len(), b.len());
        for (xa, xb) in a.iter().zip(&b) {
            assert_eq!(xa, xb, "trajectories must agree bit for bit");
        }
    }

    #[test]
    fn pgd_zero_gradient_applies_prox_to_unchanged_iterate() {
        let x0 = Matrix::from_col(&[3.0, -2.0]);
        // With a vanishing gradient the pre-prox point is x itself, so the
        // first step is exactly prox(x0); with an identity prox the iterate
        // is a fixed point.
        let trace = pgd_solve(
            &|x| Ok(Matrix::zeros(x.rows(), x.cols())),
            &|v, t| soft_threshold(v, t),
            &|_| Ok(0.0),
            &x0,
            &|_| 1.0,
            0.5,
            3,
            0.0,
            true,
        )
        .unwrap();
        let it = trace.iterates.unwrap();
        assert_eq!(it[1], soft_threshold(&x0, 0.5).unwrap());

        let fixed = pgd_solve(
            &|x| Ok(Matrix::zeros(x.rows(), x.cols())),
            &|v, _| Ok(v.clone()),
            &|_| Ok(0.0),
            &x0,
            &|_| 1.0,
            0.5,
            4,
            0.0,
            true,
        )
        .unwrap();
        for it in fixed.iterates.unwrap() {
            assert_eq!(it, x0);
        }
    }

    #[test]
    fn iht_one_step_identity_dictionary() {
        let y = Matrix::from_col(&[3.0, -1.0, 0.5, -4.0]);
        let w = Matrix::identity(4);
        let trace = iht_solve(&w, &y, 2, 1.0, 1, false).unwrap();
        assert_eq!(trace.x, hard_threshold_topk(&y, 2).unwrap());
    }

    #[test]
    fn iht_full_support_converges_to_least_squares_fixed_point() {
        let mut rng = Rng::new(11);
        let w = gaussian_matrix(5, 5, &mut rng)
            .add(&Matrix::identity(5).scale(3.0))
            .unwrap();
        let y = gaussian_matrix(5, 1, &mut rng);
        let mu = 1.01 * power_iteration(&w, 300, 4).unwrap();
        let trace = iht_solve(&w, &y, 5, mu, 4000, false).unwrap();
        let x_star = w.lu_solve(&y).unwrap();
        assert!(trace.x.sub(&x_star).unwrap().max_abs() < 1e-8);
    }

    #[test]
    fn iht_iterates_always_k_sparse() {
        let mut rng = Rng::new(12);
        let w = gaussian_matrix(10, 25, &mut rng);
        let y = gaussian_matrix(10, 1, &mut rng);
        let mu = 1.01 * power_iteration(&w, 200, 5).unwrap();
        let trace = iht_solve(&w, &y, 4, mu, 50, true).unwrap();
        for it in trace.iterates.unwrap().iter().skip(1) {
            assert!(it.nnz() <= 4);
        }
    }

    #[test]
    fn reparametrized_step_equals_original_step_bitwise() {
        // The coupled weights W_t = I − (1/μ)WᵀW, W_e = (1/μ)Wᵀ reproduce
        // the gradient-form step exactly when both sides use the same
        // matrix arithmetic.
        let mut rng = Rng::new(13);
        let w = gaussian_matrix(6, 9, &mut rng);
        let y = gaussian_matrix(6, 1, &mut rng);
        let x = gaussian_matrix(9, 1, &mut rng);
        let mu = 2.5;

        // Original step, matrices formed inline from W and μ.
        let gamma = 1.0 / mu;
        let wt = w.transpose();
        let shrink = Matrix::identity(9)
            .sub(&wt.matmul(&w).unwrap().scale(gamma))
            .unwrap();
        let inject = wt.scale(gamma);
        let original = hard_threshold_topk(
            &shrink.matmul(&x).unwrap().add(&inject.matmul(&y).unwrap()).unwrap(),
            3,
        )
        .unwrap();

        // Reparametrized step through the stored (W_t, W_e) pair.
        let (w_t, w_e) = iht_analytic_weights(&w, mu).unwrap();
        let reparam = hard_threshold_topk(
            &w_t.matmul(&x).unwrap().add(&w_e.matmul(&y).unwrap()).unwrap(),
            3,
        )
        .unwrap();
        assert_eq!(original, reparam);

        // And a full solve from zero equals the step cascade applied manually.
        let trace = iht_solve(&w, &y, 3, mu, 3, true).unwrap();
        let mut manual = Matrix::zeros(9, 1);
        let wey = w_e.matmul(&y).unwrap();
        for step in 1..=3 {
            manual = hard_threshold_topk(&w_t.matmul(&manual).unwrap().add(&wey).unwrap(), 3).unwrap();
            assert_eq!(&manual, &trace.iterates.as_ref().unwrap()[step]);
        }
    }

    #[test]
    fn rpca_zero_data_stays_at_zero() {
        let y = Matrix::zeros(6, 8);
        let eye = Matrix::identity(6);
        // zero rows in Y means H2 must map 6 -> 6
        let (l, s, _) = rpca_ista_solve(&y, &eye, &eye, 0.1, 0.1, 2.0, 20).unwrap();
        assert_eq!(l.max_abs(), 0.0);
        assert_eq!(s.max_abs(), 0.0);
    }

    #[test]
    fn rpca_pure_lowrank_recovered_when_sparse_is_suppressed() {
        let mut rng = Rng::new(14);
        let a = gaussian_matrix(12, 2, &mut rng);
        let b = gaussian_matrix(10, 2, &mut rng);
        let l_true = a.matmul(&b.transpose()).unwrap();
        let eye = Matrix::identity(12);
        let (l, s, trace) =
            rpca_ista_solve(&l_true, &eye, &eye, 1e-6, 1e6, 2.0, 300).unwrap();
        assert_eq!(s.max_abs(), 0.0, "huge λ2 must zero the sparse part");
        let rel = l.sub(&l_true).unwrap().frobenius_norm() / l_true.frobenius_norm();
        assert!(rel <= 1e-3, "low-rank relative error {rel}");
        for pair in trace.objectives.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12);
        }
    }

    #[test]
    fn admm_zero_data_gives_zero() {
        let mut rng = Rng::new(15);
        let w = gaussian_matrix(8, 5, &mut rng);
        let y = Matrix::zeros(8, 1);
        let ops = [AdmmOp {
            d: Matrix::identity(5),
            lambda: 0.3,
            rho: 1.0,
            eta: 1.0,
        }];
        let trace = admm_cs_solve(&w, &y, &ops, 30, false).unwrap();
        assert_eq!(trace.x.max_abs(), 0.0);
    }

    #[test]
    fn admm_without_penalty_solves_least_squares() {
        let mut rng = Rng::new(16);
        let w = gaussian_matrix(10, 5, &mut rng);
        let y = gaussian_matrix(10, 1, &mut rng);
        let ops = [AdmmOp {
            d: Matrix::identity(5),
            lambda: 0.0,
            rho: 1.0,
            eta: 1.0,
        }];
        let trace = admm_cs_solve(&w, &y, &ops, 500, false).unwrap();
        let wt = w.transpose();
        let x_star = wt
            .matmul(&w)
            .unwrap()
            .lu_solve(&wt.matmul(&y).unwrap())
            .unwrap();
        assert!(trace.x.sub(&x_star).unwrap().max_abs() < 1e-8);
    }

    #[test]
    fn admm_matches_ista_on_lasso() {
        let mut rng = Rng::new(17);
        let w = gaussian_matrix(12, 20, &mut rng);
        let y = gaussian_matrix(12, 1, &mut rng);
        let lambda = 0.2;

        let mu = 1.01 * power_iteration(&w, 200, 6).unwrap();
        let ista = ista_solve(&w, &y, lambda, mu, 20000, 1e-12, false).unwrap();
        let ops = [AdmmOp {
            d: Matrix::identity(20),
            lambda,
            rho: 1.0,
            eta: 1.0,
        }];
        let admm = admm_cs_solve(&w, &y, &ops, 2000, false).unwrap();

        let rel = admm.x.sub(&ista.x).unwrap().frobenius_norm()
            / ista.x.frobenius_norm().max(1e-12);
        assert!(rel <= 1e-4, "rel diff {rel}");
    }

    #[test]
    fn admm_primal_residual_decays_on_lasso_family() {
        // Planted sparse-coding instances (unit-column 20x40 dictionary,
        // 3-sparse codes, lambda = 0.1), the same family the equivalence
        // example uses.
        for seed in 0..5u64 {
            let (data, _) =
                crate::datagen::gen_sparse_coding_dataset(20, 40, 3, 1, 0, 0.01, 0.1, 180 + seed)
                    .unwrap();
            let y = data.y_train.unwrap().col(0);
            let ops = [AdmmOp {
                d: Matrix::identity(40),
                lambda: 0.1,
                rho: 1.0,
                eta: 1.0,
            }];
            let trace = admm_cs_solve(&data.w, &y, &ops, 200, false).unwrap();
            let last = trace.primal_residuals.last().unwrap()[0];
            assert!(last <= 1e-6, "seed {seed}: primal residual after 200 iterations: {last}");
        }
    }

    #[test]
    fn modl_single_round_is_ridge_solution() {
        let mut rng = Rng::new(19);
        let w = gaussian_matrix(9, 6, &mut rng);
        let y = gaussian_matrix(9, 1, &mut rng);
        let lambda = 0.7;
        let x = modl_alternation(&w, &y, lambda, &denoisers::identity(), 1, 1e-12).unwrap();
        let wt = w.transpose();
        let system = wt
            .matmul(&w)
            .unwrap()
            .add(&Matrix::identity(6).scale(lambda))
            .unwrap();
        let expected = system.lu_solve(&wt.matmul(&y).unwrap()).unwrap();
        let rel = x.sub(&expected).unwrap().frobenius_norm() / expected.frobenius_norm();
        assert!(rel <= 1e-8, "rel {rel}");
    }

    #[test]
    fn modl_large_lambda_freezes_sequence() {
        let mut rng = Rng::new(20);
        let w = gaussian_matrix(7, 4, &mut rng);
        let y = gaussian_matrix(7, 1, &mut rng);
        let lambda = 1e10;
        let x1 = modl_alternation(&w, &y, lambda, &denoisers::identity(), 1, 1e-13).unwrap();
        let x2 = modl_alternation(&w, &y, lambda, &denoisers::identity(), 2, 1e-13).unwrap();
        assert!(x2.sub(&x1).unwrap().max_abs() <= 1e-9, "sequence moved");
    }

    #[test]
    fn modl_cg_matches_dense_solve_per_round() {
        let mut rng = Rng::new(21);
        let w = gaussian_matrix(10, 7, &mut rng);
        let y = gaussian_matrix(10, 1, &mut rng);
        let lambda = 0.4;
        let denoiser = denoisers::soft(0.05);

        let wt = w.transpose();
        let system = wt
            .matmul(&w)
            .unwrap()
            .add(&Matrix::identity(7).scale(lambda))
            .unwrap();
        let mut x_dense = Matrix::zeros(7, 1);
        for round in 1..=3 {
            let z = denoiser(&x_dense).unwrap();
            let rhs = wt.matmul(&y).unwrap().add(&z.scale(lambda)).unwrap();
            x_dense = system.lu_solve(&rhs).unwrap();
            let x_cg = modl_alternation(&w, &y, lambda, &denoiser, round, 1e-13).unwrap();
            let rel =
                x_cg.sub(&x_dense).unwrap().frobenius_norm() / x_dense.frobenius_norm();
            assert!(rel <= 1e-8, "round {round}: rel {rel}");
        }
    }

    #[test]
    fn median3_denoiser_window_behaviour() {
        let x = Matrix::from_col(&[5.0, 1.0, 2.0, 9.0, 3.0]);
        let y = denoisers::median3()(&x).unwrap();
        assert_eq!(y.as_slice(), &[5.0, 2.0, 2.0, 3.0, 3.0]);
    }
}

