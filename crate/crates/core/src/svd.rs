//! Singular value decomposition by one-sided Jacobi rotations.
//!
//! Chosen for portability and determinism over speed: the rotation sweep
//! order is fixed, so repeated runs produce identical factors, and the sign
//! convention below makes the output unique. Adequate for desk-scale inputs.

use crate::error::{numeric, Result};
use crate::matrix::Matrix;

const MAX_SWEEPS: usize = 1000;
// Column pairs count as orthogonal below this relative inner product.
const ORTHO_TOL: f64 = 1e-14;

/// Thin SVD `A = U·diag(s)·Vᵀ` with `r = min(rows, cols)`.
///
/// `u` is rows×r and `v` is cols×r, both with orthonormal columns; `s` holds
/// nonnegative singular values in nonincreasing order. Uniqueness: each u
/// column has its largest-magnitude entry positive (ties broken by lowest
/// row index).
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl SvdResult {
    /// Reassembles `U·diag(s)·Vᵀ`.
    pub fn reconstruct(&self) -> Result<Matrix> {
        let us = {
            let mut m = self.u.clone();
            for i in 0..m.rows() {
                for (j, &sv) in self.s.iter().enumerate() {
                    m.set(i, j, m.get(i, j) * sv);
                }
            }
            m
        };
        us.matmul(&self.v.transpose())
    }
}

/// Computes the thin SVD of `a`.
pub fn svd(a: &Matrix) -> Result<SvdResult> {
    if a.rows() >= a.cols() {
        svd_tall(a)
    } else {
        let t = svd_tall(&a.transpose())?;
        Ok(SvdResult {
            u: t.v,
            s: t.s,
            v: t.u,
        })
    }
}

// One-sided Jacobi on a tall (rows >= cols) matrix: rotate column pairs of a
// working copy until mutually orthogonal, accumulating the rotations in V.
fn svd_tall(a: &Matrix) -> Result<SvdResult> {
    let m = a.rows();
    let n = a.cols();
    let mut b = a.clone();
    let mut v = Matrix::identity(n);

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (app, aqq, apq) = column_moments(&b, p, q);
                if apq.abs() <= ORTHO_TOL * (app * aqq).sqrt() {
                    continue;
                }
                rotated = true;
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut b, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(numeric(format!(
            "svd did not converge within {MAX_SWEEPS} sweeps"
        )));
    }

    // Singular values are the column norms of the rotated matrix.
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| b.get(i, j).powi(2)).sum::<f64>().sqrt())
        .collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap().then(i.cmp(&j)));

    let mut u = Matrix::zeros(m, n);
    let mut vv = Matrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    let rank_floor = 1e-300;
    for (new_j, &old_j) in order.iter().enumerate() {
        let norm = norms[old_j];
        s.push(norm);
        if norm > rank_floor {
            for i in 0..m {
                u.set(i, new_j, b.get(i, old_j) / norm);
            }
        }
        for i in 0..n {
            vv.set(i, new_j, v.get(i, old_j));
        }
    }

    fill_null_columns(&mut u, &s, rank_floor);
    apply_sign_convention(&mut u, &mut vv);

    Ok(SvdResult { u, s, v: vv })
}

fn column_moments(b: &Matrix, p: usize, q: usize) -> (f64, f64, f64) {
    let mut app = 0.0;
    let mut aqq = 0.0;
    let mut apq = 0.0;
    for i in 0..b.rows() {
        let bp = b.get(i, p);
        let bq = b.get(i, q);
        app += bp * bp;
        aqq += bq * bq;
        apq += bp * bq;
    }
    (app, aqq, apq)
}

fn rotate_columns(mat: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..mat.rows() {
        let xp = mat.get(i, p);
        let xq = mat.get(i, q);
        mat.set(i, p, c * xp - s * xq);
        mat.set(i, q, s * xp + c * xq);
    }
}

// Columns belonging to (numerically) zero singular values are arbitrary; fill
// them with a deterministic orthonormal completion so UᵀU = I still holds.
// Values are sorted nonincreasing, so every column left of a null column is
// already valid and is all we must orthogonalize against.
fn fill_null_columns(u: &mut Matrix, s: &[f64], rank_floor: f64) {
    let m = u.rows();
    for j in 0..s.len() {
        if s[j] > rank_floor {
            continue;
        }
        'candidates: for e in 0..m {
            let mut col = vec![0.0; m];
            col[e] = 1.0;
            for prev in 0..j {
                let dot: f64 = (0..m).map(|i| col[i] * u.get(i, prev)).sum();
                for i in 0..m {
                    col[i] -= dot * u.get(i, prev);
                }
            }
            let norm: f64 = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.5 {
                for i in 0..m {
                    u.set(i, j, col[i] / norm);
                }
                break 'candidates;
            }
        }
    }
}

// Largest-magnitude entry of every u column made positive; magnitude ties
// resolved toward the lowest row index. V columns flip together with U.
fn apply_sign_convention(u: &mut Matrix, v: &mut Matrix) {
    for j in 0..u.cols() {
        let mut best_row = 0;
        let mut best_val = 0.0_f64;
        for i in 0..u.rows() {
            let mag = u.get(i, j).abs();
            if mag > best_val {
                best_val = mag;
                best_row = i;
            }
        }
        if u.get(best_row, j) < 0.0 {
            for i in 0..u.rows() {
                u.set(i, j, -u.get(i, j));
            }
            for i in 0..v.rows() {
                v.set(i, j, -v.get(i, j));
            }
        }
    }
}
