//! Reverse-mode differentiation over the primitive set the unrolled networks
//! are built from.
//!
//! A `Tape` records every primitive application in order; parents always have
//! smaller node indices, so one reverse sweep applies the chain rule. The
//! primitive set is deliberately small: matrix products, additions, the
//! threshold activations, scalar reparameterizations, the ridge-system solve
//! used by the unrolled ADMM stage, and the two training losses.
//!
//! Subgradient conventions at kinks: the soft and row-group thresholds take
//! derivative 0 wherever the argument sits exactly on the threshold, and the
//! sigmoid-gated threshold takes derivative 0 at x = 0.

use crate::error::{contract, Error, Result};
use crate::matrix::Matrix;
use crate::prox;

/// Handle to a recorded value: node index plus shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    index: usize,
    rows: usize,
    cols: usize,
}

impl Var {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Transpose(usize),
    Exp(usize),
    ScalarMul(usize, usize),
    ScalarDiv(usize, usize),
    ScaleByParam { x: usize, scale: usize },
    SoftThreshold { x: usize, thresh: usize },
    SigmoidPlusThreshold { x: usize, alpha: usize, sharpness: usize },
    RowGroupSoftThreshold { x: usize, thresh: usize },
    LinearSolve { a: usize, b: usize },
    MseLoss { pred: usize, target: usize },
    MaskedLoss { pred: usize, target: usize, bg_weight: f64 },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Matrix,
}

/// Append-only record of primitive applications.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients keyed by node index, produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; `None` if the loss does not
    /// depend on it.
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.index).and_then(|g| g.as_ref())
    }

    /// Gradient as a matrix, zeros if the loss does not depend on `v`.
    pub fn wrt_or_zero(&self, v: Var) -> Matrix {
        match self.wrt(v) {
            Some(g) => g.clone(),
            None => Matrix::zeros(v.rows, v.cols),
        }
    }

    /// Appends the gradient entries for `v` (zeros when absent) to a flat
    /// vector without an intermediate clone.
    pub fn extend_flat(&self, v: Var, out: &mut Vec<f64>) {
        match self.wrt(v) {
            Some(g) => out.extend_from_slice(g.as_slice()),
            None => out.extend(std::iter::repeat_n(0.0, v.rows * v.cols)),
        }
    }

    /// Adds the gradient entries for `v` into `acc` (length must match);
    /// an absent gradient contributes zeros.
    pub fn add_flat(&self, v: Var, acc: &mut [f64]) {
        assert_eq!(acc.len(), v.rows * v.cols, "accumulator length mismatch");
        if let Some(g) = self.wrt(v) {
            for (a, b) in acc.iter_mut().zip(g.as_slice()) {
                *a += b;
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Forward value recorded for `v`.
    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.index].value
    }

    fn push(&mut self, op: Op, value: Matrix) -> Var {
        let var = Var {
            index: self.nodes.len(),
            rows: value.rows(),
            cols: value.cols(),
        };
        self.nodes.push(Node { op, value });
        var
    }

    /// Records an input or parameter leaf.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(Op::Leaf, value)
    }

    /// Records a 1×1 leaf.
    pub fn scalar_leaf(&mut self, value: f64) -> Result<Var> {
        Ok(self.leaf(Matrix::new(1, 1, vec![value])?))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a.index, b.index), value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(Op::Add(a.index, b.index), value))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        Ok(self.push(Op::Sub(a.index, b.index), value))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let value = self.value(x).transpose();
        self.push(Op::Transpose(x.index), value)
    }

    /// Entrywise exponential; the positivity reparameterization for trainable
    /// thresholds and penalty coefficients.
    pub fn exp(&mut self, x: Var) -> Result<Var> {
        let value = Matrix::new(
            x.rows,
            x.cols,
            self.value(x).as_slice().iter().map(|v| v.exp()).collect(),
        )?;
        Ok(self.push(Op::Exp(x.index), value))
    }

    fn expect_scalar(&self, v: Var, role: &str) -> Result<f64> {
        if v.shape() != (1, 1) {
            return Err(contract(format!(
                "{role} must be 1x1, got {}x{}",
                v.rows, v.cols
            )));
        }
        Ok(self.value(v).get(0, 0))
    }

    pub fn scalar_mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let va = self.expect_scalar(a, "scalar_mul lhs")?;
        let vb = self.expect_scalar(b, "scalar_mul rhs")?;
        let value = Matrix::new(1, 1, vec![va * vb])?;
        Ok(self.push(Op::ScalarMul(a.index, b.index), value))
    }

    pub fn scalar_div(&mut self, a: Var, b: Var) -> Result<Var> {
        let va = self.expect_scalar(a, "scalar_div lhs")?;
        let vb = self.expect_scalar(b, "scalar_div rhs")?;
        let value = Matrix::new(1, 1, vec![va / vb])?;
        Ok(self.push(Op::ScalarDiv(a.index, b.index), value))
    }

    /// `scale · x` for a 1×1 scale node.
    pub fn scale_by_param(&mut self, x: Var, scale: Var) -> Result<Var> {
        let c = self.expect_scalar(scale, "scale_by_param scale")?;
        let value = self.value(x).scale(c);
        if !value.as_slice().iter().all(|v| v.is_finite()) {
            return Err(crate::error::numeric("scale_by_param produced non-finite entries"));
        }
        Ok(self.push(
            Op::ScaleByParam {
                x: x.index,
                scale: scale.index,
            },
            value,
        ))
    }

    pub fn soft_threshold(&mut self, x: Var, thresh: Var) -> Result<Var> {
        let lam = self.expect_scalar(thresh, "soft_threshold threshold")?;
        let value = prox::soft_threshold(self.value(x), lam)?;
        Ok(self.push(
            Op::SoftThreshold {
                x: x.index,
                thresh: thresh.index,
            },
            value,
        ))
    }

    pub fn sigmoid_plus_threshold(&mut self, x: Var, alpha: Var, sharpness: Var) -> Result<Var> {
        let a = self.expect_scalar(alpha, "sigmoid_plus_threshold alpha")?;
        let b = self.expect_scalar(sharpness, "sigmoid_plus_threshold sharpness")?;
        let value = prox::sigmoid_plus_threshold(self.value(x), a, b)?;
        Ok(self.push(
            Op::SigmoidPlusThreshold {
                x: x.index,
                alpha: alpha.index,
                sharpness: sharpness.index,
            },
            value,
        ))
    }

    pub fn row_group_soft_threshold(&mut self, x: Var, thresh: Var) -> Result<Var> {
        let lam = self.expect_scalar(thresh, "row_group_soft_threshold threshold")?;
        let value = prox::row_group_soft_threshold(self.value(x), lam)?;
        Ok(self.push(
            Op::RowGroupSoftThreshold {
                x: x.index,
                thresh: thresh.index,
            },
            value,
        ))
    }

    /// Solves `a · out = b` for square `a`. The backward rule is the adjoint
    /// system: the transposed matrix is solved against the incoming gradient.
    pub fn linear_solve(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).lu_solve(self.value(b))?;
        Ok(self.push(
            Op::LinearSolve {
                a: a.index,
                b: b.index,
            },
            value,
        ))
    }

    /// Mean over columns of the squared column error: `(1/T)·Σ_t ‖p_t − y_t‖²`.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let value = crate::train::mse_loss(self.value(pred), self.value(target))?;
        let value = Matrix::new(1, 1, vec![value])?;
        Ok(self.push(
            Op::MseLoss {
                pred: pred.index,
                target: target.index,
            },
            value,
        ))
    }

    /// Support-masked loss: squared error on the target support, weighted
    /// absolute shrinkage off it.
    pub fn masked_loss(&mut self, pred: Var, target: Var, bg_weight: f64) -> Result<Var> {
        let value = crate::train::masked_loss(self.value(pred), self.value(target), bg_weight)?;
        let value = Matrix::new(1, 1, vec![value])?;
        Ok(self.push(
            Op::MaskedLoss {
                pred: pred.index,
                target: target.index,
                bg_weight,
            },
            value,
        ))
    }

    /// Smallest distance of any threshold-type activation input to its kink.
    ///
    /// Gradient checks reject-and-resample inputs whose margin is below a
    /// safety band, since finite differences straddle kinks there.
    pub fn kink_margin(&self) -> f64 {
        let mut margin = f64::INFINITY;
        for node in &self.nodes {
            match node.op {
                Op::SoftThreshold { x, thresh } => {
                    let lam = self.nodes[thresh].value.get(0, 0);
                    for &v in self.nodes[x].value.as_slice() {
                        margin = margin.min((v.abs() - lam).abs());
                    }
                }
                Op::RowGroupSoftThreshold { x, thresh } => {
                    let lam = self.nodes[thresh].value.get(0, 0);
                    let xv = &self.nodes[x].value;
                    for i in 0..xv.rows() {
                        let norm: f64 = xv.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
                        margin = margin.min((norm - lam).abs());
                    }
                }
                Op::SigmoidPlusThreshold { x, .. } => {
                    for &v in self.nodes[x].value.as_slice() {
                        margin = margin.min(v.abs());
                    }
                }
                _ => {}
            }
        }
        margin
    }

    /// Reverse sweep from a scalar loss node. Returns gradients for every
    /// node the loss depends on; nodes are visited in strictly decreasing
    /// index order exactly once.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if loss.shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got {}x{}",
                loss.rows, loss.cols
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.index] = Some(Matrix::new(1, 1, vec![1.0])?);

        for i in (0..=loss.index).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.apply_backward_rule(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn apply_backward_rule(
        &self,
        i: usize,
        g: &Matrix,
        grads: &mut [Option<Matrix>],
    ) -> Result<()> {
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let va = &self.nodes[*a].value;
                let vb = &self.nodes[*b].value;
                // grad_a = g·bᵀ and grad_b = aᵀ·g, computed without forming
                // the transposes; accumulation order matches matmul's
                // (ascending contraction index), so results are bit-identical
                // to the two-step form.
                let (gr, gc) = g.shape();
                let (ar, ac) = va.shape();
                let br = vb.rows();
                let gs = g.as_slice();
                let asl = va.as_slice();
                let bsl = vb.as_slice();

                let mut ga = Matrix::zeros(ar, ac);
                {
                    let out = ga.as_mut_slice();
                    for i in 0..gr {
                        for k in 0..gc {
                            let gik = gs[i * gc + k];
                            if gik == 0.0 {
                                continue;
                            }
                            let row = &mut out[i * ac..(i + 1) * ac];
                            for (j, slot) in row.iter_mut().enumerate() {
                                *slot += gik * bsl[j * gc + k];
                            }
                        }
                    }
                }
                let mut gb = Matrix::zeros(br, gc);
                {
                    let out = gb.as_mut_slice();
                    if gc == 1 {
                        for i in 0..ar {
                            let gi = gs[i];
                            let arow = &asl[i * ac..(i + 1) * ac];
                            for (slot, aik) in out.iter_mut().zip(arow) {
                                if *aik != 0.0 {
                                    *slot += aik * gi;
                                }
                            }
                        }
                    } else {
                        for i in 0..ar {
                            for k in 0..ac {
                                let aik = asl[i * ac + k];
                                if aik == 0.0 {
                                    continue;
                                }
                                let grow = &gs[i * gc..(i + 1) * gc];
                                let orow = &mut out[k * gc..(k + 1) * gc];
                                for (slot, gv) in orow.iter_mut().zip(grow) {
                                    *slot += aik * gv;
                                }
                            }
                        }
                    }
                }
                accumulate(grads, *a, ga)?;
                accumulate(grads, *b, gb)?;
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone())?;
                accumulate(grads, *b, g.clone())?;
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone())?;
                accumulate(grads, *b, g.scale(-1.0))?;
            }
            Op::Transpose(x) => {
                accumulate(grads, *x, g.transpose())?;
            }
            Op::Exp(x) => {
                // node value already holds exp(x)
                accumulate(grads, *x, g.hadamard(&self.nodes[i].value)?)?;
            }
            Op::ScalarMul(a, b) => {
                let va = self.nodes[*a].value.get(0, 0);
                let vb = self.nodes[*b].value.get(0, 0);
                accumulate(grads, *a, g.scale(vb))?;
                accumulate(grads, *b, g.scale(va))?;
            }
            Op::ScalarDiv(a, b) => {
                let va = self.nodes[*a].value.get(0, 0);
                let vb = self.nodes[*b].value.get(0, 0);
                accumulate(grads, *a, g.scale(1.0 / vb))?;
                accumulate(grads, *b, g.scale(-va / (vb * vb)))?;
            }
            Op::ScaleByParam { x, scale } => {
                let c = self.nodes[*scale].value.get(0, 0);
                let vx = &self.nodes[*x].value;
                accumulate(grads, *x, g.scale(c))?;
                accumulate(grads, *scale, Matrix::new(1, 1, vec![g.inner(vx)?])?)?;
            }
            Op::SoftThreshold { x, thresh } => {
                let lam = self.nodes[*thresh].value.get(0, 0);
                let vx = &self.nodes[*x].value;
                let mut gx = Matrix::zeros(vx.rows(), vx.cols());
                let mut gl = 0.0;
                for r in 0..vx.rows() {
                    for c in 0..vx.cols() {
                        let v = vx.get(r, c);
                        if v.abs() > lam {
                            let ge = g.get(r, c);
                            gx.set(r, c, ge);
                            gl -= ge * v.signum();
                        }
                    }
                }
                accumulate(grads, *x, gx)?;
                accumulate(grads, *thresh, Matrix::new(1, 1, vec![gl])?)?;
            }
            Op::SigmoidPlusThreshold {
                x,
                alpha,
                sharpness,
            } => {
                let a = self.nodes[*alpha].value.get(0, 0);
                let b = self.nodes[*sharpness].value.get(0, 0);
                let vx = &self.nodes[*x].value;
                let mut gx = Matrix::zeros(vx.rows(), vx.cols());
                let mut ga = 0.0;
                let mut gb = 0.0;
                for r in 0..vx.rows() {
                    for c in 0..vx.cols() {
                        let v = vx.get(r, c);
                        if v <= 0.0 {
                            continue; // y ≡ 0 on x < 0; derivative 0 taken at x = 0
                        }
                        let sig = 1.0 / (1.0 + (-b * (v - a)).exp());
                        let dsig = sig * (1.0 - sig);
                        let ge = g.get(r, c);
                        gx.set(r, c, ge * (sig + v * dsig * b));
                        ga += ge * (-v * dsig * b);
                        gb += ge * (v * dsig * (v - a));
                    }
                }
                accumulate(grads, *x, gx)?;
                accumulate(grads, *alpha, Matrix::new(1, 1, vec![ga])?)?;
                accumulate(grads, *sharpness, Matrix::new(1, 1, vec![gb])?)?;
            }
            Op::RowGroupSoftThreshold { x, thresh } => {
                let lam = self.nodes[*thresh].value.get(0, 0);
                let vx = &self.nodes[*x].value;
                let mut gx = Matrix::zeros(vx.rows(), vx.cols());
                let mut gl = 0.0;
                for r in 0..vx.rows() {
                    let row = vx.row(r);
                    let norm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm <= lam {
                        continue; // shrunk to zero; zero gradient
                    }
                    let grow = g.row(r);
                    let gdotr: f64 = grow.iter().zip(row).map(|(a, b)| a * b).sum();
                    let shrink = 1.0 - lam / norm;
                    let radial = lam * gdotr / (norm * norm * norm);
                    for c in 0..vx.cols() {
                        gx.set(r, c, grow[c] * shrink + radial * row[c]);
                    }
                    gl -= gdotr / norm;
                }
                accumulate(grads, *x, gx)?;
                accumulate(grads, *thresh, Matrix::new(1, 1, vec![gl])?)?;
            }
            Op::LinearSolve { a, b } => {
                let va = &self.nodes[*a].value;
                let x = &self.nodes[i].value;
                let s = va.transpose().lu_solve(g)?;
                accumulate(grads, *b, s.clone())?;
                accumulate(grads, *a, s.matmul(&x.transpose())?.scale(-1.0))?;
            }
            Op::MseLoss { pred, target } => {
                let p = &self.nodes[*pred].value;
                let t = &self.nodes[*target].value;
                let coeff = g.get(0, 0) * 2.0 / p.cols() as f64;
                let diff = p.sub(t)?;
                accumulate(grads, *pred, diff.scale(coeff))?;
                accumulate(grads, *target, diff.scale(-coeff))?;
            }
            Op::MaskedLoss {
                pred,
                target,
                bg_weight,
            } => {
                let p = &self.nodes[*pred].value;
                let t = &self.nodes[*target].value;
                let count = (p.rows() * p.cols()) as f64;
                let coeff = g.get(0, 0) / count;
                let mut gp = Matrix::zeros(p.rows(), p.cols());
                let mut gt = Matrix::zeros(p.rows(), p.cols());
                for r in 0..p.rows() {
                    for c in 0..p.cols() {
                        let pv = p.get(r, c);
                        let tv = t.get(r, c);
                        if tv != 0.0 {
                            gp.set(r, c, coeff * 2.0 * (pv - tv));
                            gt.set(r, c, -coeff * 2.0 * (pv - tv));
                        } else {
                            gp.set(r, c, coeff * bg_weight * pv.signum());
                        }
                    }
                }
                accumulate(grads, *pred, gp)?;
                accumulate(grads, *target, gt)?;
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Matrix>], idx: usize, delta: Matrix) -> Result<()> {
    match grads[idx].as_mut() {
        Some(existing) => {
            if existing.shape() != delta.shape() {
                return Err(Error::Shape {
                    op: "gradient accumulate",
                    lhs: existing.shape(),
                    rhs: delta.shape(),
                });
            }
            for (acc, d) in existing.as_mut_slice().iter_mut().zip(delta.as_slice()) {
                *acc += d;
            }
        }
        None => grads[idx] = Some(delta),
    }
    Ok(())
}

/// Central finite differences `(f(p + h·eᵢ) − f(p − h·eᵢ)) / 2h`, the
/// independent oracle every backward rule is checked against.
pub fn finite_diff_grad(f: &mut dyn FnMut(&[f64]) -> f64, p: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0, "finite_diff_grad requires h > 0");
    let mut grad = Vec::with_capacity(p.len());
    let mut work = p.to_vec();
    for i in 0..p.len() {
        work[i] = p[i] + h;
        let plus = f(&work);
        work[i] = p[i] - h;
        let minus = f(&work);
        work[i] = p[i];
        grad.push((plus - minus) / (2.0 * h));
    }
    grad
}
