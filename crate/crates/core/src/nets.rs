//! Finite-depth trainable networks obtained by unrolling the classic solvers.
//!
//! Each network kind carries per-layer (or tied) parameter bundles and two
//! entry points: a plain forward pass and a tape-recorded forward pass whose
//! leaves are the trainable parameters. Analytic initialization reproduces
//! the corresponding truncated solver, which is the keystone equivalence the
//! test suites pin down.
//!
//! Positivity of trainable thresholds and penalty coefficients is enforced by
//! storing the raw value and mapping through exp on the forward pass.

use crate::error::{contract, Result};
use crate::matrix::Matrix;
use crate::prox::hard_threshold_topk;
use crate::solvers::{iht_analytic_weights, AdmmOp};
use crate::tape::{Tape, Var};

/// exp of this underflows to exactly +0.0, so a zero threshold round-trips
/// through the raw parameterization.
const RAW_ZERO: f64 = -750.0;

/// Raw (log-domain) value for a nonnegative quantity.
pub fn positive_to_raw(v: f64) -> f64 {
    if v > 0.0 {
        v.ln()
    } else {
        RAW_ZERO
    }
}

// ---------------------------------------------------------------------------
// LISTA
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ListaLayer {
    pub w_t: Matrix,
    pub w_e: Matrix,
    /// Threshold in the log domain; the effective λ is exp(raw_lambda).
    pub raw_lambda: f64,
}

/// Unrolled soft-threshold network, tied or per-layer parameters.
#[derive(Debug, Clone)]
pub struct ListaParams {
    depth: usize,
    tied: bool,
    layers: Vec<ListaLayer>,
}

impl ListaParams {
    /// Builds from explicit layers. Tied networks store exactly one layer.
    pub fn from_layers(depth: usize, tied: bool, layers: Vec<ListaLayer>) -> Result<Self> {
        let expected = if tied { 1 } else { depth };
        if depth > 0 && layers.len() != expected {
            return Err(contract(format!(
                "expected {expected} stored layers, got {}",
                layers.len()
            )));
        }
        for lay in &layers {
            if lay.w_t.rows() != lay.w_t.cols() || lay.w_t.rows() != lay.w_e.rows() {
                return Err(contract("lista layer shapes are inconsistent"));
            }
        }
        Ok(Self {
            depth,
            tied,
            layers,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn tied(&self) -> bool {
        self.tied
    }

    pub fn stored_layers(&self) -> &[ListaLayer] {
        &self.layers
    }

    /// Layer used at unroll position `l` (the single stored layer when tied).
    pub fn layer(&self, l: usize) -> &ListaLayer {
        if self.tied {
            &self.layers[0]
        } else {
            &self.layers[l]
        }
    }

    /// Frobenius distance of each layer to the coupled parameterization
    /// `W_t = I − W_e·W`. Zero at the analytic substitution; reported as a
    /// diagnostic for trained networks.
    pub fn weight_coupling_residual(&self, w: &Matrix) -> Result<Vec<f64>> {
        (0..self.depth)
            .map(|l| {
                let lay = self.layer(l);
                coupling_residual(&lay.w_t, &lay.w_e, w)
            })
            .collect()
    }
}

fn coupling_residual(w_t: &Matrix, w_e: &Matrix, w: &Matrix) -> Result<f64> {
    let coupled = Matrix::identity(w_t.rows()).sub(&w_e.matmul(w)?)?;
    Ok(w_t.sub(&coupled)?.frobenius_norm())
}

/// Parameters that make the network reproduce `depth` solver iterations:
/// `W_t = I − (1/μ)WᵀW`, `W_e = (1/μ)Wᵀ`, threshold λ/μ everywhere.
pub fn lista_init_analytic(
    w: &Matrix,
    mu: f64,
    lambda: f64,
    depth: usize,
    tied: bool,
) -> Result<ListaParams> {
    if mu <= 0.0 {
        return Err(contract(format!("lista_init_analytic requires μ > 0, got {mu}")));
    }
    if lambda < 0.0 {
        return Err(contract("lista_init_analytic requires λ ≥ 0"));
    }
    let (w_t, w_e) = iht_analytic_weights(w, mu)?;
    let raw_lambda = positive_to_raw(lambda * (1.0 / mu));
    // Always keep one stored layer so a zero-depth network still knows its
    // output dimension.
    let stored = if tied { 1 } else { depth.max(1) };
    let layers = (0..stored)
        .map(|_| ListaLayer {
            w_t: w_t.clone(),
            w_e: w_e.clone(),
            raw_lambda,
        })
        .collect();
    ListaParams::from_layers(depth, tied, layers)
}

/// Records the unrolled forward pass `x_{l+1} = S_λ(W_t·x_l + W_e·y)` from
/// x⁰ = 0 and returns the output together with the parameter leaves in
/// flattening order.
pub fn lista_forward_on_tape(
    tape: &mut Tape,
    params: &ListaParams,
    y: &Matrix,
) -> Result<(Var, Vec<Var>)> {
    let mut param_vars = Vec::new();
    let mut layer_vars = Vec::new();
    for lay in &params.layers {
        let w_t = tape.leaf(lay.w_t.clone());
        let w_e = tape.leaf(lay.w_e.clone());
        let raw = tape.scalar_leaf(lay.raw_lambda)?;
        let lam = tape.exp(raw)?;
        param_vars.extend_from_slice(&[w_t, w_e, raw]);
        layer_vars.push((w_t, w_e, lam));
    }
    let m = params
        .layers
        .first()
        .map(|l| l.w_t.rows())
        .unwrap_or_else(|| y.rows());
    let y_var = tape.leaf(y.clone());
    let mut x = tape.leaf(Matrix::zeros(m, y.cols()));
    for l in 0..params.depth {
        let (w_t, w_e, lam) = layer_vars[if params.tied { 0 } else { l }];
        let tx = tape.matmul(w_t, x)?;
        let ey = tape.matmul(w_e, y_var)?;
        let pre = tape.add(tx, ey)?;
        x = tape.soft_threshold(pre, lam)?;
    }
    Ok((x, param_vars))
}

/// Plain forward pass (records a scratch tape internally so training and
/// inference share one arithmetic path).
pub fn lista_forward(params: &ListaParams, y: &Matrix) -> Result<Matrix> {
    let mut tape = Tape::new();
    let (out, _) = lista_forward_on_tape(&mut tape, params, y)?;
    Ok(tape.value(out).clone())
}

// ---------------------------------------------------------------------------
// Learned IHT
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct LihtLayer {
    pub w_t: Matrix,
    pub w_e: Matrix,
}

/// Unrolled hard-threshold network. The sparsity level is fixed, and the
/// top-k projection has no useful gradient, so this network is not trained;
/// it exists as the exact finite-depth counterpart of the hard-threshold
/// solver and for the weight-coupling diagnostic.
#[derive(Debug, Clone)]
pub struct LihtParams {
    depth: usize,
    pub k: usize,
    layers: Vec<LihtLayer>,
}

impl LihtParams {
    pub fn from_layers(depth: usize, k: usize, layers: Vec<LihtLayer>) -> Result<Self> {
        if depth > 0 && layers.len() != depth {
            return Err(contract(format!(
                "expected {depth} layers, got {}",
                layers.len()
            )));
        }
        Ok(Self { depth, k, layers })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn layer(&self, l: usize) -> &LihtLayer {
        &self.layers[l]
    }

    pub fn stored_layers(&self) -> &[LihtLayer] {
        &self.layers
    }

    pub fn weight_coupling_residual(&self, w: &Matrix) -> Result<Vec<f64>> {
        self.layers
            .iter()
            .map(|lay| coupling_residual(&lay.w_t, &lay.w_e, w))
            .collect()
    }
}

/// Analytic weights replicated across `depth` layers.
pub fn liht_init_analytic(w: &Matrix, mu: f64, k: usize, depth: usize) -> Result<LihtParams> {
    if mu <= 0.0 {
        return Err(contract(format!("liht_init_analytic requires μ > 0, got {mu}")));
    }
    let (w_t, w_e) = iht_analytic_weights(w, mu)?;
    let layers = (0..depth)
        .map(|_| LihtLayer {
            w_t: w_t.clone(),
            w_e: w_e.clone(),
        })
        .collect();
    LihtParams::from_layers(depth, k, layers)
}

/// `x_{l+1} = H_k(W_t·x_l + W_e·y)` from x⁰ = 0; the output is always
/// k-sparse.
pub fn liht_forward(params: &LihtParams, y: &Matrix) -> Result<Matrix> {
    let m = params
        .layers
        .first()
        .map(|l| l.w_t.rows())
        .unwrap_or_else(|| y.rows());
    let mut x = Matrix::zeros(m, y.cols());
    for lay in &params.layers {
        let pre = lay.w_t.matmul(&x)?.add(&lay.w_e.matmul(y)?)?;
        x = hard_threshold_topk(&pre, params.k)?;
    }
    Ok(x)
}

// ---------------------------------------------------------------------------
// Variance-image network (sigmoid-gated positive thresholding)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct LSparcomLayer {
    pub w_t: Matrix,
    pub w_e: Matrix,
    /// Gate location; unconstrained.
    pub alpha: f64,
    /// Gate sharpness in the log domain; the effective β is exp(raw_beta).
    pub raw_beta: f64,
}

/// Unrolled network for the super-resolution variance model: the same
/// recursion as the soft-threshold network with the sigmoid-gated positive
/// threshold as activation, so outputs are entrywise nonnegative.
#[derive(Debug, Clone)]
pub struct LSparcomParams {
    depth: usize,
    layers: Vec<LSparcomLayer>,
}

impl LSparcomParams {
    pub fn from_layers(depth: usize, layers: Vec<LSparcomLayer>) -> Result<Self> {
        if depth > 0 && layers.len() != depth {
            return Err(contract(format!(
                "expected {depth} layers, got {}",
                layers.len()
            )));
        }
        Ok(Self { depth, layers })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn stored_layers(&self) -> &[LSparcomLayer] {
        &self.layers
    }
}

/// Analytic substitution for the variance model dictionary, with a uniform
/// starting gate (α₀, β₀) on every layer.
pub fn lsparcom_init_analytic(
    w: &Matrix,
    mu: f64,
    alpha0: f64,
    beta0: f64,
    depth: usize,
) -> Result<LSparcomParams> {
    if mu <= 0.0 || beta0 <= 0.0 {
        return Err(contract("lsparcom_init_analytic requires μ > 0 and β₀ > 0"));
    }
    let (w_t, w_e) = iht_analytic_weights(w, mu)?;
    let layers = (0..depth)
        .map(|_| LSparcomLayer {
            w_t: w_t.clone(),
            w_e: w_e.clone(),
            alpha: alpha0,
            raw_beta: positive_to_raw(beta0),
        })
        .collect();
    LSparcomParams::from_layers(depth, layers)
}

pub fn lsparcom_forward_on_tape(
    tape: &mut Tape,
    params: &LSparcomParams,
    g_y: &Matrix,
) -> Result<(Var, Vec<Var>)> {
    let mut param_vars = Vec::new();
    let mut layer_vars = Vec::new();
    for lay in &params.layers {
        let w_t = tape.leaf(lay.w_t.clone());
        let w_e = tape.leaf(lay.w_e.clone());
        let alpha = tape.scalar_leaf(lay.alpha)?;
        let raw_beta = tape.scalar_leaf(lay.raw_beta)?;
        let beta = tape.exp(raw_beta)?;
        param_vars.extend_from_slice(&[w_t, w_e, alpha, raw_beta]);
        layer_vars.push((w_t, w_e, alpha, beta));
    }
    let m = params
        .layers
        .first()
        .map(|l| l.w_t.rows())
        .unwrap_or_else(|| g_y.rows());
    let g_var = tape.leaf(g_y.clone());
    let mut x = tape.leaf(Matrix::zeros(m, g_y.cols()));
    for (w_t, w_e, alpha, beta) in layer_vars.iter().take(params.depth).copied() {
        let tx = tape.matmul(w_t, x)?;
        let eg = tape.matmul(w_e, g_var)?;
        let pre = tape.add(tx, eg)?;
        x = tape.sigmoid_plus_threshold(pre, alpha, beta)?;
    }
    Ok((x, param_vars))
}

pub fn lsparcom_forward(params: &LSparcomParams, g_y: &Matrix) -> Result<Matrix> {
    let mut tape = Tape::new();
    let (out, _) = lsparcom_forward_on_tape(&mut tape, params, g_y)?;
    Ok(tape.value(out).clone())
}

// ---------------------------------------------------------------------------
// Unrolled ADMM
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct UadmmOpParams {
    pub d: Matrix,
    pub raw_lambda: f64,
    pub raw_rho: f64,
    pub raw_eta: f64,
}

/// Per-stage copies of the splitting coefficients (and operators) of the
/// ADMM solver. Scalars are always trainable; the operators only when
/// `train_d` is set.
#[derive(Debug, Clone)]
pub struct UnrolledAdmmParams {
    stages: Vec<Vec<UadmmOpParams>>,
    pub train_d: bool,
}

impl UnrolledAdmmParams {
    pub fn from_stages(stages: Vec<Vec<UadmmOpParams>>, train_d: bool) -> Result<Self> {
        if let Some(first) = stages.first() {
            if first.is_empty() {
                return Err(contract("each stage needs at least one operator"));
            }
            if stages.iter().any(|s| s.len() != first.len()) {
                return Err(contract("all stages must carry the same operator count"));
            }
        }
        Ok(Self { stages, train_d })
    }

    pub fn depth(&self) -> usize {
        self.stages.len()
    }

    pub fn ops_per_stage(&self) -> usize {
        self.stages.first().map(|s| s.len()).unwrap_or(0)
    }

    pub fn stages(&self) -> &[Vec<UadmmOpParams>] {
        &self.stages
    }
}

/// Stage coefficients frozen at the classic solver's values.
pub fn uadmm_init_from_classic(
    ops: &[AdmmOp],
    depth: usize,
    train_d: bool,
) -> Result<UnrolledAdmmParams> {
    if ops.is_empty() {
        return Err(contract("uadmm_init_from_classic requires at least one operator"));
    }
    let stage: Vec<UadmmOpParams> = ops
        .iter()
        .map(|op| UadmmOpParams {
            d: op.d.clone(),
            raw_lambda: positive_to_raw(op.lambda),
            raw_rho: positive_to_raw(op.rho),
            raw_eta: positive_to_raw(op.eta),
        })
        .collect();
    UnrolledAdmmParams::from_stages(vec![stage; depth], train_d)
}

/// Records `depth` stages of the three splitting updates. The x-update is a
/// `linear_solve` node, so its backward pass solves the transposed system
/// against the incoming gradient.
pub fn uadmm_forward_on_tape(
    tape: &mut Tape,
    params: &UnrolledAdmmParams,
    w: &Matrix,
    y: &Matrix,
) -> Result<(Var, Vec<Var>)> {
    let wt = w.transpose();
    let wtw = tape.leaf(wt.matmul(w)?);
    let wty = tape.leaf(wt.matmul(y)?);

    let mut param_vars = Vec::new();
    let mut x = tape.leaf(Matrix::zeros(w.cols(), y.cols()));
    let mut z: Vec<Var> = Vec::new();
    let mut alpha: Vec<Var> = Vec::new();
    for op in params.stages.first().map(|s| s.as_slice()).unwrap_or(&[]) {
        z.push(tape.leaf(Matrix::zeros(op.d.rows(), y.cols())));
        alpha.push(tape.leaf(Matrix::zeros(op.d.rows(), y.cols())));
    }

    for stage in &params.stages {
        let mut ds = Vec::new();
        let mut rhos = Vec::new();
        let mut lams = Vec::new();
        let mut etas = Vec::new();
        for op in stage {
            let d = tape.leaf(op.d.clone());
            let raw_l = tape.scalar_leaf(op.raw_lambda)?;
            let raw_r = tape.scalar_leaf(op.raw_rho)?;
            let raw_e = tape.scalar_leaf(op.raw_eta)?;
            if params.train_d {
                param_vars.push(d);
            }
            param_vars.extend_from_slice(&[raw_l, raw_r, raw_e]);
            ds.push(d);
            lams.push(tape.exp(raw_l)?);
            rhos.push(tape.exp(raw_r)?);
            etas.push(tape.exp(raw_e)?);
        }

        let mut system = wtw;
        let mut rhs = wty;
        for (i, &d) in ds.iter().enumerate() {
            let dt = tape.transpose(d);
            let dtd = tape.matmul(dt, d)?;
            let dtd_scaled = tape.scale_by_param(dtd, rhos[i])?;
            system = tape.add(system, dtd_scaled)?;
            let diff = tape.sub(z[i], alpha[i])?;
            let term = tape.matmul(dt, diff)?;
            let term_scaled = tape.scale_by_param(term, rhos[i])?;
            rhs = tape.add(rhs, term_scaled)?;
        }
        x = tape.linear_solve(system, rhs)?;

        for (i, &d) in ds.iter().enumerate() {
            let dx = tape.matmul(d, x)?;
            let zin = tape.add(dx, alpha[i])?;
            let thresh = tape.scalar_div(lams[i], rhos[i])?;
            z[i] = tape.soft_threshold(zin, thresh)?;
            let gap = tape.sub(dx, z[i])?;
            let step = tape.scale_by_param(gap, etas[i])?;
            alpha[i] = tape.add(alpha[i], step)?;
        }
    }
    Ok((x, param_vars))
}

pub fn uadmm_forward(params: &UnrolledAdmmParams, w: &Matrix, y: &Matrix) -> Result<Matrix> {
    let mut tape = Tape::new();
    let (out, _) = uadmm_forward_on_tape(&mut tape, params, w, y)?;
    Ok(tape.value(out).clone())
}

// ---------------------------------------------------------------------------
// Variance image
// ---------------------------------------------------------------------------

/// Per-pixel unbiased temporal variance of a frame stack, flattened row-major
/// into an N²-vector. Requires at least two frames.
pub fn variance_image(frames: &[Matrix]) -> Result<Matrix> {
    if frames.len() < 2 {
        return Err(contract(format!(
            "variance_image requires at least 2 frames, got {}",
            frames.len()
        )));
    }
    let shape = frames[0].shape();
    if frames.iter().any(|f| f.shape() != shape) {
        return Err(contract("variance_image frames must share one shape"));
    }
    let count = shape.0 * shape.1;
    // Welford accumulation per pixel.
    let mut mean = vec![0.0; count];
    let mut m2 = vec![0.0; count];
    for (t, frame) in frames.iter().enumerate() {
        let n = (t + 1) as f64;
        for (i, &v) in frame.as_slice().iter().enumerate() {
            let delta = v - mean[i];
            mean[i] += delta / n;
            m2[i] += delta * (v - mean[i]);
        }
    }
    let denom = (frames.len() - 1) as f64;
    Matrix::new(count, 1, m2.into_iter().map(|v| v / denom).collect())
}

// ---------------------------------------------------------------------------
// Trainable model wrapper
// ---------------------------------------------------------------------------

/// The trainable network kinds behind one interface: forward passes, flat
/// parameter vectors in a fixed order, and exact parameter counts.
#[derive(Debug, Clone)]
pub enum Model {
    Lista(ListaParams),
    LSparcom(LSparcomParams),
    /// Carries the measurement matrix, which the stage updates need but which
    /// is never trained.
    Uadmm { params: UnrolledAdmmParams, w: Matrix },
}

impl Model {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Model::Lista(_) => "lista",
            Model::LSparcom(_) => "lsparcom",
            Model::Uadmm { .. } => "uadmm",
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Model::Lista(p) => p.depth(),
            Model::LSparcom(p) => p.depth(),
            Model::Uadmm { params, .. } => params.depth(),
        }
    }

    pub fn forward(&self, y: &Matrix) -> Result<Matrix> {
        match self {
            Model::Lista(p) => lista_forward(p, y),
            Model::LSparcom(p) => lsparcom_forward(p, y),
            Model::Uadmm { params, w } => uadmm_forward(params, w, y),
        }
    }

    pub fn forward_on_tape(&self, tape: &mut Tape, y: &Matrix) -> Result<(Var, Vec<Var>)> {
        match self {
            Model::Lista(p) => lista_forward_on_tape(tape, p, y),
            Model::LSparcom(p) => lsparcom_forward_on_tape(tape, p, y),
            Model::Uadmm { params, w } => uadmm_forward_on_tape(tape, params, w, y),
        }
    }

    /// Exact number of trainable scalars (flattened length).
    pub fn param_count(&self) -> usize {
        match self {
            Model::Lista(p) => p
                .layers
                .iter()
                .map(|l| l.w_t.rows() * l.w_t.cols() + l.w_e.rows() * l.w_e.cols() + 1)
                .sum(),
            Model::LSparcom(p) => p
                .layers
                .iter()
                .map(|l| l.w_t.rows() * l.w_t.cols() + l.w_e.rows() * l.w_e.cols() + 2)
                .sum(),
            Model::Uadmm { params, .. } => params
                .stages
                .iter()
                .flat_map(|s| s.iter())
                .map(|op| {
                    3 + if params.train_d {
                        op.d.rows() * op.d.cols()
                    } else {
                        0
                    }
                })
                .sum(),
        }
    }

    /// Trainable scalars in the same order the tape leaves are emitted.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        match self {
            Model::Lista(p) => {
                for lay in &p.layers {
                    out.extend_from_slice(lay.w_t.as_slice());
                    out.extend_from_slice(lay.w_e.as_slice());
                    out.push(lay.raw_lambda);
                }
            }
            Model::LSparcom(p) => {
                for lay in &p.layers {
                    out.extend_from_slice(lay.w_t.as_slice());
                    out.extend_from_slice(lay.w_e.as_slice());
                    out.push(lay.alpha);
                    out.push(lay.raw_beta);
                }
            }
            Model::Uadmm { params, .. } => {
                for stage in &params.stages {
                    for op in stage {
                        if params.train_d {
                            out.extend_from_slice(op.d.as_slice());
                        }
                        out.push(op.raw_lambda);
                        out.push(op.raw_rho);
                        out.push(op.raw_eta);
                    }
                }
            }
        }
        out
    }

    /// Writes a flat vector (same order as [`Model::flatten`]) back into the
    /// parameter bundles.
    pub fn unflatten(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(contract(format!(
                "flat vector length {} does not match parameter count {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut pos = 0usize;
        let take_matrix = |m: &mut Matrix, pos: &mut usize| -> Result<()> {
            let len = m.rows() * m.cols();
            let slice = &flat[*pos..*pos + len];
            if !slice.iter().all(|v| v.is_finite()) {
                return Err(crate::error::numeric("non-finite parameter update"));
            }
            m.as_mut_slice().copy_from_slice(slice);
            *pos += len;
            Ok(())
        };
        match self {
            Model::Lista(p) => {
                for lay in &mut p.layers {
                    take_matrix(&mut lay.w_t, &mut pos)?;
                    take_matrix(&mut lay.w_e, &mut pos)?;
                    lay.raw_lambda = flat[pos];
                    pos += 1;
                }
            }
            Model::LSparcom(p) => {
                for lay in &mut p.layers {
                    take_matrix(&mut lay.w_t, &mut pos)?;
                    take_matrix(&mut lay.w_e, &mut pos)?;
                    lay.alpha = flat[pos];
                    lay.raw_beta = flat[pos + 1];
                    pos += 2;
                }
            }
            Model::Uadmm { params, .. } => {
                let train_d = params.train_d;
                for stage in &mut params.stages {
                    for op in stage {
                        if train_d {
                            take_matrix(&mut op.d, &mut pos)?;
                        }
                        op.raw_lambda = flat[pos];
                        op.raw_rho = flat[pos + 1];
                        op.raw_eta = flat[pos + 2];
                        pos += 3;
                    }
                }
            }
        }
        Ok(())
    }
}
