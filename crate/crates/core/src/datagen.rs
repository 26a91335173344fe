//! Synthetic problem families with planted ground truth — the only data
//! source, so every experiment regenerates bit-identically from its seed.
//!
//! One generator stream per dataset, consumed in a fixed documented order:
//! dictionary entries first, then per-sample support, values, and noise,
//! training samples before test samples.

use crate::container::Container;
use crate::error::{contract, Result};
use crate::iterative::power_iteration;
use crate::matrix::Matrix;
use crate::rng::{gaussian_matrix, Rng};
use crate::solvers::ista_solve;

/// Numeric codes identifying the generator that produced a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    SparseCoding = 1,
    Rpca = 2,
    Lsparcom = 3,
}

impl GeneratorKind {
    pub fn code(self) -> f64 {
        self as i32 as f64
    }

    pub fn from_code(code: f64) -> Result<Self> {
        match code as i32 {
            1 => Ok(Self::SparseCoding),
            2 => Ok(Self::Rpca),
            3 => Ok(Self::Lsparcom),
            other => Err(contract(format!("unknown generator kind code {other}"))),
        }
    }
}

/// Named-array bundle holding a problem family instance.
///
/// Sample arrays are `None` when the corresponding split is empty (the
/// container stores them with a zero column count).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub kind: GeneratorKind,
    pub w: Matrix,
    pub y_train: Option<Matrix>,
    pub x_train: Option<Matrix>,
    pub y_test: Option<Matrix>,
    pub x_test: Option<Matrix>,
    /// Planted codes; supervision targets may differ (see the sparse-coding
    /// generator).
    pub x_planted_train: Option<Matrix>,
    pub x_planted_test: Option<Matrix>,
    pub h1: Option<Matrix>,
    pub h2: Option<Matrix>,
    pub l_mat: Option<Matrix>,
    pub s_mat: Option<Matrix>,
    pub seed: u64,
    pub k: usize,
    pub noise_sigma: f64,
    pub lambda_sup: f64,
}

impl Dataset {
    pub fn to_container(&self) -> Result<Container> {
        let mut c = Container::new();
        c.push_matrix("W", &self.w)?;
        push_split(&mut c, "Y_train", &self.y_train, self.w.rows())?;
        push_split(&mut c, "X_train", &self.x_train, self.w.cols())?;
        push_split(&mut c, "Y_test", &self.y_test, self.w.rows())?;
        push_split(&mut c, "X_test", &self.x_test, self.w.cols())?;
        push_split(&mut c, "Xplanted_train", &self.x_planted_train, self.w.cols())?;
        push_split(&mut c, "Xplanted_test", &self.x_planted_test, self.w.cols())?;
        for (name, m) in [
            ("H1", &self.h1),
            ("H2", &self.h2),
            ("Lmat", &self.l_mat),
            ("Smat", &self.s_mat),
        ] {
            if let Some(m) = m {
                c.push_matrix(name, m)?;
            }
        }
        c.push_scalar("seed", self.seed as f64)?;
        c.push_scalar("k", self.k as f64)?;
        c.push_scalar("noise_sigma", self.noise_sigma)?;
        c.push_scalar("lambda_sup", self.lambda_sup)?;
        c.push_scalar("generator", self.kind.code())?;
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Dataset> {
        Ok(Dataset {
            kind: GeneratorKind::from_code(c.scalar("generator")?)?,
            w: c.matrix("W")?,
            y_train: read_split(c, "Y_train")?,
            x_train: read_split(c, "X_train")?,
            y_test: read_split(c, "Y_test")?,
            x_test: read_split(c, "X_test")?,
            x_planted_train: read_split(c, "Xplanted_train")?,
            x_planted_test: read_split(c, "Xplanted_test")?,
            h1: c.get("H1").map(|a| a.to_matrix()).transpose()?,
            h2: c.get("H2").map(|a| a.to_matrix()).transpose()?,
            l_mat: c.get("Lmat").map(|a| a.to_matrix()).transpose()?,
            s_mat: c.get("Smat").map(|a| a.to_matrix()).transpose()?,
            seed: c.scalar("seed")? as u64,
            k: c.scalar("k")? as usize,
            noise_sigma: c.scalar("noise_sigma")?,
            lambda_sup: c.scalar("lambda_sup")?,
        })
    }

    pub fn train_count(&self) -> usize {
        self.y_train.as_ref().map_or(0, |m| m.cols())
    }

    pub fn test_count(&self) -> usize {
        self.y_test.as_ref().map_or(0, |m| m.cols())
    }
}

fn push_split(c: &mut Container, name: &str, m: &Option<Matrix>, rows: usize) -> Result<()> {
    match m {
        Some(m) => c.push_matrix(name, m),
        None => c.push(
            name,
            crate::container::Array {
                dims: vec![rows as u64, 0],
                data: vec![],
            },
        ),
    }
}

fn read_split(c: &Container, name: &str) -> Result<Option<Matrix>> {
    match c.get(name) {
        None => Ok(None),
        Some(a) if a.is_empty() => Ok(None),
        Some(a) => Ok(Some(a.to_matrix()?)),
    }
}

/// Gaussian dictionary with unit-norm columns.
pub fn gen_dictionary(n: usize, m: usize, seed: u64) -> Result<Matrix> {
    let mut rng = Rng::new(seed);
    gen_dictionary_with(n, m, &mut rng)
}

fn gen_dictionary_with(n: usize, m: usize, rng: &mut Rng) -> Result<Matrix> {
    if n == 0 || m == 0 {
        return Err(contract("dictionary dimensions must be positive"));
    }
    let mut w = gaussian_matrix(n, m, rng);
    for j in 0..m {
        let norm: f64 = (0..n).map(|i| w.get(i, j).powi(2)).sum::<f64>().sqrt();
        for i in 0..n {
            w.set(i, j, w.get(i, j) / norm);
        }
    }
    Ok(w)
}

// k-sparse code with support from a partial shuffle and nonzeros uniform on
// ±[0.5, 1.5] (sign drawn first, then magnitude).
fn planted_code(m: usize, k: usize, rng: &mut Rng) -> Matrix {
    let mut x = Matrix::zeros(m, 1);
    for idx in rng.choose_k(m, k) {
        let sign = if rng.next_uniform() < 0.5 { -1.0 } else { 1.0 };
        let magnitude = 0.5 + rng.next_uniform();
        x.set(idx, 0, sign * magnitude);
    }
    x
}

/// Supervision settings for the sparse-coding family: targets are produced
/// by running the shrinkage solver to convergence on each measurement, not by
/// copying the planted codes (the planted codes are stored alongside for
/// evaluation).
const SUPERVISION_TOL: f64 = 1e-10;
const SUPERVISION_MAX_ITERS: usize = 20_000;

/// Synthetic sparse-coding family: `y = W·x_planted + σ·noise` with k-sparse
/// planted codes, plus converged-solver supervision targets.
///
/// Returns the dataset and the total number of solver iterations spent on
/// supervision (a reproducibility diagnostic).
#[allow(clippy::too_many_arguments)]
pub fn gen_sparse_coding_dataset(
    n: usize,
    m: usize,
    k: usize,
    t_train: usize,
    t_test: usize,
    noise_sigma: f64,
    lambda_sup: f64,
    seed: u64,
) -> Result<(Dataset, u64)> {
    if k > m {
        return Err(contract(format!("sparsity k = {k} exceeds code length {m}")));
    }
    if noise_sigma < 0.0 || lambda_sup < 0.0 {
        return Err(contract("noise_sigma and lambda_sup must be nonnegative"));
    }
    let mut rng = Rng::new(seed);
    let w = gen_dictionary_with(n, m, &mut rng)?;
    let mu = 1.01 * power_iteration(&w, 200, seed)?;

    let gen_split = |count: usize,
                         rng: &mut Rng|
     -> Result<(Option<Matrix>, Option<Matrix>, Option<Matrix>, u64)> {
        if count == 0 {
            return Ok((None, None, None, 0));
        }
        let mut y = Matrix::zeros(n, count);
        let mut x_sup = Matrix::zeros(m, count);
        let mut x_planted = Matrix::zeros(m, count);
        let mut iterations = 0u64;
        for t in 0..count {
            let code = planted_code(m, k, rng);
            let mut obs = w.matmul(&code)?;
            if noise_sigma > 0.0 {
                for i in 0..n {
                    obs.set(i, 0, obs.get(i, 0) + noise_sigma * rng.next_gaussian());
                }
            }
            let trace = ista_solve(
                &w,
                &obs,
                lambda_sup,
                mu,
                SUPERVISION_MAX_ITERS,
                SUPERVISION_TOL,
                false,
            )?;
            iterations += trace.iterations as u64;
            y.set_col(t, &obs)?;
            x_sup.set_col(t, &trace.x)?;
            x_planted.set_col(t, &code)?;
        }
        Ok((Some(y), Some(x_sup), Some(x_planted), iterations))
    };

    let (y_train, x_train, x_planted_train, it_train) = gen_split(t_train, &mut rng)?;
    let (y_test, x_test, x_planted_test, it_test) = gen_split(t_test, &mut rng)?;

    Ok((
        Dataset {
            kind: GeneratorKind::SparseCoding,
            w,
            y_train,
            x_train,
            y_test,
            x_test,
            x_planted_train,
            x_planted_test,
            h1: None,
            h2: None,
            l_mat: None,
            s_mat: None,
            seed,
            k,
            noise_sigma,
            lambda_sup,
        },
        it_train + it_test,
    ))
}

/// Low-rank plus sparse family: `Y = H1·L + H2·S` with `L = A·Bᵀ` from
/// gaussian factors and `S` Bernoulli-supported with ±amplitude entries.
/// `H1 = H2 = I`.
pub fn gen_rpca_dataset(
    rows: usize,
    cols: usize,
    rank: usize,
    sparse_density: f64,
    amplitude: f64,
    seed: u64,
) -> Result<Dataset> {
    if rank == 0 || rank > rows.min(cols) {
        return Err(contract(format!(
            "rank must lie in 1..={}, got {rank}",
            rows.min(cols)
        )));
    }
    if !(0.0..=1.0).contains(&sparse_density) {
        return Err(contract("sparse_density must lie in [0, 1]"));
    }
    let mut rng = Rng::new(seed);
    let a = gaussian_matrix(rows, rank, &mut rng);
    let b = gaussian_matrix(cols, rank, &mut rng);
    let l_mat = a.matmul(&b.transpose())?;
    let mut s_mat = Matrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            if rng.next_uniform() < sparse_density {
                let sign = if rng.next_uniform() < 0.5 { -1.0 } else { 1.0 };
                s_mat.set(i, j, sign * amplitude);
            }
        }
    }
    let y = l_mat.add(&s_mat)?;
    Ok(Dataset {
        kind: GeneratorKind::Rpca,
        w: Matrix::identity(rows),
        y_train: Some(y),
        x_train: None,
        y_test: None,
        x_test: None,
        x_planted_train: None,
        x_planted_test: None,
        h1: Some(Matrix::identity(rows)),
        h2: Some(Matrix::identity(rows)),
        l_mat: Some(l_mat),
        s_mat: Some(s_mat),
        seed,
        k: rank,
        noise_sigma: 0.0,
        lambda_sup: 0.0,
    })
}

/// Dictionary for the variance-image model: one column per high-resolution
/// pixel holding the downsampled point-spread response of a unit emitter.
///
/// The PSF is an isotropic gaussian of one low-resolution pixel standard
/// deviation, evaluated on the high-resolution grid, truncated at three
/// standard deviations, then box-summed over q×q blocks (q = m/n).
pub fn lsparcom_dictionary(n: usize, m: usize) -> Result<Matrix> {
    if n == 0 || m == 0 || m % n != 0 {
        return Err(contract(format!(
            "high-res grid {m} must be a positive multiple of low-res grid {n}"
        )));
    }
    let q = m / n;
    let sigma_hr = q as f64; // one low-res pixel, in high-res units
    let radius = 3.0 * sigma_hr;
    let mut w = Matrix::zeros(n * n, m * m);
    for er in 0..m {
        for ec in 0..m {
            let col = er * m + ec;
            // PSF on the high-res grid, truncated.
            for hr in 0..m {
                for hc in 0..m {
                    let dr = hr as f64 - er as f64;
                    let dc = hc as f64 - ec as f64;
                    let dist2 = dr * dr + dc * dc;
                    if dist2 > radius * radius {
                        continue;
                    }
                    let value = (-dist2 / (2.0 * sigma_hr * sigma_hr)).exp();
                    // box downsampling: high-res pixel (hr, hc) lands in
                    // low-res pixel (hr/q, hc/q)
                    let row = (hr / q) * n + (hc / q);
                    w.set(row, col, w.get(row, col) + value);
                }
            }
        }
    }
    Ok(w)
}

/// Variance-image family: nonnegative sparse emitter maps on the m×m grid
/// observed through the PSF dictionary, `g_Y = W·x`, noiseless.
pub fn gen_lsparcom_dataset(
    n: usize,
    m: usize,
    emitters: usize,
    t_train: usize,
    t_test: usize,
    seed: u64,
) -> Result<Dataset> {
    let w = lsparcom_dictionary(n, m)?;
    if emitters > m * m {
        return Err(contract(format!(
            "emitter count {emitters} exceeds grid size {}",
            m * m
        )));
    }
    let mut rng = Rng::new(seed);

    let gen_split = |count: usize, rng: &mut Rng| -> Result<(Option<Matrix>, Option<Matrix>)> {
        if count == 0 {
            return Ok((None, None));
        }
        let mut g = Matrix::zeros(n * n, count);
        let mut x = Matrix::zeros(m * m, count);
        for t in 0..count {
            let mut code = Matrix::zeros(m * m, 1);
            for idx in rng.choose_k(m * m, emitters) {
                code.set(idx, 0, 0.5 + rng.next_uniform());
            }
            g.set_col(t, &w.matmul(&code)?)?;
            x.set_col(t, &code)?;
        }
        Ok((Some(g), Some(x)))
    };

    let (y_train, x_train) = gen_split(t_train, &mut rng)?;
    let (y_test, x_test) = gen_split(t_test, &mut rng)?;

    Ok(Dataset {
        kind: GeneratorKind::Lsparcom,
        x_planted_train: x_train.clone(),
        x_planted_test: x_test.clone(),
        w,
        y_train,
        x_train,
        y_test,
        x_test,
        h1: None,
        h2: None,
        l_mat: None,
        s_mat: None,
        seed,
        k: emitters,
        noise_sigma: 0.0,
        lambda_sup: 0.0,
    })
}
