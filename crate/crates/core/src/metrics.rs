//! Evaluation metrics and the CSV emitters for training and evaluation
//! reports.
//!
//! CSV values are plain numerics (no quoting); an exact match is encoded as
//! the string `inf` in the psnr column. Floats are written with Rust's
//! shortest-roundtrip formatting so files reparse to identical values.

use crate::error::{contract, Result};
use crate::matrix::Matrix;
use std::io::Write;
use std::path::Path;

/// Normalized mean squared error `‖x̂ − x*‖² / ‖x*‖²`.
/// Errors when the reference is identically zero.
pub fn nmse(pred: &Matrix, reference: &Matrix) -> Result<f64> {
    if pred.shape() != reference.shape() {
        return Err(crate::error::Error::Shape {
            op: "nmse",
            lhs: pred.shape(),
            rhs: reference.shape(),
        });
    }
    let ref_energy = reference.inner(reference)?;
    if ref_energy == 0.0 {
        return Err(contract("nmse reference has zero norm"));
    }
    let diff = pred.sub(reference)?;
    Ok(diff.inner(&diff)? / ref_energy)
}

/// Peak signal-to-noise ratio `10·log10(peak²·count / ‖x̂ − x*‖²)`;
/// +∞ for an exact match.
pub fn psnr(pred: &Matrix, reference: &Matrix, peak: f64) -> Result<f64> {
    if pred.shape() != reference.shape() {
        return Err(crate::error::Error::Shape {
            op: "psnr",
            lhs: pred.shape(),
            rhs: reference.shape(),
        });
    }
    if peak <= 0.0 {
        return Err(contract(format!("psnr requires peak > 0, got {peak}")));
    }
    let diff = pred.sub(reference)?;
    let err = diff.inner(&diff)?;
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    let count = (pred.rows() * pred.cols()) as f64;
    Ok(10.0 * (peak * peak * count / err).log10())
}

fn fmt_value(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

/// Per-epoch training metrics with the pinned header
/// `epoch,train_loss,val_nmse_vs_ista_target,val_nmse_vs_planted,seconds`.
pub fn write_metrics_csv(
    path: &Path,
    train_loss: &[f64],
    val_nmse_target: &[f64],
    val_nmse_planted: &[f64],
    seconds: &[f64],
) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(
        file,
        "epoch,train_loss,val_nmse_vs_ista_target,val_nmse_vs_planted,seconds"
    )?;
    for (i, loss) in train_loss.iter().enumerate() {
        writeln!(
            file,
            "{},{},{},{},{}",
            i + 1,
            fmt_value(*loss),
            fmt_value(val_nmse_target[i]),
            fmt_value(val_nmse_planted[i]),
            fmt_value(seconds[i]),
        )?;
    }
    Ok(())
}

/// One row of an evaluation report.
#[derive(Debug, Clone)]
pub struct EvalRow {
    pub model: String,
    pub depth: usize,
    pub nmse: f64,
    pub psnr: f64,
    pub params_count: usize,
    pub wallclock_ms: f64,
}

/// Evaluation report with the pinned header
/// `model,depth,nmse,psnr,params_count,wallclock_ms`.
pub fn write_eval_report_csv(path: &Path, rows: &[EvalRow]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "model,depth,nmse,psnr,params_count,wallclock_ms")?;
    for r in rows {
        writeln!(
            file,
            "{},{},{},{},{},{}",
            r.model,
            r.depth,
            fmt_value(r.nmse),
            fmt_value(r.psnr),
            r.params_count,
            fmt_value(r.wallclock_ms),
        )?;
    }
    Ok(())
}

/// Per-layer weight-coupling residuals with header `layer,residual`.
pub fn write_residuals_csv(path: &Path, residuals: &[f64]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "layer,residual")?;
    for (l, r) in residuals.iter().enumerate() {
        writeln!(file, "{},{}", l + 1, fmt_value(*r))?;
    }
    Ok(())
}
