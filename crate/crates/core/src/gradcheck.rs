//! Finite-difference verification of the recorded gradients, shared by the
//! CLI subcommand and the acceptance suite.
//!
//! Inputs whose threshold pre-activations fall inside a safety band around a
//! kink are rejected and resampled: central differences straddle the kink
//! there and disagree with the one-sided subgradient convention by design.

use crate::error::{contract, Result};
use crate::matrix::Matrix;
use crate::nets::Model;
use crate::rng::{gaussian_matrix, Rng};
use crate::tape::{finite_diff_grad, Tape};
use crate::train::LossKind;

/// Pre-activations must sit at least this far from every threshold kink.
pub const KINK_BAND: f64 = 1e-3;

/// One accepted gradient comparison.
#[derive(Debug, Clone)]
pub struct GradcheckSample {
    pub seed: u64,
    /// Smallest kink margin observed on the accepted forward pass.
    pub kink_margin: f64,
    /// Worst relative disagreement over all trainable scalars.
    pub max_rel_err: f64,
    pub params_checked: usize,
    /// Resamples needed before a kink-safe input appeared.
    pub rejections: usize,
}

// Relative error with a floor: tiny gradients are compared absolutely at the
// floor scale, which sits well above the finite-difference noise.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

fn record_loss(
    model: &Model,
    y: &Matrix,
    target: &Matrix,
    loss_kind: LossKind,
    lambda_loss: f64,
) -> Result<(Tape, crate::tape::Var, Vec<crate::tape::Var>)> {
    let mut tape = Tape::new();
    let (out, vars) = model.forward_on_tape(&mut tape, y)?;
    let target_var = tape.leaf(target.clone());
    let loss = match loss_kind {
        LossKind::Mse => tape.mse_loss(out, target_var)?,
        LossKind::Masked => tape.masked_loss(out, target_var, lambda_loss)?,
    };
    Ok((tape, loss, vars))
}

fn loss_on_tape(
    model: &Model,
    y: &Matrix,
    target: &Matrix,
    loss_kind: LossKind,
    lambda_loss: f64,
) -> Result<(Tape, f64, Vec<f64>)> {
    let (tape, loss, vars) = record_loss(model, y, target, loss_kind, lambda_loss)?;
    let value = tape.value(loss).get(0, 0);
    let grads = tape.backward(loss)?;
    let mut flat = Vec::with_capacity(model.param_count());
    for v in &vars {
        grads.extend_flat(*v, &mut flat);
    }
    Ok((tape, value, flat))
}

// Loss value only — the finite-difference probe needs no backward pass.
fn loss_value(
    model: &Model,
    y: &Matrix,
    target: &Matrix,
    loss_kind: LossKind,
    lambda_loss: f64,
) -> Result<f64> {
    let (tape, loss, _) = record_loss(model, y, target, loss_kind, lambda_loss)?;
    Ok(tape.value(loss).get(0, 0))
}

/// Checks every trainable scalar of `model` against central differences on
/// one random input drawn from `seed`, resampling until the forward pass
/// clears the kink band and the loss actually depends on the parameters.
/// `input_dim` is the measurement length. Gated (variance-image) networks
/// get nonnegative inputs, matching their physical domain — an all-negative
/// pre-activation would zero every gradient and make the check vacuous.
pub fn gradcheck_model(
    model: &Model,
    input_dim: usize,
    target_dim: usize,
    loss_kind: LossKind,
    lambda_loss: f64,
    h: f64,
    seed: u64,
) -> Result<GradcheckSample> {
    let nonnegative_input = matches!(model, Model::LSparcom(_));
    let mut rng = Rng::new(seed);
    let mut rejections = 0usize;
    for _ in 0..200 {
        let mut y = gaussian_matrix(input_dim, 1, &mut rng);
        if nonnegative_input {
            for v in y.as_mut_slice() {
                *v = v.abs();
            }
        }
        let target = gaussian_matrix(target_dim, 1, &mut rng);
        let (tape, _, analytic) = loss_on_tape(model, &y, &target, loss_kind, lambda_loss)?;
        let margin = tape.kink_margin();
        if margin < KINK_BAND || analytic.iter().all(|g| *g == 0.0) {
            rejections += 1;
            continue;
        }

        let base = model.flatten();
        let mut probe = model.clone();
        let mut f = |p: &[f64]| -> f64 {
            probe.unflatten(p).expect("parameter vector length fixed");
            loss_value(&probe, &y, &target, loss_kind, lambda_loss).expect("forward")
        };
        let numeric = finite_diff_grad(&mut f, &base, h);

        let mut max_err = 0.0_f64;
        for (&a, &n) in analytic.iter().zip(numeric.iter()) {
            max_err = max_err.max(rel_err(a, n));
        }
        return Ok(GradcheckSample {
            seed,
            kink_margin: margin,
            max_rel_err: max_err,
            params_checked: base.len(),
            rejections,
        });
    }
    Err(contract(
        "could not sample an input clear of threshold kinks in 200 attempts",
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{lista_init_analytic, lsparcom_init_analytic, uadmm_init_from_classic};
    use crate::solvers::AdmmOp;

    #[test]
    fn lista_gradients_match_finite_differences() {
        let w = crate::datagen::gen_dictionary(6, 12, 3).unwrap();
        let mu = 1.01 * crate::iterative::power_iteration(&w, 200, 3).unwrap();
        let model = Model::Lista(lista_init_analytic(&w, mu, 0.1, 3, false).unwrap());
        let sample = gradcheck_model(&model, 6, 12, LossKind::Mse, 0.0, 1e-6, 11).unwrap();
        assert!(
            sample.max_rel_err <= 1e-5,
            "max rel err {}",
            sample.max_rel_err
        );
        assert_eq!(sample.params_checked, 3 * (12 * 12 + 12 * 6 + 1));
    }

    #[test]
    fn tied_lista_gradients_accumulate_across_layers() {
        let w = crate::datagen::gen_dictionary(5, 9, 4).unwrap();
        let mu = 1.01 * crate::iterative::power_iteration(&w, 200, 4).unwrap();
        let model = Model::Lista(lista_init_analytic(&w, mu, 0.15, 4, true).unwrap());
        let sample = gradcheck_model(&model, 5, 9, LossKind::Mse, 0.0, 1e-6, 12).unwrap();
        assert!(sample.max_rel_err <= 1e-5, "max rel err {}", sample.max_rel_err);
        assert_eq!(sample.params_checked, 9 * 9 + 9 * 5 + 1);
    }

    #[test]
    fn lsparcom_gradients_match_finite_differences() {
        let w = crate::datagen::lsparcom_dictionary(4, 8).unwrap();
        let mu = 1.01 * crate::iterative::power_iteration(&w, 200, 5).unwrap();
        let model = Model::LSparcom(lsparcom_init_analytic(&w, mu, 0.05, 8.0, 2).unwrap());
        let sample = gradcheck_model(&model, 16, 64, LossKind::Masked, 0.01, 1e-6, 13).unwrap();
        assert!(sample.max_rel_err <= 1e-5, "max rel err {}", sample.max_rel_err);
    }

    #[test]
    fn uadmm_gradients_match_finite_differences_including_operators() {
        let w = crate::datagen::gen_dictionary(8, 6, 6).unwrap();
        let ops = [AdmmOp {
            d: Matrix::identity(6),
            lambda: 0.2,
            rho: 1.2,
            eta: 0.9,
        }];
        let model = Model::Uadmm {
            params: uadmm_init_from_classic(&ops, 2, true).unwrap(),
            w: w.clone(),
        };
        let sample = gradcheck_model(&model, 8, 6, LossKind::Mse, 0.0, 1e-6, 14).unwrap();
        assert!(sample.max_rel_err <= 1e-4, "max rel err {}", sample.max_rel_err);
        assert_eq!(sample.params_checked, 2 * (36 + 3));
    }
}
