//! `unroll` — generate synthetic inverse-problem data, run the classic
//! solvers, train their unrolled counterparts, and evaluate checkpoints.
//!
//! Exit codes: 0 on success, 1 on usage errors (bad flags, malformed or
//! incomplete config), 2 on numeric or data errors.

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use unroll_core::checkpoint::Checkpoint;
use unroll_core::config::{Config, ModelKind};
use unroll_core::container::Container;
use unroll_core::datagen::{
    gen_lsparcom_dataset, gen_rpca_dataset, gen_sparse_coding_dataset, lsparcom_dictionary,
    Dataset, GeneratorKind,
};
use unroll_core::error::Error;
use unroll_core::gradcheck::gradcheck_model;
use unroll_core::iterative::power_iteration;
use unroll_core::metrics::{nmse, psnr, write_eval_report_csv, write_metrics_csv, EvalRow};
use unroll_core::nets::{
    lista_init_analytic, lsparcom_init_analytic, uadmm_init_from_classic, Model,
};
use unroll_core::solvers::{
    admm_cs_solve, denoisers, ista_solve, iht_solve, lasso_objective, modl_alternation,
    rpca_ista_solve, AdmmOp,
};
use unroll_core::train::{train, TrainConfig};
use unroll_core::Matrix;

#[derive(Parser)]
#[command(name = "unroll", version, about = "Sparse inverse problems: classic solvers and unrolled networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset container from a config file.
    GenData {
        config: PathBuf,
        /// Output container path.
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
    },
    /// Train an unrolled network on a dataset container.
    Train {
        config: PathBuf,
        /// Dataset container.
        #[arg(short = 'd', long = "data")]
        data: PathBuf,
        /// Output checkpoint path.
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
        /// Per-epoch metrics CSV path.
        #[arg(long = "metrics")]
        metrics: PathBuf,
    },
    /// Evaluate a checkpoint on a dataset's test split.
    Eval {
        /// Dataset container.
        #[arg(short = 'd', long = "data")]
        data: PathBuf,
        /// Checkpoint container.
        #[arg(short = 'c', long = "checkpoint")]
        checkpoint: PathBuf,
        /// Report CSV path.
        #[arg(long = "report")]
        report: PathBuf,
    },
    /// Run a classic solver over a dataset and print per-sample results.
    Solve {
        /// Which solver to run.
        #[arg(long = "solver")]
        solver: SolverKind,
        config: PathBuf,
        /// Dataset container.
        #[arg(short = 'd', long = "data")]
        data: PathBuf,
    },
    /// Verify recorded gradients against central finite differences.
    Gradcheck { config: PathBuf },
    /// Time the classic solver against the unrolled network.
    Bench { config: PathBuf },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SolverKind {
    Ista,
    Iht,
    Admm,
    Rpca,
    Modl,
}

fn main() -> ExitCode {
    // die quietly when stdout is closed early (e.g. piped through head)
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::GenData { config, out } => cmd_gen_data(&config, &out),
        Command::Train {
            config,
            data,
            out,
            metrics,
        } => cmd_train(&config, &data, &out, &metrics),
        Command::Eval {
            data,
            checkpoint,
            report,
        } => cmd_eval(&data, &checkpoint, &report),
        Command::Solve {
            solver,
            config,
            data,
        } => cmd_solve(solver, &config, &data),
        Command::Gradcheck { config } => cmd_gradcheck(&config),
        Command::Bench { config } => cmd_bench(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                // malformed or incomplete configuration is a usage error
                Error::Config { .. } => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn read_config(path: &Path) -> Result<Config, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        line: 0,
        message: format!("cannot read config '{}': {e}", path.display()),
    })?;
    Config::parse(&text)
}

fn load_dataset(path: &Path) -> Result<Dataset, Error> {
    Dataset::from_container(&Container::load(path)?)
}

fn cmd_gen_data(config: &Path, out: &Path) -> Result<(), Error> {
    let cfg = read_config(config)?;
    let model = cfg.require_model()?;
    let n = cfg.require_n()?;
    let m = cfg.require_m()?;
    let k = cfg.require_k()?;
    let seed = cfg.require_seed()?;

    let dataset = match model {
        ModelKind::Lista | ModelKind::Liht | ModelKind::Uadmm => {
            let (data, iterations) = gen_sparse_coding_dataset(
                n,
                m,
                k,
                cfg.require_t_train()?,
                cfg.require_t_test()?,
                cfg.require_noise_sigma()?,
                cfg.require_lambda_sup()?,
                seed,
            )?;
            println!(
                "generated sparse-coding dataset: n={n} m={m} k={k} train={} test={} supervision_iterations={iterations}",
                data.train_count(),
                data.test_count()
            );
            data
        }
        ModelKind::Lsparcom => {
            let data = gen_lsparcom_dataset(
                n,
                m,
                k,
                cfg.require_t_train()?,
                cfg.require_t_test()?,
                seed,
            )?;
            println!(
                "generated variance-image dataset: low-res {n}x{n}, high-res {m}x{m}, emitters={k}, train={} test={}",
                data.train_count(),
                data.test_count()
            );
            data
        }
        ModelKind::Rpca => {
            let data = gen_rpca_dataset(
                n,
                m,
                k,
                cfg.density_or_default(),
                cfg.amplitude_or_default(),
                seed,
            )?;
            println!("generated low-rank plus sparse dataset: {n}x{m}, rank={k}");
            data
        }
    };
    dataset.to_container()?.save(out)?;
    println!("wrote {}", out.display());
    Ok(())
}

// Analytic warm start for the configured model kind.
fn init_model(cfg: &Config, data: &Dataset) -> Result<Model, Error> {
    let model = cfg.require_model()?;
    let depth = cfg.require_depth()?;
    let tied = cfg.require_tied()?;
    let seed = cfg.require_seed()?;
    let mu = 1.01 * power_iteration(&data.w, 200, seed)?;
    match model {
        ModelKind::Lista => Ok(Model::Lista(lista_init_analytic(
            &data.w,
            mu,
            data.lambda_sup,
            depth,
            tied,
        )?)),
        ModelKind::Lsparcom => {
            if tied {
                return Err(Error::Contract(
                    "the variance-image network has per-layer parameters; set tied=false".into(),
                ));
            }
            Ok(Model::LSparcom(lsparcom_init_analytic(
                &data.w,
                mu,
                DEFAULT_GATE_ALPHA,
                DEFAULT_GATE_BETA,
                depth,
            )?))
        }
        ModelKind::Uadmm => {
            if tied {
                return Err(Error::Contract(
                    "the unrolled splitting network has per-stage parameters; set tied=false".into(),
                ));
            }
            let ops = [AdmmOp {
                d: Matrix::identity(data.w.cols()),
                lambda: data.lambda_sup,
                rho: 1.0,
                eta: 1.0,
            }];
            Ok(Model::Uadmm {
                params: uadmm_init_from_classic(&ops, depth, false)?,
                w: data.w.clone(),
            })
        }
        ModelKind::Liht => Err(Error::Contract(
            "the hard-threshold network has no trainable parameters; use `solve --solver iht` or `eval`".into(),
        )),
        ModelKind::Rpca => Err(Error::Contract(
            "rpca is a dataset/solver family, not a trainable network".into(),
        )),
    }
}

// Starting gate for the variance-image network; mild threshold, moderately
// sharp sigmoid.
const DEFAULT_GATE_ALPHA: f64 = 0.01;
const DEFAULT_GATE_BETA: f64 = 10.0;

fn cmd_train(config: &Path, data: &Path, out: &Path, metrics: &Path) -> Result<(), Error> {
    let cfg = read_config(config)?;
    let dataset = load_dataset(data)?;
    let model = init_model(&cfg, &dataset)?;

    let train_cfg = TrainConfig {
        epochs: cfg.require_epochs()?,
        batch: cfg.require_batch()?,
        lr: cfg.require_lr()?,
        optimizer: cfg.require_optimizer()?,
        loss: cfg.require_loss()?,
        lambda_loss: cfg.lambda_loss_or_default(),
        seed: cfg.require_seed()?,
        validation_fraction: 0.2,
    };
    let report = train(model, &dataset, &train_cfg)?;

    let ckpt = Checkpoint::Model(report.final_model.clone());
    ckpt.to_container(train_cfg.seed, cfg.hash())?.save(out)?;
    write_metrics_csv(
        metrics,
        &report.train_loss,
        &report.val_nmse_target,
        &report.val_nmse_planted,
        &report.epoch_seconds,
    )?;
    println!(
        "trained {} depth {} for {} epochs in {:.2}s: final train loss {:.6e}, val nmse {:.6e}",
        ckpt.kind().name(),
        ckpt.depth(),
        train_cfg.epochs,
        report.wall_seconds,
        report.train_loss.last().copied().unwrap_or(f64::NAN),
        report.val_nmse_target.last().copied().unwrap_or(f64::NAN),
    );
    println!("wrote {} and {}", out.display(), metrics.display());
    Ok(())
}

fn cmd_eval(data: &Path, checkpoint: &Path, report: &Path) -> Result<(), Error> {
    let dataset = load_dataset(data)?;
    let container = Container::load(checkpoint)?;
    let ckpt = Checkpoint::from_container(&container)?;

    let y_test = dataset
        .y_test
        .as_ref()
        .ok_or_else(|| Error::Contract("dataset has no test measurements".into()))?;
    let x_test = dataset
        .x_test
        .as_ref()
        .ok_or_else(|| Error::Contract("dataset has no test targets".into()))?;

    let started = Instant::now();
    let mut pred = Matrix::zeros(x_test.rows(), x_test.cols());
    for t in 0..y_test.cols() {
        pred.set_col(t, &ckpt.forward(&y_test.col(t))?)?;
    }
    let wallclock_ms = started.elapsed().as_secs_f64() * 1e3;

    let nmse_value = nmse(&pred, x_test)?;
    let peak = x_test.max_abs();
    let psnr_value = psnr(&pred, x_test, peak)?;
    let row = EvalRow {
        model: ckpt.kind().name().to_string(),
        depth: ckpt.depth(),
        nmse: nmse_value,
        psnr: psnr_value,
        params_count: ckpt.params_count(),
        wallclock_ms,
    };
    write_eval_report_csv(report, &[row])?;
    println!(
        "eval {} depth {}: nmse {:.6e}, psnr {:.2}, params {}, {:.2} ms",
        ckpt.kind().name(),
        ckpt.depth(),
        nmse_value,
        psnr_value,
        ckpt.params_count(),
        wallclock_ms
    );
    println!("wrote {}", report.display());
    Ok(())
}

// Test split when present, otherwise the training split.
fn solve_columns(dataset: &Dataset) -> Result<(&Matrix, Option<&Matrix>), Error> {
    if let Some(y) = dataset.y_test.as_ref() {
        Ok((y, dataset.x_test.as_ref()))
    } else if let Some(y) = dataset.y_train.as_ref() {
        Ok((y, dataset.x_train.as_ref()))
    } else {
        Err(Error::Contract("dataset has no measurement columns".into()))
    }
}

const SOLVE_MAX_ITERS: usize = 10_000;
const SOLVE_TOL: f64 = 1e-10;

fn cmd_solve(solver: SolverKind, config: &Path, data: &Path) -> Result<(), Error> {
    let cfg = read_config(config)?;
    let dataset = load_dataset(data)?;
    let seed = cfg.require_seed()?;

    if matches!(solver, SolverKind::Rpca) {
        return solve_rpca(&cfg, &dataset, seed);
    }

    let (y_all, x_all) = solve_columns(&dataset)?;
    let w = &dataset.w;
    let mu = 1.01 * power_iteration(w, 200, seed)?;

    println!("sample,iterations,converged,objective,nmse_vs_target");
    for t in 0..y_all.cols() {
        let y = y_all.col(t);
        let (x, iterations, converged, objective) = match solver {
            SolverKind::Ista => {
                let lambda = cfg.require_lambda_sup()?;
                let trace = ista_solve(w, &y, lambda, mu, SOLVE_MAX_ITERS, SOLVE_TOL, false)?;
                let obj = lasso_objective(w, &y, lambda, &trace.x)?;
                (trace.x, trace.iterations, trace.converged, obj)
            }
            SolverKind::Iht => {
                let k = cfg.require_k()?;
                let trace = iht_solve(w, &y, k, mu, 500, false)?;
                let obj = *trace.objectives.last().unwrap_or(&f64::NAN);
                (trace.x, trace.iterations, trace.converged, obj)
            }
            SolverKind::Admm => {
                let lambda = cfg.require_lambda_sup()?;
                let ops = [AdmmOp {
                    d: Matrix::identity(w.cols()),
                    lambda,
                    rho: 1.0,
                    eta: 1.0,
                }];
                let trace = admm_cs_solve(w, &y, &ops, 500, false)?;
                let obj = *trace.objectives.last().unwrap_or(&f64::NAN);
                (trace.x, trace.iterations, trace.converged, obj)
            }
            SolverKind::Modl => {
                let lambda = cfg.require_lambda_sup()?;
                let x = modl_alternation(w, &y, lambda, &denoisers::soft(lambda), 10, 1e-10)?;
                let resid = y.sub(&w.matmul(&x)?)?;
                let obj = 0.5 * resid.inner(&resid)?;
                (x, 10, true, obj)
            }
            SolverKind::Rpca => unreachable!(),
        };
        let nmse_str = match x_all {
            Some(targets) => {
                let target = targets.col(t);
                if target.max_abs() == 0.0 {
                    "nan".to_string()
                } else {
                    format!("{}", nmse(&x, &target)?)
                }
            }
            None => "nan".to_string(),
        };
        println!("{t},{iterations},{converged},{objective},{nmse_str}");
    }
    Ok(())
}

fn solve_rpca(cfg: &Config, dataset: &Dataset, seed: u64) -> Result<(), Error> {
    if dataset.kind != GeneratorKind::Rpca {
        return Err(Error::Contract(
            "rpca solver needs a dataset generated with model=rpca".into(),
        ));
    }
    let y = dataset
        .y_train
        .as_ref()
        .ok_or_else(|| Error::Contract("rpca dataset carries no observation".into()))?;
    let h1 = dataset.h1.as_ref().unwrap();
    let h2 = dataset.h2.as_ref().unwrap();

    // spectral bound of the stacked operator [H1 H2]
    let stacked = hstack(h1, h2)?;
    let mu = 1.01 * power_iteration(&stacked, 200, seed)?;
    let (lambda1, lambda2) = (cfg.lambda1_or_default(), cfg.lambda2_or_default());
    let (l, s, trace) = rpca_ista_solve(y, h1, h2, lambda1, lambda2, mu, 500)?;

    println!("component,rel_err,iterations,final_objective");
    for (name, got, truth) in [
        ("lowrank", &l, dataset.l_mat.as_ref()),
        ("sparse", &s, dataset.s_mat.as_ref()),
    ] {
        let rel = match truth {
            Some(t) if t.frobenius_norm() > 0.0 => {
                got.sub(t)?.frobenius_norm() / t.frobenius_norm()
            }
            _ => f64::NAN,
        };
        println!(
            "{name},{rel},{},{}",
            trace.iterations,
            trace.objectives.last().unwrap_or(&f64::NAN)
        );
    }
    Ok(())
}

fn hstack(a: &Matrix, b: &Matrix) -> Result<Matrix, Error> {
    if a.rows() != b.rows() {
        return Err(Error::Shape {
            op: "hstack",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let mut out = Matrix::zeros(a.rows(), a.cols() + b.cols());
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            out.set(i, j, a.get(i, j));
        }
        for j in 0..b.cols() {
            out.set(i, a.cols() + j, b.get(i, j));
        }
    }
    Ok(out)
}

fn cmd_gradcheck(config: &Path) -> Result<(), Error> {
    let cfg = read_config(config)?;
    let model_kind = cfg.require_model()?;
    let depth = cfg.require_depth()?;
    let n = cfg.require_n()?;
    let m = cfg.require_m()?;
    let seed = cfg.require_seed()?;

    let (model, input_dim, target_dim, tolerance) = match model_kind {
        ModelKind::Lista => {
            let w = unroll_core::datagen::gen_dictionary(n, m, seed)?;
            let mu = 1.01 * power_iteration(&w, 200, seed)?;
            let tied = cfg.tied.unwrap_or(false);
            (
                Model::Lista(lista_init_analytic(&w, mu, 0.1, depth, tied)?),
                n,
                m,
                1e-5,
            )
        }
        ModelKind::Lsparcom => {
            let w = lsparcom_dictionary(n, m)?;
            let mu = 1.01 * power_iteration(&w, 200, seed)?;
            (
                Model::LSparcom(lsparcom_init_analytic(
                    &w,
                    mu,
                    DEFAULT_GATE_ALPHA,
                    DEFAULT_GATE_BETA,
                    depth,
                )?),
                n * n,
                m * m,
                1e-5,
            )
        }
        ModelKind::Uadmm => {
            let w = unroll_core::datagen::gen_dictionary(n, m, seed)?;
            let ops = [AdmmOp {
                d: Matrix::identity(m),
                lambda: 0.1,
                rho: 1.0,
                eta: 1.0,
            }];
            (
                Model::Uadmm {
                    params: uadmm_init_from_classic(&ops, depth, false)?,
                    w,
                },
                n,
                m,
                1e-4,
            )
        }
        ModelKind::Liht => {
            return Err(Error::Contract(
                "the hard-threshold projection has no useful gradient to check".into(),
            ))
        }
        ModelKind::Rpca => {
            return Err(Error::Contract(
                "rpca is a dataset/solver family, not a trainable network".into(),
            ))
        }
    };

    let loss = match model_kind {
        ModelKind::Lsparcom => unroll_core::train::LossKind::Masked,
        _ => unroll_core::train::LossKind::Mse,
    };
    println!("model,seed,params,kink_margin,max_rel_err,tolerance,status");
    let mut all_ok = true;
    for s in 0..5u64 {
        let sample = gradcheck_model(
            &model,
            input_dim,
            target_dim,
            loss,
            cfg.lambda_loss_or_default(),
            1e-6,
            seed.wrapping_add(s),
        )?;
        let ok = sample.max_rel_err <= tolerance;
        all_ok &= ok;
        println!(
            "{},{},{},{:.3e},{:.3e},{:.0e},{}",
            model_kind.name(),
            sample.seed,
            sample.params_checked,
            sample.kink_margin,
            sample.max_rel_err,
            tolerance,
            if ok { "pass" } else { "FAIL" }
        );
    }
    if all_ok {
        Ok(())
    } else {
        Err(Error::Numeric("gradient check failed".into()))
    }
}

fn cmd_bench(config: &Path) -> Result<(), Error> {
    let cfg = read_config(config)?;
    let n = cfg.require_n()?;
    let m = cfg.require_m()?;
    let k = cfg.require_k()?;
    let depth = cfg.require_depth()?;
    let seed = cfg.require_seed()?;
    let lambda = cfg.require_lambda_sup()?;
    let samples = cfg.t_test.unwrap_or(20).max(1);

    let (data, _) = gen_sparse_coding_dataset(
        n,
        m,
        k,
        0,
        samples,
        cfg.noise_sigma.unwrap_or(0.01),
        lambda,
        seed,
    )?;
    let y = data.y_test.as_ref().unwrap();
    let mu = 1.01 * power_iteration(&data.w, 200, seed)?;

    let started = Instant::now();
    let mut total_iters = 0usize;
    for t in 0..y.cols() {
        let trace = ista_solve(&data.w, &y.col(t), lambda, mu, SOLVE_MAX_ITERS, 1e-8, false)?;
        total_iters += trace.iterations;
    }
    let solver_ms = started.elapsed().as_secs_f64() * 1e3;

    let params = lista_init_analytic(&data.w, mu, lambda, depth, false)?;
    let started = Instant::now();
    for t in 0..y.cols() {
        unroll_core::nets::lista_forward(&params, &y.col(t))?;
    }
    let net_ms = started.elapsed().as_secs_f64() * 1e3;

    println!("task,samples,mean_iterations,total_ms");
    println!(
        "ista_to_1e-8,{},{:.1},{:.3}",
        samples,
        total_iters as f64 / samples as f64,
        solver_ms
    );
    println!("unrolled_depth_{depth},{samples},{depth},{net_ms:.3}");
    Ok(())
}
