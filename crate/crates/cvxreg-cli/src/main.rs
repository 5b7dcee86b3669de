//! `cvxreg` — fit, evaluate, smooth and tune multivariate convex regression
//! models from the command line.
//!
//! Exit codes: 0 success, 1 input/parse error, 2 fit did not converge (the
//! model is still written, flagged), 3 numerical fault.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cvxreg::canonical::CanonicalValue;
use cvxreg::error::Error;
use cvxreg::io as cio;
use cvxreg::model::{destandardize_model, standardize, Dataset, Shape};
use cvxreg::smoothing::{bias_correct, make_smooth, Budget, ProxKind};
use cvxreg::solver::{fit, Algorithm, SolverConfig, XiConstraint};
use cvxreg::synth::{generate, SyntheticKind, SyntheticSpec};
use cvxreg::variants::{concave_adapter, eval_shaped, SignPattern};
use cvxreg::PwaModel;

#[derive(Parser)]
#[command(name = "cvxreg", version, about = "Scalable multivariate convex regression")]
struct Cli {
    /// Emit machine-readable JSON errors on stderr.
    #[arg(long, global = true)]
    json_errors: bool,
    /// Cap the number of worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Admm,
    Alm,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Convex,
    Concave,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProxArg {
    Sq,
    Entropy,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Max,
    Canonical,
}

#[derive(Args)]
struct SolverArgs {
    /// Penalty parameter; defaults to 1/n.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, default_value_t = 50_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol_primal: f64,
    #[arg(long, default_value_t = 1e-4)]
    tol_grad: f64,
    #[arg(long, value_enum, default_value_t = AlgoArg::Admm)]
    algorithm: AlgoArg,
    /// Euclidean bound on the fitted subgradients ("inf" disables it).
    #[arg(long)]
    lipschitz: Option<f64>,
    /// Per-coordinate monotonicity signs, e.g. "+,-,0".
    #[arg(long, allow_hyphen_values = true)]
    monotone: Option<String>,
    #[arg(long, value_enum, default_value_t = VariantArg::Convex)]
    variant: VariantArg,
    /// Natural-log transform of every covariate before standardization.
    #[arg(long)]
    log_features: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset CSV.
    Gen {
        /// quad: ||x||^2; quadplus: (5x1+.5x2+x3)^2 + sqrt(x4^2+x5^2).
        #[arg(long, default_value = "quad")]
        example: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        /// Var(mu)/Var(eps); "inf" for noiseless data.
        #[arg(long, default_value_t = 3.0)]
        snr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Fit a convex regression model (standardizes internally).
    Fit {
        #[arg(long)]
        input: PathBuf,
        /// Output model JSON.
        #[arg(long)]
        output: PathBuf,
        /// Optional convergence-trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Evaluate a fitted model at query points.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Query CSV (x1..xd, a trailing y column is ignored).
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = RuleArg::Max)]
        rule: RuleArg,
    },
    /// Attach a certified smooth surrogate to a model file.
    Smooth {
        #[arg(long)]
        model: PathBuf,
        /// Output model JSON; defaults to rewriting the input file.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum)]
        prox: ProxArg,
        /// Sup-norm error budget (mutually exclusive with --tau).
        #[arg(long, conflicts_with = "tau")]
        epsilon: Option<f64>,
        /// Temperature (mutually exclusive with --epsilon).
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Tune the Lipschitz bound by k-fold cross-validation.
    Cv {
        #[arg(long)]
        input: PathBuf,
        /// Output CV table CSV.
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        /// Comma-separated bounds ("inf" allowed); defaults to an automatic
        /// grid bracketing the unconstrained fit.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Recompute feasibility diagnostics of a model against its data.
    Diagnose {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
}

fn error_kind(e: &Error) -> (&'static str, u8) {
    match e {
        Error::Input(_) | Error::Io(_) => ("input", 1),
        Error::Degenerate(_) => ("degenerate", 1),
        Error::Numerical(_) => ("numerical", 3),
    }
}

fn emit_error(kind: &str, msg: &str, json: bool) {
    if json {
        let doc = serde_json::json!({ "error": { "kind": kind, "message": msg } });
        eprintln!("{}", doc);
    } else {
        eprintln!("cvxreg: {}", msg);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if rayon::ThreadPoolBuilder::new().num_threads(t).build_global().is_err() {
            emit_error("input", "could not configure the thread pool", cli.json_errors);
            return ExitCode::from(1);
        }
    }
    match run(cli.cmd, cli.json_errors) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let (kind, code) = error_kind(&e);
            emit_error(kind, &e.to_string(), cli.json_errors);
            ExitCode::from(code)
        }
    }
}

fn open_reader(path: &Path) -> Result<BufReader<File>, Error> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Input(format!("cannot open {}: {}", path.display(), e)))
}

fn create_writer(path: &Path) -> Result<BufWriter<File>, Error> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Input(format!("cannot create {}: {}", path.display(), e)))
}

fn read_dataset(path: &Path, log_features: bool) -> Result<Dataset, Error> {
    let mut data = cio::read_dataset_csv(open_reader(path)?)?;
    if log_features {
        for i in 0..data.n() {
            for k in 0..data.d() {
                let v = data.x.at(i, k);
                if v <= 0.0 {
                    return Err(Error::Input(format!(
                        "--log-features requires positive covariates; row {} column {} is {}",
                        i + 1,
                        k + 1,
                        v
                    )));
                }
                *data.x.at_mut(i, k) = v.ln();
            }
        }
    }
    Ok(data)
}

fn solver_config(args: &SolverArgs, d: usize) -> Result<SolverConfig, Error> {
    let mut cfg = SolverConfig {
        rho: args.rho,
        max_iters: args.max_iters,
        tol_primal: args.tol_primal,
        tol_grad: args.tol_grad,
        algorithm: match args.algorithm {
            AlgoArg::Admm => Algorithm::Admm,
            AlgoArg::Alm => Algorithm::Alm,
        },
        ..Default::default()
    };
    if let Ok(v) = std::env::var("CVXREG_NMAX") {
        cfg.n_max = v
            .parse()
            .map_err(|_| Error::Input(format!("CVXREG_NMAX must be an integer, got {:?}", v)))?;
    }
    let signs = match &args.monotone {
        Some(s) => {
            let sp: SignPattern = s.parse()?;
            if sp.len() != d {
                return Err(Error::Input(format!(
                    "--monotone has {} signs but the data has {} covariates",
                    sp.len(),
                    d
                )));
            }
            Some(sp)
        }
        None => None,
    };
    if let Some(l) = args.lipschitz {
        if l.is_nan() {
            return Err(Error::Input("--lipschitz must be a positive number or 'inf'".into()));
        }
    }
    cfg.constraint = match (args.lipschitz.filter(|l| l.is_finite()), signs) {
        (None, None) => XiConstraint::None,
        (Some(l), None) => XiConstraint::Ball(l),
        (None, Some(s)) => XiConstraint::Signs(s),
        (Some(l), Some(s)) => XiConstraint::BallAndSigns(l, s),
    };
    Ok(cfg)
}

fn run(cmd: Cmd, _json_errors: bool) -> Result<u8, Error> {
    match cmd {
        Cmd::Gen { example, n, d, snr, seed, output } => {
            let spec = SyntheticSpec { kind: SyntheticKind::parse(&example)?, n, d, snr, seed };
            let (data, _) = generate(&spec)?;
            let mut w = create_writer(&output)?;
            cio::write_dataset_csv(&mut w, &data)?;
            w.flush()?;
            Ok(0)
        }
        Cmd::Fit { input, output, trace, solver } => {
            let data = read_dataset(&input, solver.log_features)?;
            let cfg = solver_config(&solver, data.d())?;
            let (std_data, info) = standardize(&data)?;
            let res = match solver.variant {
                VariantArg::Convex => fit(&std_data, &cfg)?,
                VariantArg::Concave => concave_adapter(&std_data, &cfg)?,
            };
            let model = destandardize_model(&res.model, &info);
            let mut w = create_writer(&output)?;
            w.write_all(cio::model_to_json(&model, None)?.as_bytes())?;
            w.flush()?;
            if let Some(tp) = trace {
                let mut tw = create_writer(&tp)?;
                cio::write_trace_csv(&mut tw, &res.trace)?;
                tw.flush()?;
            }
            if res.converged {
                let meta = model.fit_meta.as_ref().expect("fit always attaches metadata");
                eprintln!(
                    "converged in {} iterations: primal_feas {:.3e}, theta_grad {:.3e}",
                    meta.iterations, meta.kkt.primal_feasibility, meta.kkt.theta_gradient
                );
                Ok(0)
            } else {
                let meta = model.fit_meta.as_ref().expect("fit always attaches metadata");
                eprintln!(
                    "did not converge within {} iterations (primal_feas {:.3e}, theta_grad {:.3e}); \
                     model written with converged=false",
                    meta.iterations, meta.kkt.primal_feasibility, meta.kkt.theta_gradient
                );
                Ok(2)
            }
        }
        Cmd::Predict { model, input, output, rule } => {
            let text = std::fs::read_to_string(&model)
                .map_err(|e| Error::Input(format!("cannot read {}: {}", model.display(), e)))?;
            let (pwa, _) = cio::model_from_json(&text)?;
            let queries = cio::read_query_csv(open_reader(&input)?, pwa.d())?;
            let mut preds = Vec::with_capacity(queries.rows());
            for i in 0..queries.rows() {
                let x = queries.row(i);
                let p = match rule {
                    RuleArg::Max => CanonicalValue::Value(eval_shaped(&pwa, x)?),
                    RuleArg::Canonical => eval_canonical_shaped(&pwa, x)?,
                };
                preds.push(p);
            }
            let mut w = create_writer(&output)?;
            cio::write_predictions_csv(&mut w, &preds)?;
            w.flush()?;
            Ok(0)
        }
        Cmd::Smooth { model, output, prox, epsilon, tau } => {
            let text = std::fs::read_to_string(&model)
                .map_err(|e| Error::Input(format!("cannot read {}: {}", model.display(), e)))?;
            let (pwa, _) = cio::model_from_json(&text)?;
            let budget = match (epsilon, tau) {
                (Some(e), None) => Budget::Epsilon(e),
                (None, Some(t)) => Budget::Tau(t),
                _ => return Err(Error::Input("pass exactly one of --epsilon or --tau".into())),
            };
            let prox = match prox {
                ProxArg::Sq => ProxKind::Squared,
                ProxArg::Entropy => ProxKind::Entropy,
            };
            let (smooth, cert) = make_smooth(&pwa, prox, budget)?;
            let corrected = bias_correct(&smooth, &pwa)?;
            let meta = cio::SmoothMeta {
                prox,
                tau: corrected.tau,
                bias_offset: corrected.bias_offset,
                certificate: cert.clone(),
            };
            let out_path = output.unwrap_or(model);
            let mut w = create_writer(&out_path)?;
            w.write_all(cio::model_to_json(&pwa, Some(&meta))?.as_bytes())?;
            w.flush()?;
            println!(
                "prox={} m={} tau={:.6e} epsilon={:.6e} lipschitz_grad={:.6e} bias_offset={:.6e}",
                match prox {
                    ProxKind::Squared => "sq",
                    ProxKind::Entropy => "entropy",
                },
                cert.m,
                cert.tau,
                cert.epsilon,
                cert.lipschitz_grad_constant,
                corrected.bias_offset
            );
            Ok(0)
        }
        Cmd::Cv { input, output, folds, grid, seed, solver } => {
            let data = read_dataset(&input, solver.log_features)?;
            let cfg = solver_config(&solver, data.d())?;
            let grid = match grid {
                Some(s) => s
                    .split(',')
                    .map(|tok| {
                        tok.trim().parse::<f64>().map_err(|_| {
                            Error::Input(format!("bad grid value {:?} (number or 'inf')", tok))
                        })
                    })
                    .collect::<Result<Vec<f64>, Error>>()?,
                None => cvxreg::select::default_grid(&data, &cfg)?,
            };
            let cv = cvxreg::select::cross_validate_l(&data, &grid, folds, seed, &cfg)?;
            let mut w = create_writer(&output)?;
            cio::write_cv_csv(&mut w, &cv)?;
            w.flush()?;
            println!(
                "chosen L = {} (mean held-out error {:.6e})",
                if cv.chosen.is_finite() { format!("{:.6e}", cv.chosen) } else { "inf".into() },
                cv.mean_err[cv.chosen_index]
            );
            Ok(0)
        }
        Cmd::Diagnose { model, input } => {
            let text = std::fs::read_to_string(&model)
                .map_err(|e| Error::Input(format!("cannot read {}: {}", model.display(), e)))?;
            let (pwa, _) = cio::model_from_json(&text)?;
            let data = read_dataset(&input, false)?;
            diagnose(&pwa, &data)
        }
    }
}

/// Canonical interpolant respecting the shape tag: for concave models it is
/// the smallest concave interpolant, i.e., the negated canonical
/// interpolant of the negated fitted values.
fn eval_canonical_shaped(model: &PwaModel, x: &[f64]) -> Result<CanonicalValue, Error> {
    match model.variant.shape {
        Shape::Convex => cvxreg::eval_canonical(model, x),
        Shape::Concave => {
            let mut neg = model.clone();
            neg.theta.iter_mut().for_each(|v| *v = -*v);
            Ok(match cvxreg::eval_canonical(&neg, x)? {
                CanonicalValue::Value(v) => CanonicalValue::Value(-v),
                CanonicalValue::OutsideHull => CanonicalValue::OutsideHull,
            })
        }
    }
}

/// Recomputes what a model file allows: the primal feasibility residual of
/// the stored (theta, xi) after the slack projection, the largest raw
/// constraint violation, the training objective and the mean gap. The
/// dual-dependent residuals are not recomputable (duals are not serialized)
/// and are echoed from the stored fit metadata.
fn diagnose(model: &PwaModel, data: &Dataset) -> Result<u8, Error> {
    if data.n() != model.n() || data.d() != model.d() {
        return Err(Error::Input(format!(
            "data is {} x {} but the model was fit on {} x {}",
            data.n(),
            data.d(),
            model.n(),
            model.d()
        )));
    }
    for i in 0..data.n() {
        let same = data.x.row(i).iter().zip(model.anchors.row(i)).all(|(a, b)| {
            (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
        });
        if !same {
            return Err(Error::Input(format!(
                "row {} of the data does not match the model anchors; diagnose needs the training data",
                i + 1
            )));
        }
    }
    // work on the scale the solver saw when the model carries one
    let (y_scaled, scaled_model): (Vec<f64>, PwaModel) = match &model.standardization {
        Some(info) => {
            let mut m = model.clone();
            let n = model.n();
            let d = model.d();
            for j in 0..n {
                m.theta[j] = (model.theta[j] - info.y_center) / info.y_scale;
                for k in 0..d {
                    *m.xi.at_mut(j, k) = model.xi.at(j, k) * info.x_scale[k] / info.y_scale;
                    *m.anchors.at_mut(j, k) = (model.anchors.at(j, k) - info.x_center[k]) / info.x_scale[k];
                }
            }
            let y_std: Vec<f64> = data.y.iter().map(|v| (v - info.y_center) / info.y_scale).collect();
            (y_std, m)
        }
        None => (data.y.clone(), model.clone()),
    };
    let n = model.n();
    let mut fro = 0.0;
    for i in 0..n {
        let xi_row = scaled_model.anchors.row(i);
        for j in 0..n {
            if i == j {
                continue;
            }
            let slack = scaled_model.piece_value(j, xi_row) - scaled_model.theta[i];
            if slack > 0.0 {
                fro += slack * slack;
            }
        }
    }
    let primal = fro.sqrt() / n as f64;
    let max_violation = scaled_model.max_constraint_violation();
    let objective: f64 = 0.5
        * y_scaled
            .iter()
            .zip(&scaled_model.theta)
            .map(|(y, t)| (y - t) * (y - t))
            .sum::<f64>();
    let mean_gap = (y_scaled.iter().sum::<f64>() - scaled_model.theta.iter().sum::<f64>()).abs()
        / n as f64;
    println!("primal_feasibility (recomputed) = {:.6e}", primal);
    println!("max_constraint_violation        = {:.6e}", max_violation);
    println!("objective 0.5||y-theta||^2      = {:.6e}", objective);
    println!("|mean(theta) - mean(y)|         = {:.6e}", mean_gap);
    match &model.fit_meta {
        Some(meta) => {
            println!(
                "stored kkt: primal_feas {:.6e}, subgrad {:.6e}, theta_grad {:.6e}, compl {:.6e} \
                 (duals are not serialized; dual-side residuals are as stored)",
                meta.kkt.primal_feasibility,
                meta.kkt.subgrad_stationarity,
                meta.kkt.theta_gradient,
                meta.kkt.complementarity
            );
        }
        None => println!("no stored fit metadata"),
    }
    Ok(0)
}
