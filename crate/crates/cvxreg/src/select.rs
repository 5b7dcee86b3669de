//! Lipschitz-bound selection by k-fold cross-validation with the
//! one-standard-error rule, and the risk-vs-L profiling experiment.

use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{norm2, Mat};
use crate::model::{destandardize_model, standardize, standardize_x_with, Dataset};
use crate::solver::{fit, SolverConfig, XiConstraint};
use crate::synth::{generate, SyntheticSpec};

/// Cross-validation outcome over a grid of Lipschitz bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    /// Ascending; may end with the infinity sentinel (the unconstrained fit).
    pub grid: Vec<f64>,
    /// Mean held-out squared error per grid value (standardized scale).
    pub mean_err: Vec<f64>,
    /// Standard error of the k fold means per grid value.
    pub se: Vec<f64>,
    pub chosen: f64,
    pub chosen_index: usize,
    /// Fold id of every data row, as drawn from the seed.
    pub fold_assignment: Vec<usize>,
}

/// Seeded balanced fold assignment: shuffle, then deal round-robin.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut fold = vec![0usize; n];
    for (pos, &row) in order.iter().enumerate() {
        fold[row] = pos % k;
    }
    fold
}

/// One-standard-error rule: the smallest grid value whose mean error is
/// within one standard error (of the best value's fold means) of the best
/// mean error. With all-zero standard errors this reduces to the argmin.
pub fn choose_one_se(mean_err: &[f64], se: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..mean_err.len() {
        if mean_err[i] < mean_err[best] {
            best = i;
        }
    }
    let threshold = mean_err[best] + se[best];
    (0..mean_err.len()).find(|&i| mean_err[i] <= threshold).unwrap_or(best)
}

/// Default grid: 15 log-spaced values between 0.1 g and 10 g, where g is the
/// largest fitted subgradient norm of the unconstrained fit (standardized
/// scale), plus the infinity sentinel.
pub fn default_grid(data: &Dataset, base_cfg: &SolverConfig) -> Result<Vec<f64>> {
    let (std_data, _) = standardize(data)?;
    let mut cfg = base_cfg.clone();
    cfg.constraint = XiConstraint::None;
    let res = fit(&std_data, &cfg)?;
    let g = (0..std_data.n())
        .map(|j| norm2(res.model.xi.row(j)))
        .fold(0.0_f64, f64::max)
        .max(1e-12);
    let lo = (0.1 * g).ln();
    let hi = (10.0 * g).ln();
    let mut grid: Vec<f64> =
        (0..15).map(|i| (lo + (hi - lo) * i as f64 / 14.0).exp()).collect();
    grid.push(f64::INFINITY);
    Ok(grid)
}

fn subset(data: &Dataset, rows: &[usize]) -> Dataset {
    let d = data.d();
    let mut x = Mat::zeros(rows.len(), d);
    let mut y = Vec::with_capacity(rows.len());
    for (r, &i) in rows.iter().enumerate() {
        x.row_mut(r).copy_from_slice(data.x.row(i));
        y.push(data.y[i]);
    }
    Dataset::new(x, y).expect("subset of a valid dataset")
}

fn constraint_for(l: f64) -> XiConstraint {
    if l.is_finite() {
        XiConstraint::Ball(l)
    } else {
        XiConstraint::None
    }
}

/// Tunes the Lipschitz bound over `grid` by k-fold cross-validation.
/// Held-out points are predicted with the max-rule extension of the
/// training-fold model; errors are measured on the standardized scale of
/// each training fold.
pub fn cross_validate_l(
    data: &Dataset,
    grid: &[f64],
    k: usize,
    seed: u64,
    base_cfg: &SolverConfig,
) -> Result<CvResult> {
    if k < 2 {
        return Err(Error::Input(format!("need at least 2 folds, got {}", k)));
    }
    if k > data.n() {
        return Err(Error::Input(format!("{} folds exceed {} data rows", k, data.n())));
    }
    if grid.is_empty() {
        return Err(Error::Input("empty Lipschitz grid".into()));
    }
    let mut grid: Vec<f64> = grid.to_vec();
    if grid.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::Input("grid values must be positive".into()));
    }
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();
    let n = data.n();
    let folds = make_folds(n, k, seed);
    for f in 0..k {
        let n_train = (0..n).filter(|&i| folds[i] != f).count();
        if n_train <= data.d() {
            return Err(Error::Input(format!(
                "fold {} leaves n_train = {} <= d = {}; use fewer folds or more data",
                f,
                n_train,
                data.d()
            )));
        }
    }

    let jobs: Vec<(usize, usize)> =
        (0..grid.len()).flat_map(|li| (0..k).map(move |f| (li, f))).collect();
    let mut fold_err = vec![vec![0.0f64; k]; grid.len()];
    let results: Vec<(usize, usize, Result<f64>)> = jobs
        .into_par_iter()
        .map(|(li, f)| {
            let train_rows: Vec<usize> = (0..n).filter(|&i| folds[i] != f).collect();
            let test_rows: Vec<usize> = (0..n).filter(|&i| folds[i] == f).collect();
            let train = subset(data, &train_rows);
            let err = (|| -> Result<f64> {
                let (std_train, info) = standardize(&train)?;
                let mut cfg = base_cfg.clone();
                cfg.constraint = constraint_for(grid[li]);
                let res = fit(&std_train, &cfg)?;
                let mut sq = 0.0;
                for &i in &test_rows {
                    let q = standardize_x_with(&info, data.x.row(i));
                    let pred = res.model.eval_max_rule(&q)?;
                    let truth = (data.y[i] - info.y_center) / info.y_scale;
                    sq += (pred - truth) * (pred - truth);
                }
                Ok(sq / test_rows.len() as f64)
            })();
            (li, f, err)
        })
        .collect();
    for (li, f, err) in results {
        fold_err[li][f] = err?;
    }

    let kf = k as f64;
    let mut mean_err = Vec::with_capacity(grid.len());
    let mut se = Vec::with_capacity(grid.len());
    for errs in &fold_err {
        let mean = errs.iter().sum::<f64>() / kf;
        let var = errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (kf - 1.0);
        mean_err.push(mean);
        se.push((var / kf).sqrt());
    }
    let chosen_index = choose_one_se(&mean_err, &se);
    Ok(CvResult {
        chosen: grid[chosen_index],
        chosen_index,
        grid,
        mean_err,
        se,
        fold_assignment: folds,
    })
}

/// One row of the risk-vs-L table.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskRow {
    pub l: f64,
    pub mean_risk: f64,
    pub mean_training_error: f64,
}

#[derive(Debug, Clone)]
pub struct RiskProfile {
    pub rows: Vec<RiskRow>,
    /// (risk, training error) per replication and grid value.
    pub per_rep: Vec<Vec<(f64, f64)>>,
}

/// Fits the Lipschitz estimator over `grid` on `replications` datasets drawn
/// from `spec` (seeds spec.seed, spec.seed + 1, ...) and records in-sample
/// risk against the known surface together with the training error, both in
/// original units.
pub fn risk_profile(
    spec: &SyntheticSpec,
    grid: &[f64],
    replications: usize,
    base_cfg: &SolverConfig,
) -> Result<RiskProfile> {
    if replications == 0 {
        return Err(Error::Input("need at least one replication".into()));
    }
    let mut per_rep = Vec::with_capacity(replications);
    for rep in 0..replications {
        let rep_spec = SyntheticSpec { seed: spec.seed.wrapping_add(rep as u64), ..*spec };
        let (data, mu) = generate(&rep_spec)?;
        let (std_data, info) = standardize(&data)?;
        let rows: Vec<Result<(f64, f64)>> = grid
            .par_iter()
            .map(|&l| {
                let mut cfg = base_cfg.clone();
                cfg.constraint = constraint_for(l);
                let res = fit(&std_data, &cfg)?;
                let model = destandardize_model(&res.model, &info);
                let n = data.n() as f64;
                let mut risk = 0.0;
                let mut train = 0.0;
                for i in 0..data.n() {
                    risk += (model.theta[i] - mu[i]) * (model.theta[i] - mu[i]);
                    train += (model.theta[i] - data.y[i]) * (model.theta[i] - data.y[i]);
                }
                Ok((risk / n, train / n))
            })
            .collect();
        per_rep.push(rows.into_iter().collect::<Result<Vec<_>>>()?);
    }
    let rows = grid
        .iter()
        .enumerate()
        .map(|(li, &l)| {
            let mean_risk =
                per_rep.iter().map(|r| r[li].0).sum::<f64>() / replications as f64;
            let mean_training_error =
                per_rep.iter().map(|r| r[li].1).sum::<f64>() / replications as f64;
            RiskRow { l, mean_risk, mean_training_error }
        })
        .collect();
    Ok(RiskProfile { rows, per_rep })
}
