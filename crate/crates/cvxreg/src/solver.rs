//! ADMM and augmented-Lagrangian solvers for the convex regression QP
//!
//! ```text
//!   minimize   (1/2) ||y - theta||^2
//!   s.t.       theta_j + <X_i - X_j, xi_j> <= theta_i   for all i != j.
//! ```
//!
//! The splitting introduces slacks eta_ij <= 0 for the constraints and a
//! dual matrix nu. One sweep updates xi -> theta -> eta -> nu:
//!
//! * every xi_j solves an unconstrained least-squares problem against the
//!   per-point Gram matrix sum_i Delta_ij Delta_ij^T, factored once up
//!   front (constrained variants swap in the subsolvers from `variants`);
//! * theta solves (I + rho D^T D) theta = v in O(n) through the rank-one
//!   identity D^T D = 2n I - 2 11^T, where D is the (never materialized)
//!   n^2 x n pairwise difference operator;
//! * eta is an entrywise clip at zero;
//! * nu takes the usual gradient-ascent step on the constraint residual.
//!
//! Everything is O(n^2) per sweep for d << n. The n x n buffers (eta, nu
//! and the cached inner products <Delta_ij, xi_j>) are stored with the j
//! index major so each subproblem touches one contiguous slice.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, Mat};
use crate::model::{Dataset, FitMeta, KktReport, PwaModel, Shape, VariantTag};
use crate::variants::{self, LipschitzSubproblem, SignPattern};

/// Algorithm selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    /// Three-block splitting ADMM (one dual update per sweep).
    Admm,
    /// Augmented-Lagrangian method: warmup sweeps identical to ADMM, then
    /// inner block-coordinate descent to an inner tolerance before each
    /// dual update, with the rho / delta schedules from `AlmSchedule`.
    Alm,
}

/// Dynamic schedule for the augmented-Lagrangian method.
#[derive(Debug, Clone, PartialEq)]
pub struct AlmSchedule {
    pub delta0: f64,
    /// Multiplicative tightening of the inner tolerance; rho grows by the
    /// reciprocal factor at every dual update past warmup.
    pub shrink: f64,
    pub warmup_iters: usize,
    pub max_outer: usize,
    pub inner_cap: usize,
}

impl Default for AlmSchedule {
    fn default() -> Self {
        AlmSchedule { delta0: 1e-1, shrink: 0.9954, warmup_iters: 500, max_outer: 3000, inner_cap: 50 }
    }
}

/// Constraint imposed on the fitted subgradients.
#[derive(Debug, Clone, PartialEq)]
pub enum XiConstraint {
    None,
    /// ||xi_j||_2 <= L for every j. A non-finite bound behaves exactly like
    /// `None`.
    Ball(f64),
    /// Coordinate-wise sign constraints (monotone fits).
    Signs(SignPattern),
    /// Both at once. Experimental: the subproblem is solved by sign-
    /// constrained coordinate descent followed by a radial projection onto
    /// the ball, which is feasible but not exactly the subproblem argmin.
    BallAndSigns(f64, SignPattern),
}

impl XiConstraint {
    fn normalized(self) -> XiConstraint {
        match self {
            XiConstraint::Ball(l) if !l.is_finite() => XiConstraint::None,
            XiConstraint::BallAndSigns(l, s) if !l.is_finite() => XiConstraint::Signs(s),
            other => other,
        }
    }

    fn tag(&self) -> VariantTag {
        match self {
            XiConstraint::None => VariantTag::plain(),
            XiConstraint::Ball(l) => VariantTag { shape: Shape::Convex, lipschitz: Some(*l), monotone: None },
            XiConstraint::Signs(s) => {
                VariantTag { shape: Shape::Convex, lipschitz: None, monotone: Some(s.clone()) }
            }
            XiConstraint::BallAndSigns(l, s) => {
                VariantTag { shape: Shape::Convex, lipschitz: Some(*l), monotone: Some(s.clone()) }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Augmented-Lagrangian penalty; `None` picks 1/n.
    pub rho: Option<f64>,
    pub max_iters: usize,
    pub tol_primal: f64,
    pub tol_grad: f64,
    pub algorithm: Algorithm,
    pub alm: AlmSchedule,
    pub constraint: XiConstraint,
    /// Memory ceiling: fits with n above this are refused (the dense eta,
    /// nu and inner-product buffers grow as n^2).
    pub n_max: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rho: None,
            max_iters: 50_000,
            tol_primal: 1e-4,
            tol_grad: 1e-4,
            algorithm: Algorithm::Admm,
            alm: AlmSchedule::default(),
            constraint: XiConstraint::None,
            n_max: 12_000,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if let Some(r) = self.rho {
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::Input(format!("rho must be positive and finite, got {}", r)));
            }
        }
        if !(self.tol_primal > 0.0) || !(self.tol_grad > 0.0) {
            return Err(Error::Input("tolerances must be positive".into()));
        }
        if !(self.alm.shrink > 0.0 && self.alm.shrink < 1.0) {
            return Err(Error::Input(format!(
                "ALM shrink factor must lie in (0,1), got {}",
                self.alm.shrink
            )));
        }
        if let XiConstraint::Ball(l) | XiConstraint::BallAndSigns(l, _) = &self.constraint {
            if *l <= 0.0 || l.is_nan() {
                return Err(Error::Input(format!("Lipschitz bound must be positive, got {}", l)));
            }
        }
        Ok(())
    }
}

/// One trace row per dual update.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    /// (1/2) ||y - theta||^2
    pub objective: f64,
    pub primal_feas: f64,
    pub theta_grad: f64,
    pub wall_time_s: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ConvergenceTrace {
    pub records: Vec<TraceRecord>,
}

/// Per-point Gram matrices sum_i Delta_ij Delta_ij^T with their Cholesky
/// factors, computed once per dataset.
#[derive(Debug)]
pub struct GramCache {
    pub q: Vec<Mat>,
    pub chol: Vec<Cholesky>,
    fingerprint: u64,
}

fn dataset_fingerprint(data: &Dataset) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |v: u64| {
        h ^= v;
        h = h.wrapping_mul(0x100000001b3);
    };
    eat(data.n() as u64);
    eat(data.d() as u64);
    for v in data.x.as_slice() {
        eat(v.to_bits());
    }
    h
}

/// Rejects datasets with exactly duplicated design points (they make the
/// per-point Gram matrix singular for n close to d and force degenerate
/// constraint pairs).
fn check_duplicate_rows(data: &Dataset) -> Result<()> {
    let n = data.n();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        data.x
            .row(a)
            .iter()
            .map(|v| v.to_bits())
            .cmp(data.x.row(b).iter().map(|v| v.to_bits()))
    });
    for w in order.windows(2) {
        if data.x.row(w[0]) == data.x.row(w[1]) {
            return Err(Error::Degenerate(format!(
                "duplicate design points at rows {} and {}",
                w[0].min(w[1]) + 1,
                w[0].max(w[1]) + 1
            )));
        }
    }
    Ok(())
}

/// Builds and factorizes all n per-point Gram matrices. Uses the expansion
/// sum_i (X_i - X_j)(X_i - X_j)^T = S - X_j s^T - s X_j^T + n X_j X_j^T with
/// S = sum_i X_i X_i^T and s = sum_i X_i, so the assembly is O(n d^2).
pub fn precompute_gram(data: &Dataset) -> Result<GramCache> {
    check_duplicate_rows(data)?;
    let n = data.n();
    let d = data.d();
    let mut s_mat = Mat::zeros(d, d);
    let mut s_vec = vec![0.0; d];
    for i in 0..n {
        let row = data.x.row(i);
        for a in 0..d {
            s_vec[a] += row[a];
            for b in 0..d {
                *s_mat.at_mut(a, b) += row[a] * row[b];
            }
        }
    }
    let mut q = Vec::with_capacity(n);
    let mut chol = Vec::with_capacity(n);
    for j in 0..n {
        let xj = data.x.row(j);
        let mut qj = Mat::zeros(d, d);
        for a in 0..d {
            for b in 0..d {
                *qj.at_mut(a, b) =
                    s_mat.at(a, b) - xj[a] * s_vec[b] - s_vec[a] * xj[b] + n as f64 * xj[a] * xj[b];
            }
        }
        let ch = Cholesky::factor(&qj, 1e-13).map_err(|_| {
            Error::Degenerate(format!("singular Gram matrix at design point {} (degenerate design)", j + 1))
        })?;
        q.push(qj);
        chol.push(ch);
    }
    Ok(GramCache { q, chol, fingerprint: dataset_fingerprint(data) })
}

/// Solver iterate. The n x n buffers are laid out with j major: entry
/// (i, j) lives at `j * n + i`, so everything a single subproblem needs is
/// contiguous.
#[derive(Debug)]
pub struct SolverState {
    pub theta: Vec<f64>,
    pub xi: Mat,
    /// Slacks eta_ij <= 0, diagonal fixed at zero.
    pub eta: Vec<f64>,
    /// Duals nu_ij, diagonal fixed at zero.
    pub nu: Vec<f64>,
    /// Cached <Delta_ij, xi_j> = <X_i, xi_j> - <X_j, xi_j>.
    pub ip: Vec<f64>,
    gram_fingerprint: u64,
}

impl SolverState {
    pub fn init(data: &Dataset, gram: &GramCache) -> Self {
        let n = data.n();
        SolverState {
            theta: data.y.clone(),
            xi: Mat::zeros(n, data.d()),
            eta: vec![0.0; n * n],
            nu: vec![0.0; n * n],
            ip: vec![0.0; n * n],
            gram_fingerprint: gram.fingerprint,
        }
    }

    fn n(&self) -> usize {
        self.theta.len()
    }

    fn check_gram(&self, gram: &GramCache) {
        assert_eq!(
            self.gram_fingerprint, gram.fingerprint,
            "Gram cache does not correspond to the solver state's dataset"
        );
    }
}

/// How a sweep solves the per-point subproblem for one xi_j.
enum XiSolver<'a> {
    Plain(&'a GramCache),
    Ball(&'a [LipschitzSubproblem], f64),
    Signs(&'a GramCache, &'a SignPattern),
    BallAndSigns(&'a GramCache, f64, &'a SignPattern),
}

impl XiSolver<'_> {
    /// Solves for one xi_j given rhs = sum_i Delta_ij etabar_ij, writing the
    /// result into `xi_j` (which carries the previous iterate on entry).
    fn solve(&self, j: usize, rhs: &[f64], xi_j: &mut [f64]) -> Result<()> {
        match self {
            XiSolver::Plain(gram) => {
                xi_j.copy_from_slice(rhs);
                gram.chol[j].solve_in_place(xi_j);
                Ok(())
            }
            XiSolver::Ball(svd, l) => {
                let (sol, _lambda) = variants::solve_ball_ls(&svd[j], rhs, *l)?;
                xi_j.copy_from_slice(&sol);
                Ok(())
            }
            XiSolver::Signs(gram, signs) => {
                let a: Vec<f64> = rhs.iter().map(|v| -2.0 * v).collect();
                let sol = variants::solve_nnls_cd(&gram.q[j], &a, signs, xi_j)
                    .map_err(|e| Error::Degenerate(format!("design point {}: {}", j + 1, e)))?;
                xi_j.copy_from_slice(&sol);
                Ok(())
            }
            XiSolver::BallAndSigns(gram, l, signs) => {
                let a: Vec<f64> = rhs.iter().map(|v| -2.0 * v).collect();
                let mut sol = variants::solve_nnls_cd(&gram.q[j], &a, signs, xi_j)
                    .map_err(|e| Error::Degenerate(format!("design point {}: {}", j + 1, e)))?;
                let nrm = crate::linalg::norm2(&sol);
                if nrm > *l {
                    let f = *l / nrm;
                    sol.iter_mut().for_each(|v| *v *= f);
                }
                xi_j.copy_from_slice(&sol);
                Ok(())
            }
        }
    }
}

/// Below this size the parallel machinery costs more than the arithmetic;
/// the sequential paths perform the identical operations in the identical
/// order, so results do not depend on which path runs.
const SEQ_N: usize = 128;

/// Sweeps all subgradients: each xi_j solves its subproblem against
/// etabar_ij = nu_ij / rho + eta_ij - (theta_j - theta_i) and the cached
/// inner products are refreshed. Subproblems are independent across j.
fn sweep_xi(state: &mut SolverState, data: &Dataset, rho: f64, solver: &XiSolver) -> Result<()> {
    let n = state.n();
    let d = data.d();
    let theta = &state.theta;
    let x = &data.x;
    let inv_rho = 1.0 / rho;
    let eta = &state.eta;
    let nu = &state.nu;
    let body = |rhs: &mut [f64], j: usize, xi_j: &mut [f64], ip_j: &mut [f64]| -> Result<()> {
        let eta_j = &eta[j * n..(j + 1) * n];
        let nu_j = &nu[j * n..(j + 1) * n];
        let theta_j = theta[j];
        let xj = x.row(j);
        rhs.iter_mut().for_each(|v| *v = 0.0);
        let mut bar_sum = 0.0;
        for i in 0..n {
            if i == j {
                continue;
            }
            let bar = nu_j[i] * inv_rho + eta_j[i] - (theta_j - theta[i]);
            bar_sum += bar;
            let xi_row = x.row(i);
            for k in 0..d {
                rhs[k] += xi_row[k] * bar;
            }
        }
        for k in 0..d {
            rhs[k] -= xj[k] * bar_sum;
        }
        solver.solve(j, rhs, xi_j)?;
        let base = dot(xj, xi_j);
        for i in 0..n {
            ip_j[i] = dot(x.row(i), xi_j) - base;
        }
        ip_j[j] = 0.0;
        Ok(())
    };
    if n <= SEQ_N {
        let mut rhs = vec![0.0; d];
        for (j, (xi_j, ip_j)) in state
            .xi
            .as_mut_slice()
            .chunks_exact_mut(d)
            .zip(state.ip.chunks_exact_mut(n))
            .enumerate()
        {
            body(&mut rhs, j, xi_j, ip_j)?;
        }
        Ok(())
    } else {
        state
            .xi
            .par_rows_mut()
            .zip(state.ip.par_chunks_exact_mut(n))
            .enumerate()
            .try_for_each_init(
                || vec![0.0; d],
                |rhs, (j, (xi_j, ip_j))| body(rhs, j, xi_j, ip_j),
            )
    }
}

/// Unconstrained subgradient update: the first block of an ADMM sweep.
pub fn update_xi(state: &mut SolverState, data: &Dataset, gram: &GramCache, rho: f64) -> Result<()> {
    state.check_gram(gram);
    sweep_xi(state, data, rho, &XiSolver::Plain(gram))
}

pub(crate) fn sweep_xi_ball(
    state: &mut SolverState,
    data: &Dataset,
    subs: &[LipschitzSubproblem],
    rho: f64,
    l: f64,
) -> Result<()> {
    sweep_xi(state, data, rho, &XiSolver::Ball(subs, l))
}

pub(crate) fn sweep_xi_signs(
    state: &mut SolverState,
    data: &Dataset,
    gram: &GramCache,
    rho: f64,
    signs: &SignPattern,
) -> Result<()> {
    state.check_gram(gram);
    sweep_xi(state, data, rho, &XiSolver::Signs(gram, signs))
}

/// Fixed chunking for deterministic parallel reductions: results are
/// independent of the worker count because both the chunk boundaries and
/// the merge order are fixed.
const J_CHUNK: usize = 256;

/// Accumulates column sums (index j) and row sums (index i) of nu and of
/// eta_tilde_ij = eta_ij - ip_ij in one pass.
fn theta_rhs_sums(state: &SolverState) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = state.n();
    let eta = &state.eta;
    let nu = &state.nu;
    let ip = &state.ip;
    let nchunks = n.div_ceil(J_CHUNK);
    let chunk_work = |c: usize| {
            let j0 = c * J_CHUNK;
            let j1 = (j0 + J_CHUNK).min(n);
            let mut cs_nu = vec![0.0; j1 - j0];
            let mut cs_et = vec![0.0; j1 - j0];
            let mut rs_nu = vec![0.0; n];
            let mut rs_et = vec![0.0; n];
            for j in j0..j1 {
                let base = j * n;
                let mut c_nu = 0.0;
                let mut c_et = 0.0;
                for i in 0..n {
                    let w_nu = nu[base + i];
                    let w_et = eta[base + i] - ip[base + i];
                    c_nu += w_nu;
                    c_et += w_et;
                    rs_nu[i] += w_nu;
                    rs_et[i] += w_et;
                }
                // the diagonal contributes eta - ip = 0 by construction
                cs_nu[j - j0] = c_nu;
                cs_et[j - j0] = c_et;
            }
            (cs_nu, cs_et, rs_nu, rs_et)
    };
    let parts: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> = if n <= SEQ_N {
        (0..nchunks).map(chunk_work).collect()
    } else {
        (0..nchunks).into_par_iter().map(chunk_work).collect()
    };
    let mut cs_nu = vec![0.0; n];
    let mut cs_et = vec![0.0; n];
    let mut rs_nu = vec![0.0; n];
    let mut rs_et = vec![0.0; n];
    for (c, part) in parts.iter().enumerate() {
        let j0 = c * J_CHUNK;
        cs_nu[j0..j0 + part.0.len()].copy_from_slice(&part.0);
        cs_et[j0..j0 + part.1.len()].copy_from_slice(&part.1);
        for i in 0..n {
            rs_nu[i] += part.2[i];
            rs_et[i] += part.3[i];
        }
    }
    (cs_nu, cs_et, rs_nu, rs_et)
}

/// Solves (I + rho D^T D) theta = v in O(n): the inverse is
/// (1 + 2 n rho)^{-1} (I + 2 rho 11^T) by the rank-one identity, and 1 is an
/// eigenvector with eigenvalue one (D 1 = 0).
pub fn solve_theta_system(v: &[f64], rho: f64) -> Vec<f64> {
    let n = v.len();
    let s: f64 = v.iter().sum();
    let two_rho_s = 2.0 * rho * s;
    let denom = 1.0 + 2.0 * rho * n as f64;
    v.iter().map(|vi| (vi + two_rho_s) / denom).collect()
}

/// Function-value update, the second ADMM block: assembles
/// v = y + D^T vec(nu) + rho D^T vec(eta_tilde) through the sparse action of
/// D^T (component k is the column sum minus the row sum) and applies the
/// closed-form inverse.
pub fn update_theta(state: &mut SolverState, data: &Dataset, rho: f64) {
    let n = state.n();
    let (cs_nu, cs_et, rs_nu, rs_et) = theta_rhs_sums(state);
    let mut v = Vec::with_capacity(n);
    for k in 0..n {
        v.push(data.y[k] + (cs_nu[k] - rs_nu[k]) + rho * (cs_et[k] - rs_et[k]));
    }
    state.theta = solve_theta_system(&v, rho);
}

/// Residual-slack update, the third ADMM block: entrywise clip
/// eta_ij = min(theta_j + <Delta_ij, xi_j> - theta_i - nu_ij / rho, 0).
pub fn update_eta(state: &mut SolverState, rho: f64) {
    let n = state.n();
    let theta = &state.theta;
    let ip = &state.ip;
    let nu = &state.nu;
    let inv_rho = 1.0 / rho;
    let body = |j: usize, eta_j: &mut [f64]| {
        let base = j * n;
        let theta_j = theta[j];
        for i in 0..n {
            if i == j {
                eta_j[i] = 0.0;
                continue;
            }
            let slack = theta_j + ip[base + i] - theta[i] - nu[base + i] * inv_rho;
            eta_j[i] = slack.min(0.0);
        }
    };
    if n <= SEQ_N {
        state.eta.chunks_exact_mut(n).enumerate().for_each(|(j, eta_j)| body(j, eta_j));
    } else {
        state.eta.par_chunks_exact_mut(n).enumerate().for_each(|(j, eta_j)| body(j, eta_j));
    }
}

/// Dual ascent fused with the two stopping metrics:
/// nu_ij += rho * Gamma_ij with Gamma_ij = eta_ij - (theta_j + ip_ij -
/// theta_i), returning (||Gamma||_F / n, ||theta - y - D^T vec(nu)||_2)
/// evaluated at the updated dual.
fn update_dual_with_residuals(state: &mut SolverState, data: &Dataset, rho: f64) -> (f64, f64) {
    let n = state.n();
    let theta = &state.theta;
    let ip = &state.ip;
    let eta = &state.eta;
    let nchunks = n.div_ceil(J_CHUNK);
    let block_work = |(c, nu_block): (usize, &mut [f64])| {
        let j0 = c * J_CHUNK;
        let jw = nu_block.len() / n;
        let mut fro = 0.0;
        let mut cs = vec![0.0; jw];
        let mut rs = vec![0.0; n];
        for jj in 0..jw {
            let j = j0 + jj;
            let base = j * n;
            let theta_j = theta[j];
            let nu_j = &mut nu_block[jj * n..(jj + 1) * n];
            let mut c_nu = 0.0;
            for i in 0..n {
                if i != j {
                    let gamma = eta[base + i] - (theta_j + ip[base + i] - theta[i]);
                    fro += gamma * gamma;
                    nu_j[i] += rho * gamma;
                }
                let w = nu_j[i];
                c_nu += w;
                rs[i] += w;
            }
            cs[jj] = c_nu;
        }
        (fro, cs, rs)
    };
    let parts: Vec<(f64, Vec<f64>, Vec<f64>)> = if n <= SEQ_N {
        state.nu.chunks_mut(J_CHUNK * n).enumerate().map(block_work).collect()
    } else {
        let nu_chunks: Vec<&mut [f64]> = state.nu.chunks_mut(J_CHUNK * n).collect();
        nu_chunks.into_par_iter().enumerate().map(block_work).collect()
    };
    let mut fro = 0.0;
    let mut cs_nu = vec![0.0; n];
    let mut rs_nu = vec![0.0; n];
    for (c, part) in parts.iter().enumerate() {
        debug_assert!(c < nchunks);
        fro += part.0;
        let j0 = c * J_CHUNK;
        cs_nu[j0..j0 + part.1.len()].copy_from_slice(&part.1);
        for i in 0..n {
            rs_nu[i] += part.2[i];
        }
    }
    let primal = fro.sqrt() / n as f64;
    let mut grad_sq = 0.0;
    for k in 0..n {
        let g = (state.theta[k] - data.y[k]) - (cs_nu[k] - rs_nu[k]);
        grad_sq += g * g;
    }
    (primal, grad_sq.sqrt())
}

/// Dual ascent without the fused diagnostics.
pub fn update_dual(state: &mut SolverState, data: &Dataset, rho: f64) {
    let _ = update_dual_with_residuals(state, data, rho);
}

/// Stationarity of the augmented Lagrangian with respect to theta at the
/// current iterate: || (theta - y) - D^T vec(nu + rho Gamma) ||_2, i.e. the
/// theta-gradient that a dual update at this point would produce. Used as
/// the inner-loop exit criterion of the ALM (a displacement criterion
/// degenerates for large rho: heavily damped sweeps move little while still
/// far from the block-joint optimum).
fn inner_theta_grad(state: &SolverState, data: &Dataset, rho: f64) -> f64 {
    let n = state.n();
    let theta = &state.theta;
    let ip = &state.ip;
    let eta = &state.eta;
    let nu = &state.nu;
    let nchunks = n.div_ceil(J_CHUNK);
    let chunk_work = |c: usize| {
        let j0 = c * J_CHUNK;
        let j1 = (j0 + J_CHUNK).min(n);
        let mut cs = vec![0.0; j1 - j0];
        let mut rs = vec![0.0; n];
        for j in j0..j1 {
            let base = j * n;
            let theta_j = theta[j];
            let mut c_nu = 0.0;
            for i in 0..n {
                let w = if i == j {
                    0.0
                } else {
                    nu[base + i] + rho * (eta[base + i] - (theta_j + ip[base + i] - theta[i]))
                };
                c_nu += w;
                rs[i] += w;
            }
            cs[j - j0] = c_nu;
        }
        (cs, rs)
    };
    let parts: Vec<(Vec<f64>, Vec<f64>)> = if n <= SEQ_N {
        (0..nchunks).map(chunk_work).collect()
    } else {
        (0..nchunks).into_par_iter().map(chunk_work).collect()
    };
    let mut cs_nu = vec![0.0; n];
    let mut rs_nu = vec![0.0; n];
    for (c, part) in parts.iter().enumerate() {
        let j0 = c * J_CHUNK;
        cs_nu[j0..j0 + part.0.len()].copy_from_slice(&part.0);
        for i in 0..n {
            rs_nu[i] += part.1[i];
        }
    }
    let mut grad_sq = 0.0;
    for k in 0..n {
        let g = (theta[k] - data.y[k]) - (cs_nu[k] - rs_nu[k]);
        grad_sq += g * g;
    }
    grad_sq.sqrt()
}

/// The two stopping metrics at the current iterate (no state change).
pub fn residuals(state: &SolverState, data: &Dataset) -> (f64, f64) {
    let n = state.n();
    let theta = &state.theta;
    let ip = &state.ip;
    let eta = &state.eta;
    let nu = &state.nu;
    let nchunks = n.div_ceil(J_CHUNK);
    let chunk_work = |c: usize| {
        let j0 = c * J_CHUNK;
        let j1 = (j0 + J_CHUNK).min(n);
        let mut fro = 0.0;
        let mut cs = vec![0.0; j1 - j0];
        let mut rs = vec![0.0; n];
        for j in j0..j1 {
            let base = j * n;
            let theta_j = theta[j];
            let mut c_nu = 0.0;
            for i in 0..n {
                if i != j {
                    let gamma = eta[base + i] - (theta_j + ip[base + i] - theta[i]);
                    fro += gamma * gamma;
                }
                let w = nu[base + i];
                c_nu += w;
                rs[i] += w;
            }
            cs[j - j0] = c_nu;
        }
        (fro, cs, rs)
    };
    let parts: Vec<(f64, Vec<f64>, Vec<f64>)> = if n <= SEQ_N {
        (0..nchunks).map(chunk_work).collect()
    } else {
        (0..nchunks).into_par_iter().map(chunk_work).collect()
    };
    let mut fro = 0.0;
    let mut cs_nu = vec![0.0; n];
    let mut rs_nu = vec![0.0; n];
    for (c, part) in parts.iter().enumerate() {
        fro += part.0;
        let j0 = c * J_CHUNK;
        cs_nu[j0..j0 + part.1.len()].copy_from_slice(&part.1);
        for i in 0..n {
            rs_nu[i] += part.2[i];
        }
    }
    let mut grad_sq = 0.0;
    for k in 0..n {
        let g = (theta[k] - data.y[k]) - (cs_nu[k] - rs_nu[k]);
        grad_sq += g * g;
    }
    (fro.sqrt() / n as f64, grad_sq.sqrt())
}

/// The four optimality residuals of the QP at the given iterate. Uses only
/// the sparse action of D and D^T.
pub fn compute_kkt_report(state: &SolverState, data: &Dataset, rho: f64) -> KktReport {
    let n = state.n();
    let d = data.d();
    assert_eq!(data.n(), n, "state and dataset dimensions differ");
    let (primal, grad) = residuals(state, data);
    // max_j || sum_i nu_ij Delta_ij ||_2, expanded through X^T columns
    let subgrad_j = |acc: &mut [f64], j: usize| {
        let base = j * n;
        acc.iter_mut().for_each(|v| *v = 0.0);
        let mut s = 0.0;
        for i in 0..n {
            let w = state.nu[base + i];
            if w != 0.0 {
                s += w;
                let row = data.x.row(i);
                for k in 0..d {
                    acc[k] += w * row[k];
                }
            }
        }
        let xj = data.x.row(j);
        let mut nrm = 0.0;
        for k in 0..d {
            let v = acc[k] - s * xj[k];
            nrm += v * v;
        }
        nrm.sqrt()
    };
    let subgrad = if n <= SEQ_N {
        let mut acc = vec![0.0; d];
        (0..n).map(|j| subgrad_j(&mut acc, j)).fold(0.0, f64::max)
    } else {
        (0..n)
            .into_par_iter()
            .map_init(|| vec![0.0; d], |acc, j| subgrad_j(acc, j))
            .reduce(|| 0.0, f64::max)
    };
    let inv_rho = 1.0 / rho;
    let compl_j = |(j, eta_j): (usize, &[f64])| {
        let base = j * n;
        let mut worst = 0.0_f64;
        for i in 0..n {
            if i == j {
                continue;
            }
            let e = eta_j[i];
            let r = e - (e - state.nu[base + i] * inv_rho).min(0.0);
            worst = worst.max(r.abs());
        }
        worst
    };
    let compl = if n <= SEQ_N {
        state.eta.chunks_exact(n).enumerate().map(compl_j).fold(0.0, f64::max)
    } else {
        state.eta.par_chunks_exact(n).enumerate().map(compl_j).reduce(|| 0.0, f64::max)
    };
    KktReport {
        primal_feasibility: primal,
        subgrad_stationarity: subgrad,
        theta_gradient: grad,
        complementarity: compl,
    }
}

/// Replaces eta by the projection min(slack, 0) of the current (theta, xi)
/// slacks. Running this before the final report makes the primal
/// feasibility residual measure the true constraint violation of the
/// returned model.
pub fn certify_eta(state: &mut SolverState) {
    let n = state.n();
    let theta = &state.theta;
    let ip = &state.ip;
    let body = |j: usize, eta_j: &mut [f64]| {
        let base = j * n;
        let theta_j = theta[j];
        for i in 0..n {
            if i == j {
                eta_j[i] = 0.0;
            } else {
                eta_j[i] = (theta_j + ip[base + i] - theta[i]).min(0.0);
            }
        }
    };
    if n <= SEQ_N {
        state.eta.chunks_exact_mut(n).enumerate().for_each(|(j, eta_j)| body(j, eta_j));
    } else {
        state.eta.par_chunks_exact_mut(n).enumerate().for_each(|(j, eta_j)| body(j, eta_j));
    }
}

/// Everything a fit produces.
#[derive(Debug)]
pub struct FitResult {
    pub model: PwaModel,
    pub trace: ConvergenceTrace,
    pub converged: bool,
    pub state: SolverState,
}

fn check_finite(state: &SolverState, iter: usize) -> Result<()> {
    if state.theta.iter().any(|v| !v.is_finite()) || state.xi.as_slice().iter().any(|v| !v.is_finite())
    {
        return Err(Error::Numerical(format!("non-finite iterate at iteration {}", iter)));
    }
    Ok(())
}

struct FitContext<'a> {
    data: &'a Dataset,
    gram: GramCache,
    ball: Vec<LipschitzSubproblem>,
    constraint: XiConstraint,
}

impl FitContext<'_> {
    fn xi_solver(&self) -> XiSolver<'_> {
        match &self.constraint {
            XiConstraint::None => XiSolver::Plain(&self.gram),
            XiConstraint::Ball(l) => XiSolver::Ball(&self.ball, *l),
            XiConstraint::Signs(s) => XiSolver::Signs(&self.gram, s),
            XiConstraint::BallAndSigns(l, s) => XiSolver::BallAndSigns(&self.gram, *l, s),
        }
    }
}

fn prepare_ctx<'a>(data: &'a Dataset, cfg: &SolverConfig) -> Result<FitContext<'a>> {
    cfg.validate()?;
    let n = data.n();
    let d = data.d();
    if n > cfg.n_max {
        return Err(Error::Input(format!(
            "n = {} exceeds the configured memory ceiling n_max = {} (dense n^2 buffers; \
             raise n_max or CVXREG_NMAX to override)",
            n, cfg.n_max
        )));
    }
    if n <= d {
        return Err(Error::Input(format!(
            "need n > d for unique subgradient updates (n = {}, d = {})",
            n, d
        )));
    }
    if let XiConstraint::Signs(s) | XiConstraint::BallAndSigns(_, s) = &cfg.constraint {
        if s.len() != d {
            return Err(Error::Input(format!(
                "sign pattern has {} entries but data has {} covariates",
                s.len(),
                d
            )));
        }
    }
    let gram = precompute_gram(data)?;
    let constraint = cfg.constraint.clone().normalized();
    let ball = match &constraint {
        XiConstraint::Ball(_) => variants::precompute_ball_subproblems(&gram),
        _ => Vec::new(),
    };
    Ok(FitContext { data, gram, ball, constraint })
}

fn finalize(
    ctx: &FitContext,
    mut state: SolverState,
    trace: ConvergenceTrace,
    cfg: &SolverConfig,
    rho_final: f64,
    iterations: usize,
    algorithm: &str,
) -> FitResult {
    certify_eta(&mut state);
    let kkt = compute_kkt_report(&state, ctx.data, rho_final);
    let converged = kkt.primal_feasibility <= cfg.tol_primal && kkt.theta_gradient <= cfg.tol_grad;
    let model = PwaModel {
        theta: state.theta.clone(),
        xi: state.xi.clone(),
        anchors: ctx.data.x.clone(),
        variant: ctx.constraint.tag(),
        standardization: None,
        fit_meta: Some(FitMeta {
            algorithm: algorithm.to_string(),
            iterations,
            rho: rho_final,
            converged,
            kkt,
        }),
    };
    FitResult { model, trace, converged, state }
}

/// Multiple-block splitting ADMM: one dual update per (xi, theta, eta)
/// sweep.
pub fn fit_admm(data: &Dataset, cfg: &SolverConfig) -> Result<FitResult> {
    let ctx = prepare_ctx(data, cfg)?;
    let rho = cfg.rho.unwrap_or(1.0 / data.n() as f64);
    let solver = ctx.xi_solver();
    let mut state = SolverState::init(data, &ctx.gram);
    let mut trace = ConvergenceTrace::default();
    let start = Instant::now();
    let mut iterations = 0;
    for iter in 1..=cfg.max_iters {
        iterations = iter;
        sweep_xi(&mut state, data, rho, &solver)?;
        update_theta(&mut state, data, rho);
        update_eta(&mut state, rho);
        let (primal, grad) = update_dual_with_residuals(&mut state, data, rho);
        check_finite(&state, iter)?;
        let objective = 0.5 * data.y.iter().zip(&state.theta).map(|(y, t)| (y - t) * (y - t)).sum::<f64>();
        trace.records.push(TraceRecord {
            iter,
            objective,
            primal_feas: primal,
            theta_grad: grad,
            wall_time_s: start.elapsed().as_secs_f64(),
            rho,
        });
        if primal <= cfg.tol_primal && grad <= cfg.tol_grad {
            break;
        }
    }
    Ok(finalize(&ctx, state, trace, cfg, rho, iterations, "admm"))
}

/// Augmented-Lagrangian method of multipliers. The first
/// `warmup_iters` outer iterations are plain ADMM sweeps; afterwards each
/// outer iteration runs block-coordinate descent over (xi, theta, eta) until
/// the augmented Lagrangian's theta-gradient falls below delta (capped at
/// `inner_cap` sweeps), updates the dual, tightens delta and grows rho.
pub fn fit_alm(data: &Dataset, cfg: &SolverConfig) -> Result<FitResult> {
    let ctx = prepare_ctx(data, cfg)?;
    let mut rho = cfg.rho.unwrap_or(1.0 / data.n() as f64);
    let solver = ctx.xi_solver();
    let mut state = SolverState::init(data, &ctx.gram);
    let mut trace = ConvergenceTrace::default();
    let start = Instant::now();
    let sched = &cfg.alm;
    let mut delta = sched.delta0;
    let mut outer_done = 0;
    'outer: for outer in 1..=sched.max_outer {
        outer_done = outer;
        if outer <= sched.warmup_iters {
            sweep_xi(&mut state, data, rho, &solver)?;
            update_theta(&mut state, data, rho);
            update_eta(&mut state, rho);
        } else {
            // block-coordinate descent on (xi, theta, eta) until the
            // augmented Lagrangian is delta-stationary in theta
            for _ in 0..sched.inner_cap {
                sweep_xi(&mut state, data, rho, &solver)?;
                update_theta(&mut state, data, rho);
                update_eta(&mut state, rho);
                if inner_theta_grad(&state, data, rho) <= delta {
                    break;
                }
            }
        }
        let (primal, grad) = update_dual_with_residuals(&mut state, data, rho);
        check_finite(&state, outer)?;
        let objective = 0.5 * data.y.iter().zip(&state.theta).map(|(y, t)| (y - t) * (y - t)).sum::<f64>();
        trace.records.push(TraceRecord {
            iter: outer,
            objective,
            primal_feas: primal,
            theta_grad: grad,
            wall_time_s: start.elapsed().as_secs_f64(),
            rho,
        });
        if primal <= cfg.tol_primal && grad <= cfg.tol_grad {
            break 'outer;
        }
        if outer > sched.warmup_iters {
            delta *= sched.shrink;
            rho /= sched.shrink;
        }
    }
    Ok(finalize(&ctx, state, trace, cfg, rho, outer_done, "alm"))
}

/// Dispatches on `cfg.algorithm`.
pub fn fit(data: &Dataset, cfg: &SolverConfig) -> Result<FitResult> {
    match cfg.algorithm {
        Algorithm::Admm => fit_admm(data, cfg),
        Algorithm::Alm => fit_alm(data, cfg),
    }
}

/// Standardizes, fits, and maps the model back to original units (the
/// returned KKT metadata refers to the standardized problem the solver
/// actually saw).
pub fn fit_standardized(data: &Dataset, cfg: &SolverConfig) -> Result<(FitResult, Dataset)> {
    let (std_data, info) = crate::model::standardize(data)?;
    let mut res = fit(&std_data, cfg)?;
    res.model = crate::model::destandardize_model(&res.model, &info);
    Ok((res, std_data))
}
