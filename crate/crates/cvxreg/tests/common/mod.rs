//! Independent oracles for the integration and acceptance suites.
//!
//! Nothing in this module shares a code path with the solvers under test:
//! linear systems run through a local partial-pivot LU, the QP oracle is a
//! log-barrier interior-point method with an explicit KKT certificate, and
//! the small combinatorial oracles enumerate their search spaces directly.

#![allow(dead_code)]

use cvxreg::linalg::Mat;
use cvxreg::model::Dataset;
use rand::prelude::*;
use rand_chacha::ChaCha20Rng;

// ---------------------------------------------------------------------------
// dense LU with partial pivoting (oracle-local linear algebra)

/// Solves a dense square system in place; returns None when singular.
pub fn lu_solve(a: &mut [f64], b: &mut [f64], n: usize) -> Option<Vec<f64>> {
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        let mut piv = col;
        let mut best = a[perm[col] * n + col].abs();
        for r in col + 1..n {
            let v = a[perm[r] * n + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best < 1e-12 {
            return None;
        }
        perm.swap(col, piv);
        let prow = perm[col];
        let pval = a[prow * n + col];
        for r in col + 1..n {
            let row = perm[r];
            let f = a[row * n + col] / pval;
            if f != 0.0 {
                a[row * n + col] = f;
                for c in col + 1..n {
                    a[row * n + c] -= f * a[prow * n + c];
                }
                b[row] -= f * b[prow];
            } else {
                a[row * n + col] = 0.0;
            }
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let row = perm[col];
        let mut s = b[row];
        for c in col + 1..n {
            s -= a[row * n + c] * x[c];
        }
        x[col] = s / a[row * n + col];
    }
    Some(x)
}

// ---------------------------------------------------------------------------
// random instances

pub fn random_dataset(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut x = Mat::zeros(n, d);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let mut q = 0.0;
        for k in 0..d {
            let v: f64 = rng.random_range(-1.0..1.0);
            *x.at_mut(i, k) = v;
            q += v * v;
        }
        y.push(q + rng.random_range(-0.5..0.5));
    }
    Dataset::new(x, y).unwrap()
}

// ---------------------------------------------------------------------------
// certified log-barrier oracle for the convex regression QP

/// Exact-arithmetic view of the QP: variables z = (theta, vec(xi)), one
/// inequality per ordered pair (i, j), i != j:
/// theta_j - theta_i + <X_i - X_j, xi_j> <= 0.
struct Qp<'a> {
    data: &'a Dataset,
    n: usize,
    d: usize,
    nv: usize,
    pairs: Vec<(usize, usize)>,
    ridge: f64,
}

impl<'a> Qp<'a> {
    fn new(data: &'a Dataset, ridge: f64) -> Self {
        let n = data.n();
        let d = data.d();
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    pairs.push((i, j));
                }
            }
        }
        Qp { data, n, d, nv: n + n * d, pairs, ridge }
    }

    fn constraint(&self, z: &[f64], r: usize) -> f64 {
        let (i, j) = self.pairs[r];
        let mut c = z[j] - z[i];
        for k in 0..self.d {
            c += (self.data.x.at(i, k) - self.data.x.at(j, k)) * z[self.n + j * self.d + k];
        }
        c
    }

    /// gradient of constraint r, scattered into `out` scaled by `w`
    fn add_scaled_grad(&self, r: usize, w: f64, out: &mut [f64]) {
        let (i, j) = self.pairs[r];
        out[j] += w;
        out[i] -= w;
        for k in 0..self.d {
            out[self.n + j * self.d + k] +=
                w * (self.data.x.at(i, k) - self.data.x.at(j, k));
        }
    }

    fn objective(&self, z: &[f64]) -> f64 {
        let mut v = 0.0;
        for i in 0..self.n {
            v += 0.5 * (z[i] - self.data.y[i]) * (z[i] - self.data.y[i]);
        }
        v
    }

    fn ridged_objective(&self, z: &[f64]) -> f64 {
        let mut v = self.objective(z);
        for k in self.n..self.nv {
            v += 0.5 * self.ridge * z[k] * z[k];
        }
        v
    }
}

pub struct BarrierCertificate {
    pub objective: f64,
    pub stationarity_inf: f64,
    pub duality_gap: f64,
    pub max_violation: f64,
    pub ridge_term: f64,
}

/// Solves the convex regression QP to high accuracy with a log-barrier
/// Newton method over a tiny ridge regularization of the (otherwise merely
/// PSD) xi block, and returns the objective together with an explicit KKT
/// certificate. Panics if the certificate is not tight — the caller relies
/// on the returned objective being within ~1e-7 of the true optimum.
pub fn barrier_qp_oracle(data: &Dataset) -> BarrierCertificate {
    let ridge = 1e-11;
    let qp = Qp::new(data, ridge);
    let (n, d, nv) = (qp.n, qp.d, qp.nv);
    // strictly feasible start from the convex surface ||x||^2
    let mut z = vec![0.0; nv];
    for i in 0..n {
        let row = data.x.row(i);
        z[i] = row.iter().map(|v| v * v).sum();
        for k in 0..d {
            z[n + i * d + k] = 2.0 * row[k];
        }
    }
    for r in 0..qp.pairs.len() {
        assert!(qp.constraint(&z, r) < 0.0, "barrier start must be strictly feasible");
    }
    let mut mu = 1.0_f64;
    let mut grad = vec![0.0; nv];
    let mut hess = vec![0.0; nv * nv];
    while mu > 1e-10 {
        for _newton in 0..120 {
            // gradient and Hessian of the barrier-augmented objective
            grad.iter_mut().for_each(|g| *g = 0.0);
            hess.iter_mut().for_each(|h| *h = 0.0);
            for i in 0..n {
                grad[i] = z[i] - data.y[i];
                hess[i * nv + i] = 1.0;
            }
            for k in n..nv {
                grad[k] = ridge * z[k];
                hess[k * nv + k] = ridge;
            }
            for r in 0..qp.pairs.len() {
                let c = qp.constraint(&z, r);
                let w1 = mu / (-c);
                qp.add_scaled_grad(r, w1, &mut grad);
                // rank-one term (mu / c^2) g g^T on the sparse support
                let (i, j) = qp.pairs[r];
                let mut idx = Vec::with_capacity(2 + d);
                let mut val = Vec::with_capacity(2 + d);
                idx.push(j);
                val.push(1.0);
                idx.push(i);
                val.push(-1.0);
                for k in 0..d {
                    idx.push(n + j * d + k);
                    val.push(data.x.at(i, k) - data.x.at(j, k));
                }
                let w2 = mu / (c * c);
                for a in 0..idx.len() {
                    for b in 0..idx.len() {
                        hess[idx[a] * nv + idx[b]] += w2 * val[a] * val[b];
                    }
                }
            }
            let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if gnorm <= (1e-3 * mu).max(1e-12) {
                break;
            }
            let mut h = hess.clone();
            let mut rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
            let step = lu_solve(&mut h, &mut rhs, nv).expect("barrier Hessian is SPD");
            // fraction-to-boundary then backtracking
            let mut alpha: f64 = 1.0;
            for r in 0..qp.pairs.len() {
                let c = qp.constraint(&z, r);
                let mut dc = 0.0;
                let (i, j) = qp.pairs[r];
                dc += step[j] - step[i];
                for k in 0..d {
                    dc += (data.x.at(i, k) - data.x.at(j, k)) * step[n + j * d + k];
                }
                if dc > 0.0 {
                    alpha = alpha.min(0.99 * (-c) / dc);
                }
            }
            let f0 = {
                let mut f = qp.ridged_objective(&z);
                for r in 0..qp.pairs.len() {
                    f -= mu * (-qp.constraint(&z, r)).ln();
                }
                f
            };
            let slope: f64 = grad.iter().zip(&step).map(|(g, p)| g * p).sum();
            let mut accepted = false;
            for _ in 0..60 {
                let cand: Vec<f64> = z.iter().zip(&step).map(|(a, p)| a + alpha * p).collect();
                let feasible = (0..qp.pairs.len()).all(|r| qp.constraint(&cand, r) < 0.0);
                if feasible {
                    let mut f = qp.ridged_objective(&cand);
                    for r in 0..qp.pairs.len() {
                        f -= mu * (-qp.constraint(&cand, r)).ln();
                    }
                    if f <= f0 + 1e-4 * alpha * slope {
                        z = cand;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                break; // at numerical stationarity for this mu
            }
        }
        mu *= 0.2;
    }
    // KKT certificate with lambda_r = mu / (-c_r) at the final mu / 0.2
    let mu_final = mu / 0.2;
    let mut stat = vec![0.0; nv];
    for i in 0..n {
        stat[i] = z[i] - data.y[i];
    }
    for k in n..nv {
        stat[k] = ridge * z[k];
    }
    let mut gap = 0.0;
    let mut max_violation = 0.0_f64;
    for r in 0..qp.pairs.len() {
        let c = qp.constraint(&z, r);
        max_violation = max_violation.max(c);
        let lambda = mu_final / (-c);
        gap += lambda * (-c);
        qp.add_scaled_grad(r, lambda, &mut stat);
    }
    let stationarity_inf = stat.iter().fold(0.0_f64, |a, g| a.max(g.abs()));
    let ridge_term: f64 = (n..nv).map(|k| 0.5 * ridge * z[k] * z[k]).sum();
    let cert = BarrierCertificate {
        objective: qp.objective(&z),
        stationarity_inf,
        duality_gap: gap,
        max_violation,
        ridge_term,
    };
    assert!(cert.max_violation <= 0.0, "barrier iterates stay strictly feasible");
    assert!(cert.stationarity_inf < 1e-6, "stationarity residual {}", cert.stationarity_inf);
    assert!(cert.duality_gap < 1e-7, "duality gap {}", cert.duality_gap);
    assert!(cert.ridge_term < 1e-7, "ridge bias {}", cert.ridge_term);
    cert
}

/// Exhaustively enumerates active subsets of the n(n-1) constraints, solves
/// each equality-constrained KKT system of the ridge-regularized QP and
/// keeps the best candidate that is primal feasible with nonnegative duals.
/// Exponential: intended for n = 4, d = 1 cross-checks only.
pub fn exhaustive_qp_oracle(data: &Dataset) -> f64 {
    let ridge = 1e-11;
    let qp = Qp::new(data, ridge);
    let (n, nv) = (qp.n, qp.nv);
    let m = qp.pairs.len();
    assert!(m <= 20, "exhaustive oracle is exponential in the constraint count");
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << m) {
        let act: Vec<usize> = (0..m).filter(|r| mask >> r & 1 == 1).collect();
        let na = act.len();
        if na > nv {
            continue;
        }
        let dim = nv + na;
        let mut kkt = vec![0.0; dim * dim];
        let mut rhs = vec![0.0; dim];
        for i in 0..n {
            kkt[i * dim + i] = 1.0;
            rhs[i] = data.y[i];
        }
        for k in n..nv {
            kkt[k * dim + k] = ridge;
        }
        for (a, &r) in act.iter().enumerate() {
            let mut g = vec![0.0; nv];
            qp.add_scaled_grad(r, 1.0, &mut g);
            for v in 0..nv {
                kkt[v * dim + (nv + a)] = g[v];
                kkt[(nv + a) * dim + v] = g[v];
            }
        }
        let Some(sol) = lu_solve(&mut kkt, &mut rhs, dim) else {
            continue;
        };
        let z = &sol[..nv];
        let lambda = &sol[nv..];
        // stationarity built H z + C^T lambda = b, so lambda here plays the
        // role of +multipliers for <=0 constraints: need lambda >= 0
        if lambda.iter().any(|&l| l < -1e-8) {
            continue;
        }
        if (0..m).any(|r| qp.constraint(z, r) > 1e-9) {
            continue;
        }
        best = best.min(qp.objective(z));
    }
    assert!(best.is_finite(), "exhaustive oracle found no KKT point");
    best
}

// ---------------------------------------------------------------------------
// projected gradient oracle for the ball-constrained least squares

/// Minimizes ||A xi - b||^2 over the L-ball by projected gradient with 1e5
/// iterations; returns the final objective.
pub fn projected_gradient_ball_objective(a: &Mat, b: &[f64], l: f64, iters: usize) -> f64 {
    let n = a.rows();
    let d = a.cols();
    // power iteration for the step size
    let mut v = vec![1.0; d];
    for _ in 0..200 {
        // w = A^T A v
        let mut av = vec![0.0; n];
        for i in 0..n {
            av[i] = a.row(i).iter().zip(&v).map(|(x, y)| x * y).sum();
        }
        let mut w = vec![0.0; d];
        for i in 0..n {
            for k in 0..d {
                w[k] += a.at(i, k) * av[i];
            }
        }
        let nrm = w.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
        v = w.iter().map(|x| x / nrm).collect();
    }
    let mut av = vec![0.0; n];
    for i in 0..n {
        av[i] = a.row(i).iter().zip(&v).map(|(x, y)| x * y).sum();
    }
    let lmax: f64 = {
        let mut w = vec![0.0; d];
        for i in 0..n {
            for k in 0..d {
                w[k] += a.at(i, k) * av[i];
            }
        }
        w.iter().map(|x| x * x).sum::<f64>().sqrt()
    };
    let step = 1.0 / (2.0 * lmax.max(1e-12));
    let mut xi = vec![0.0; d];
    for _ in 0..iters {
        let mut resid = vec![0.0; n];
        for i in 0..n {
            resid[i] = a.row(i).iter().zip(&xi).map(|(x, y)| x * y).sum::<f64>() - b[i];
        }
        let mut grad = vec![0.0; d];
        for i in 0..n {
            for k in 0..d {
                grad[k] += 2.0 * a.at(i, k) * resid[i];
            }
        }
        for k in 0..d {
            xi[k] -= step * grad[k];
        }
        let nrm = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm > l {
            let f = l / nrm;
            xi.iter_mut().for_each(|x| *x *= f);
        }
    }
    let mut obj = 0.0;
    for i in 0..n {
        let r = a.row(i).iter().zip(&xi).map(|(x, y)| x * y).sum::<f64>() - b[i];
        obj += r * r;
    }
    obj
}

// ---------------------------------------------------------------------------
// Caratheodory oracle for the canonical interpolant

/// Enumerates anchor subsets of size at most d+1 and solves the barycentric
/// systems directly. Returns None when no subset reproduces x (outside the
/// hull).
pub fn caratheodory_value(anchors: &Mat, theta: &[f64], x: &[f64]) -> Option<f64> {
    let n = anchors.rows();
    let d = anchors.cols();
    let rows = d + 1;
    let mut best: Option<f64> = None;
    let mut subset = Vec::new();
    enumerate_subsets(n, rows, &mut subset, &mut |s: &[usize]| {
        let cols = s.len();
        // M alpha = rhs with M = [1; anchors^T]
        let mut m = vec![0.0; rows * cols];
        for (c, &idx) in s.iter().enumerate() {
            m[c] = 1.0;
            for r in 0..d {
                m[(r + 1) * cols + c] = anchors.at(idx, r);
            }
        }
        let mut rhs = vec![1.0];
        rhs.extend_from_slice(x);
        // normal equations M^T M alpha = M^T rhs
        let mut mtm = vec![0.0; cols * cols];
        let mut mtr = vec![0.0; cols];
        for a in 0..cols {
            for b in 0..cols {
                let mut acc = 0.0;
                for r in 0..rows {
                    acc += m[r * cols + a] * m[r * cols + b];
                }
                mtm[a * cols + b] = acc;
            }
            let mut acc = 0.0;
            for r in 0..rows {
                acc += m[r * cols + a] * rhs[r];
            }
            mtr[a] = acc;
        }
        let Some(alpha) = lu_solve(&mut mtm, &mut mtr, cols) else {
            return;
        };
        // verify the residual: the least-squares solution must reproduce rhs
        for r in 0..rows {
            let mut acc = 0.0;
            for (c, _) in s.iter().enumerate() {
                acc += m[r * cols + c] * alpha[c];
            }
            if (acc - rhs[r]).abs() > 1e-9 {
                return;
            }
        }
        if alpha.iter().any(|&a| a < -1e-9) {
            return;
        }
        let val: f64 = s.iter().zip(&alpha).map(|(&idx, &a)| a * theta[idx]).sum();
        best = Some(match best {
            None => val,
            Some(b) => b.min(val),
        });
    });
    best
}

fn enumerate_subsets(n: usize, max_len: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if !cur.is_empty() {
        f(cur);
    }
    if cur.len() == max_len {
        return;
    }
    let start = cur.last().map(|&v| v + 1).unwrap_or(0);
    for i in start..n {
        cur.push(i);
        enumerate_subsets(n, max_len, cur, f);
        cur.pop();
    }
}

// ---------------------------------------------------------------------------
// simplex projection oracle

/// Unique projection onto the simplex by enumerating supports and checking
/// the KKT conditions. Exponential in m; use for m <= 6.
pub fn simplex_projection_by_enumeration(c: &[f64]) -> Vec<f64> {
    let m = c.len();
    assert!(m <= 20);
    for mask in 1u32..(1 << m) {
        let support: Vec<usize> = (0..m).filter(|k| mask >> k & 1 == 1).collect();
        let t = (support.iter().map(|&k| c[k]).sum::<f64>() - 1.0) / support.len() as f64;
        let mut w = vec![0.0; m];
        let mut ok = true;
        for &k in &support {
            w[k] = c[k] - t;
            if w[k] < -1e-12 {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        // KKT: off-support coordinates must satisfy c_k - t <= 0
        if (0..m).any(|k| mask >> k & 1 == 0 && c[k] - t > 1e-12) {
            continue;
        }
        return w;
    }
    unreachable!("the projection always exists");
}
