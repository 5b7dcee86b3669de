//! Canonical interpolant: the largest convex function agreeing with the
//! fitted values at the anchors.
//!
//! Each evaluation solves a small linear program
//!
//! ```text
//!   minimize  sum_k alpha_k theta_k
//!   s.t.      sum_k alpha_k = 1,  sum_k alpha_k X_k = x,  alpha >= 0
//! ```
//!
//! with a dense two-phase simplex method. The basis has d+1 rows, so dense
//! pivoting is both the simplest and the fastest option here. Bland's rule
//! keeps the method cycle-free. Queries outside the convex hull of the
//! anchors make the program infeasible; by the convention inf(empty) = +inf
//! that outcome is reported as a value, not an error.

use crate::error::{Error, Result};
use crate::model::PwaModel;

/// Value of the canonical interpolant at a query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CanonicalValue {
    Value(f64),
    /// The query lies outside the convex hull of the anchors.
    OutsideHull,
}

impl CanonicalValue {
    pub fn value(self) -> Option<f64> {
        match self {
            CanonicalValue::Value(v) => Some(v),
            CanonicalValue::OutsideHull => None,
        }
    }
}

/// Evaluates the canonical interpolant of `model` at `x`.
pub fn eval_canonical(model: &PwaModel, x: &[f64]) -> Result<CanonicalValue> {
    if x.len() != model.d() {
        return Err(Error::Input(format!(
            "query has {} coordinates, model expects {}",
            x.len(),
            model.d()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite query point".into()));
    }
    let n = model.n();
    let d = model.d();
    // rows: convexity row, then one row per coordinate
    let m = d + 1;
    let mut a = vec![0.0; m * n];
    let mut b = vec![0.0; m];
    for k in 0..n {
        a[k] = 1.0;
    }
    b[0] = 1.0;
    for r in 0..d {
        for k in 0..n {
            a[(r + 1) * n + k] = model.anchors.at(k, r);
        }
        b[r + 1] = x[r];
    }
    let c: Vec<f64> = model.theta.clone();
    match simplex_min(&a, &b, &c, m, n)? {
        Some(obj) => Ok(CanonicalValue::Value(obj)),
        None => Ok(CanonicalValue::OutsideHull),
    }
}

/// Minimizes c^T z subject to A z = b, z >= 0 with a dense two-phase simplex
/// using Bland's pivoting rule. Returns `None` when infeasible.
fn simplex_min(a: &[f64], b: &[f64], c: &[f64], m: usize, n: usize) -> Result<Option<f64>> {
    // Work tableau: m rows of (n structural + m artificial + rhs), with the
    // rows scaled to unit max magnitude for stability.
    let ncols = n + m;
    let mut t = vec![0.0; m * (ncols + 1)];
    for r in 0..m {
        let mut scale = b[r].abs();
        for k in 0..n {
            scale = scale.max(a[r * n + k].abs());
        }
        if scale == 0.0 {
            scale = 1.0;
        }
        let sign = if b[r] < 0.0 { -1.0 } else { 1.0 };
        let f = sign / scale;
        for k in 0..n {
            t[r * (ncols + 1) + k] = a[r * n + k] * f;
        }
        t[r * (ncols + 1) + n + r] = 1.0;
        t[r * (ncols + 1) + ncols] = b[r] * f;
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    // Phase 1: minimize the sum of artificials.
    let mut cost1 = vec![0.0; ncols];
    for j in n..ncols {
        cost1[j] = 1.0;
    }
    let p1 = run_simplex(&mut t, &mut basis, &cost1, m, ncols, n + m)?;
    let feas_tol = 1e-8 * (1.0 + b.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())));
    if p1 > feas_tol {
        return Ok(None);
    }
    // Drive any artificial still in the basis out of it where possible;
    // rows where no structural pivot exists are redundant and stay put with
    // the artificial fixed at zero.
    for r in 0..m {
        if basis[r] >= n {
            let row = &t[r * (ncols + 1)..r * (ncols + 1) + ncols];
            if let Some(j) = (0..n).find(|&j| row[j].abs() > 1e-9) {
                pivot(&mut t, m, ncols, r, j);
                basis[r] = j;
            }
        }
    }

    // Phase 2: original objective, artificials barred from entering.
    let mut cost2 = vec![0.0; ncols];
    cost2[..n].copy_from_slice(c);
    let obj = run_simplex(&mut t, &mut basis, &cost2, m, ncols, n)?;
    Ok(Some(obj))
}

/// Runs simplex iterations on the tableau until optimality. `enter_limit`
/// bounds the column indices allowed to enter the basis. Returns the
/// objective value of the final basic solution.
fn run_simplex(
    t: &mut [f64],
    basis: &mut [usize],
    cost: &[f64],
    m: usize,
    ncols: usize,
    enter_limit: usize,
) -> Result<f64> {
    let width = ncols + 1;
    let max_pivots = 50 * (ncols + 10);
    for _ in 0..max_pivots {
        // reduced costs: c_j - c_B^T B^{-1} A_j, computed from the tableau
        let mut entering = None;
        for j in 0..enter_limit {
            if basis.contains(&j) {
                continue;
            }
            let mut red = cost[j];
            for r in 0..m {
                red -= cost[basis[r]] * t[r * width + j];
            }
            if red < -1e-9 {
                entering = Some(j); // Bland: smallest index
                break;
            }
        }
        let Some(j) = entering else {
            let mut obj = 0.0;
            for r in 0..m {
                obj += cost[basis[r]] * t[r * width + ncols];
            }
            return Ok(obj);
        };
        // ratio test; Bland tie-break on smallest basis index
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..m {
            let arj = t[r * width + j];
            if arj > 1e-11 {
                let ratio = t[r * width + ncols] / arj;
                match leave {
                    None => leave = Some((r, ratio)),
                    Some((rb, best)) => {
                        if ratio < best - 1e-12
                            || (ratio <= best + 1e-12 && basis[r] < basis[rb])
                        {
                            leave = Some((r, ratio.min(best)));
                        }
                    }
                }
            }
        }
        let Some((r, _)) = leave else {
            // Unbounded phase-2 cannot occur here (the feasible set is a
            // subset of the simplex); treat it as a numerical fault.
            return Err(Error::Numerical("simplex detected an unbounded direction".into()));
        };
        pivot(t, m, ncols, r, j);
        basis[r] = j;
    }
    Err(Error::Numerical("simplex pivot limit exceeded".into()))
}

fn pivot(t: &mut [f64], m: usize, ncols: usize, r: usize, j: usize) {
    let width = ncols + 1;
    let p = t[r * width + j];
    for k in 0..width {
        t[r * width + k] /= p;
    }
    for rr in 0..m {
        if rr == r {
            continue;
        }
        let f = t[rr * width + j];
        if f != 0.0 {
            for k in 0..width {
                t[rr * width + k] -= f * t[r * width + k];
            }
        }
    }
}
