//! Constrained subgradient subproblems for the Lipschitz and monotone
//! estimator variants, plus the concave adapter.
//!
//! Both variants keep the outer ADMM/ALM loops untouched and only change the
//! per-point solve:
//!
//! * Lipschitz: minimize ||A_j xi - b_j||^2 subject to ||xi||_2 <= L. With
//!   the thin SVD A_j = U G V^T the solution is xi(lambda) =
//!   V diag(g_k / (g_k^2 + lambda)) U^T b_j, where lambda = 0 when the
//!   unconstrained solution already fits in the ball and otherwise solves
//!   g(lambda) = sum_k g_k^2 c_k^2 / (g_k^2 + lambda)^2 - L^2 = 0,
//!   c = U^T b_j. g is convex and strictly decreasing for lambda >= 0, so a
//!   bracketed Newton iteration finds the unique root.
//! * Monotone: minimize u^T Q u + <a, u> under coordinate sign constraints
//!   by cyclic one-at-a-time coordinate descent with the O(d) running
//!   gradient update.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm2, sym_eigen, Mat};
use crate::model::{Dataset, PwaModel, Shape};
use crate::solver::{FitResult, GramCache, SolverConfig, SolverState, XiConstraint};

/// Per-coordinate monotonicity direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    /// Non-decreasing in this coordinate: xi_k >= 0.
    #[serde(rename = "+")]
    NonNegative,
    /// Non-increasing in this coordinate: xi_k <= 0.
    #[serde(rename = "-")]
    NonPositive,
    #[serde(rename = "0")]
    Free,
}

/// Coordinate-wise sign constraints on the fitted subgradients.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SignPattern(Vec<Sign>);

impl SignPattern {
    pub fn new(signs: Vec<Sign>) -> Self {
        SignPattern(signs)
    }

    pub fn nondecreasing(d: usize) -> Self {
        SignPattern(vec![Sign::NonNegative; d])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, k: usize) -> Sign {
        self.0[k]
    }

    pub fn signs(&self) -> &[Sign] {
        &self.0
    }

    /// Exact sign admissibility (the constraints are enforced by clipping,
    /// never approximately).
    pub fn admits(&self, v: &[f64]) -> bool {
        v.iter().zip(&self.0).all(|(x, s)| match s {
            Sign::NonNegative => *x >= 0.0,
            Sign::NonPositive => *x <= 0.0,
            Sign::Free => true,
        })
    }

    /// Flips the directions; a concave non-decreasing fit is a convex
    /// non-increasing fit of the negated responses.
    pub fn negated(&self) -> Self {
        SignPattern(
            self.0
                .iter()
                .map(|s| match s {
                    Sign::NonNegative => Sign::NonPositive,
                    Sign::NonPositive => Sign::NonNegative,
                    Sign::Free => Sign::Free,
                })
                .collect(),
        )
    }
}

impl std::str::FromStr for SignPattern {
    type Err = Error;

    /// Parses "+,-,0,..." (one symbol per coordinate).
    fn from_str(s: &str) -> Result<Self> {
        let signs = s
            .split(',')
            .map(|tok| match tok.trim() {
                "+" => Ok(Sign::NonNegative),
                "-" => Ok(Sign::NonPositive),
                "0" => Ok(Sign::Free),
                other => Err(Error::Input(format!(
                    "bad sign token {:?} (expected '+', '-' or '0')",
                    other
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        if signs.is_empty() {
            return Err(Error::Input("empty sign pattern".into()));
        }
        Ok(SignPattern(signs))
    }
}

impl std::fmt::Display for SignPattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let toks: Vec<&str> = self
            .0
            .iter()
            .map(|s| match s {
                Sign::NonNegative => "+",
                Sign::NonPositive => "-",
                Sign::Free => "0",
            })
            .collect();
        write!(f, "{}", toks.join(","))
    }
}

/// Spectral data for one ball-constrained least-squares subproblem,
/// derived from the eigendecomposition of the per-point Gram matrix
/// A_j^T A_j (equivalent to the thin SVD of A_j and computed once per fit).
#[derive(Debug, Clone)]
pub struct LipschitzSubproblem {
    /// Right singular vectors, d x d.
    pub v: Mat,
    /// Singular values, nonincreasing.
    pub gamma: Vec<f64>,
}

impl LipschitzSubproblem {
    pub fn from_gram(q: &Mat) -> Self {
        let (vals, vecs) = sym_eigen(q);
        let gamma = vals.iter().map(|&l| l.max(0.0).sqrt()).collect();
        LipschitzSubproblem { v: vecs, gamma }
    }

    /// Frobenius reconstruction error of A from its singular triplets,
    /// relative to ||A||_F. `a` must be the stacked-difference matrix the
    /// Gram was built from.
    pub fn reconstruction_error(&self, a: &Mat) -> f64 {
        let n = a.rows();
        let d = a.cols();
        let gmax = self.gamma.first().copied().unwrap_or(0.0);
        let kept: Vec<usize> = (0..d).filter(|&k| self.gamma[k] > gmax * 1e-12).collect();
        // U G V^T = A V_+ V_+^T
        let mut err = 0.0;
        let mut nrm = 0.0;
        let mut proj = vec![0.0; d];
        for i in 0..n {
            let row = a.row(i);
            proj.iter_mut().for_each(|v| *v = 0.0);
            for &k in &kept {
                let mut c = 0.0;
                for l in 0..d {
                    c += row[l] * self.v.at(l, k);
                }
                for l in 0..d {
                    proj[l] += c * self.v.at(l, k);
                }
            }
            for l in 0..d {
                err += (row[l] - proj[l]) * (row[l] - proj[l]);
                nrm += row[l] * row[l];
            }
        }
        (err / nrm.max(f64::MIN_POSITIVE)).sqrt()
    }
}

/// Builds the per-point spectral caches for a Lipschitz fit.
pub fn precompute_ball_subproblems(gram: &GramCache) -> Vec<LipschitzSubproblem> {
    gram.q.par_iter().map(LipschitzSubproblem::from_gram).collect()
}

/// g(lambda) and g'(lambda) for the secular equation of the ball solve.
#[doc(hidden)]
pub fn ball_g(sub: &LipschitzSubproblem, atb: &[f64], l: f64, lambda: f64) -> (f64, f64) {
    let d = sub.gamma.len();
    let gmax = sub.gamma.first().copied().unwrap_or(0.0);
    let mut g = -l * l;
    let mut gp = 0.0;
    for k in 0..d {
        if sub.gamma[k] <= gmax * 1e-12 {
            continue;
        }
        let mut z = 0.0;
        for a in 0..d {
            z += sub.v.at(a, k) * atb[a];
        }
        let den = sub.gamma[k] * sub.gamma[k] + lambda;
        g += z * z / (den * den);
        gp += -2.0 * z * z / (den * den * den);
    }
    (g, gp)
}

/// Solves min ||A_j xi - b_j||^2 s.t. ||xi||_2 <= L given `atb = A_j^T b_j`.
/// Returns the solution and the multiplier lambda (zero when the constraint
/// is inactive). The root is located to |  ||xi|| - L | <= 1e-13 max(L, 1).
pub fn solve_ball_ls(sub: &LipschitzSubproblem, atb: &[f64], l: f64) -> Result<(Vec<f64>, f64)> {
    let d = sub.gamma.len();
    debug_assert_eq!(atb.len(), d);
    if !(l > 0.0) {
        return Err(Error::Input(format!("Lipschitz bound must be positive, got {}", l)));
    }
    let gmax = sub.gamma.first().copied().unwrap_or(0.0);
    // z = V^T atb on the kept spectrum
    let mut z = vec![0.0; d];
    let mut kept = vec![false; d];
    for k in 0..d {
        if sub.gamma[k] > gmax * 1e-12 {
            kept[k] = true;
            for a in 0..d {
                z[k] += sub.v.at(a, k) * atb[a];
            }
        }
    }
    let assemble = |coeff: &[f64]| -> Vec<f64> {
        let mut xi = vec![0.0; d];
        for k in 0..d {
            if coeff[k] != 0.0 {
                for a in 0..d {
                    xi[a] += sub.v.at(a, k) * coeff[k];
                }
            }
        }
        xi
    };
    // unconstrained (minimum-norm) solution
    let mut coeff0 = vec![0.0; d];
    let mut norm0_sq = 0.0;
    for k in 0..d {
        if kept[k] {
            let g2 = sub.gamma[k] * sub.gamma[k];
            coeff0[k] = z[k] / g2;
            norm0_sq += coeff0[k] * coeff0[k];
        }
    }
    if !l.is_finite() || norm0_sq.sqrt() <= l {
        return Ok((assemble(&coeff0), 0.0));
    }

    // ||c||^2 with c = U^T b (c_k = z_k / gamma_k)
    let c_norm_sq: f64 =
        (0..d).filter(|&k| kept[k]).map(|k| (z[k] / sub.gamma[k]).powi(2)).sum();
    let c_norm = c_norm_sq.sqrt();
    let mut lo = 0.0_f64;
    let mut hi = gmax * c_norm / l;
    // the bound ||xi(lambda)|| <= gamma_max ||c|| / lambda makes hi a
    // bracket; widen defensively against rounding
    while ball_g(sub, atb, l, hi).0 > 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Numerical("ball solve could not bracket the root".into()));
        }
    }
    let tol = 1e-13 * l.max(1.0);
    let mut lambda = (gmax * (c_norm / l - gmax)).max(0.0).min(hi);
    let mut solved = false;
    for _ in 0..200 {
        let (g, gp) = ball_g(sub, atb, l, lambda);
        debug_assert!(gp <= 0.0, "g must be decreasing while the constraint binds");
        let phi = (g + l * l).sqrt();
        if (phi - l).abs() <= tol {
            solved = true;
            break;
        }
        if g > 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
        // the slope can underflow to zero far from the root; fall back to
        // bisection whenever the Newton step is unusable
        let newton = if gp < 0.0 { lambda - g / gp } else { f64::NAN };
        lambda = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    if !solved {
        // safeguarded bisection fallback
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let (g, _) = ball_g(sub, atb, l, mid);
            let phi = (g + l * l).sqrt();
            lambda = mid;
            if (phi - l).abs() <= tol || hi - lo <= f64::EPSILON * hi.max(1.0) {
                solved = true;
                break;
            }
            if g > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if !solved {
            return Err(Error::Numerical("ball solve did not converge".into()));
        }
    }
    let mut coeff = vec![0.0; d];
    for k in 0..d {
        if kept[k] {
            coeff[k] = z[k] / (sub.gamma[k] * sub.gamma[k] + lambda);
        }
    }
    let mut xi = assemble(&coeff);
    let nrm = norm2(&xi);
    if nrm > l {
        let f = l / nrm;
        xi.iter_mut().for_each(|v| *v *= f);
    }
    Ok((xi, lambda))
}

#[inline]
fn clip(v: f64, s: Sign) -> f64 {
    match s {
        Sign::NonNegative => v.max(0.0),
        Sign::NonPositive => v.min(0.0),
        Sign::Free => v,
    }
}

pub(crate) fn nnls_cd_impl<F: FnMut(&[f64])>(
    q: &Mat,
    a: &[f64],
    signs: &SignPattern,
    warm: &[f64],
    mut on_sweep: F,
) -> Result<Vec<f64>> {
    let d = q.rows();
    assert_eq!(q.cols(), d);
    assert_eq!(a.len(), d);
    assert_eq!(signs.len(), d);
    let mut u: Vec<f64> = warm.iter().zip(signs.signs()).map(|(&v, &s)| clip(v, s)).collect();
    // running t = Q u
    let mut t = vec![0.0; d];
    for k in 0..d {
        if u[k] != 0.0 {
            let row = q.row(k);
            for l in 0..d {
                t[l] += row[l] * u[k];
            }
        }
    }
    let mut prev = u.clone();
    for _sweep in 0..200_000 {
        for k in 0..d {
            let qkk = q.at(k, k);
            if qkk <= 0.0 {
                return Err(Error::Degenerate(format!(
                    "coordinate {} has nonpositive curvature q_kk = {}",
                    k + 1,
                    qkk
                )));
            }
            let a_tilde = 2.0 * (t[k] - qkk * u[k]) + a[k];
            let unconstrained = -a_tilde / (2.0 * qkk);
            let new = clip(unconstrained, signs.get(k));
            let delta = new - u[k];
            if delta != 0.0 {
                u[k] = new;
                let row = q.row(k);
                for l in 0..d {
                    t[l] += row[l] * delta;
                }
            }
        }
        on_sweep(&u);
        let mut diff_sq = 0.0;
        let mut prev_sq = 0.0;
        for k in 0..d {
            diff_sq += (u[k] - prev[k]) * (u[k] - prev[k]);
            prev_sq += prev[k] * prev[k];
        }
        if diff_sq.sqrt() <= 1e-10 * prev_sq.sqrt() + 1e-12 {
            return Ok(u);
        }
        prev.copy_from_slice(&u);
    }
    Err(Error::Numerical("coordinate descent sweep cap exceeded".into()))
}

/// Minimizes u^T Q u + <a, u> under coordinate sign constraints by cyclic
/// coordinate descent, warm-started at `warm`. Stops when the sweep
/// displacement falls below 1e-10 relative (with a 1e-12 absolute floor).
pub fn solve_nnls_cd(q: &Mat, a: &[f64], signs: &SignPattern, warm: &[f64]) -> Result<Vec<f64>> {
    nnls_cd_impl(q, a, signs, warm, |_| {})
}

/// Lipschitz-constrained subgradient sweep: a drop-in replacement for the
/// unconstrained update inside the ADMM/ALM loops.
pub fn update_xi_lipschitz(
    state: &mut SolverState,
    data: &Dataset,
    subs: &[LipschitzSubproblem],
    rho: f64,
    l: f64,
) -> Result<()> {
    crate::solver::sweep_xi_ball(state, data, subs, rho, l)
}

/// Sign-constrained subgradient sweep (monotone fits).
pub fn update_xi_monotone(
    state: &mut SolverState,
    data: &Dataset,
    gram: &GramCache,
    rho: f64,
    signs: &SignPattern,
) -> Result<()> {
    crate::solver::sweep_xi_signs(state, data, gram, rho, signs)
}

/// Fits a concave (optionally monotone / Lipschitz) model by fitting the
/// convex model to the negated responses and negating (theta, xi). The
/// returned solver state refers to the internal convex subproblem.
pub fn concave_adapter(data: &Dataset, cfg: &SolverConfig) -> Result<FitResult> {
    let neg = Dataset::new(data.x.clone(), data.y.iter().map(|v| -v).collect())?;
    let mut inner_cfg = cfg.clone();
    inner_cfg.constraint = match cfg.constraint.clone() {
        XiConstraint::Signs(s) => XiConstraint::Signs(s.negated()),
        XiConstraint::BallAndSigns(l, s) => XiConstraint::BallAndSigns(l, s.negated()),
        other => other,
    };
    let mut res = crate::solver::fit(&neg, &inner_cfg)?;
    res.model = negate_model(&res.model, cfg);
    Ok(res)
}

fn negate_model(model: &PwaModel, cfg: &SolverConfig) -> PwaModel {
    let n = model.n();
    let d = model.d();
    let mut xi = Mat::zeros(n, d);
    for j in 0..n {
        for k in 0..d {
            *xi.at_mut(j, k) = -model.xi.at(j, k);
        }
    }
    let mut variant = model.variant.clone();
    variant.shape = Shape::Concave;
    // report the user-facing sign pattern, not the internal flipped one
    variant.monotone = match &cfg.constraint {
        XiConstraint::Signs(s) | XiConstraint::BallAndSigns(_, s) => Some(s.clone()),
        _ => None,
    };
    PwaModel {
        theta: model.theta.iter().map(|v| -v).collect(),
        xi,
        anchors: model.anchors.clone(),
        variant,
        standardization: model.standardization.clone(),
        fit_meta: model.fit_meta.clone(),
    }
}

/// Evaluates a model respecting its shape tag: concave models are stored as
/// their own (theta, xi) but extend by the min-rule, which the negation
/// already encodes; the max-rule applies verbatim either way because the
/// stored pieces were negated at fit time.
pub fn eval_shaped(model: &PwaModel, x: &[f64]) -> Result<f64> {
    match model.variant.shape {
        Shape::Convex => model.eval_max_rule(x),
        Shape::Concave => {
            if x.len() != model.d() || x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Input("bad query point".into()));
            }
            // pieces are supporting hyperplanes from above: min-rule
            let mut best = f64::INFINITY;
            for j in 0..model.n() {
                let v = model.piece_value(j, x);
                if v < best {
                    best = v;
                }
            }
            Ok(best)
        }
    }
}

/// Objective u^T Q u + <a, u> (used by tests and diagnostics).
pub fn quad_objective(q: &Mat, a: &[f64], u: &[f64]) -> f64 {
    let d = a.len();
    let mut val = 0.0;
    for i in 0..d {
        val += a[i] * u[i];
        let row = q.row(i);
        let mut qu = 0.0;
        for j in 0..d {
            qu += row[j] * u[j];
        }
        val += u[i] * qu;
    }
    val
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    fn sub_1d(a: f64) -> LipschitzSubproblem {
        let q = Mat::from_vec(vec![a * a], 1, 1);
        LipschitzSubproblem::from_gram(&q)
    }

    #[test]
    fn ball_inactive_returns_plain_least_squares() {
        // d=1, A=(a), b scalar: xi = b/a when |b/a| <= L
        let sub = sub_1d(2.0);
        let (xi, lambda) = solve_ball_ls(&sub, &[2.0 * 3.0], 10.0).unwrap();
        assert_eq!(lambda, 0.0);
        assert!((xi[0] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn ball_active_matches_closed_form_1d() {
        // a=1, b=4, L=2: lambda = |ab|/L - a^2 = 1, xi = 2
        let sub = sub_1d(1.0);
        let (xi, lambda) = solve_ball_ls(&sub, &[4.0], 2.0).unwrap();
        assert!((lambda - 1.0).abs() < 1e-10, "lambda = {}", lambda);
        assert!((xi[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ball_kkt_complementarity() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(21);
        for _ in 0..50 {
            let d = 3;
            let n = 10;
            let mut a = Mat::zeros(n, d);
            for i in 0..n {
                for k in 0..d {
                    *a.at_mut(i, k) = rng.random_range(-1.0..1.0);
                }
            }
            let mut q = Mat::zeros(d, d);
            for r in 0..d {
                for c in 0..d {
                    let mut s = 0.0;
                    for i in 0..n {
                        s += a.at(i, r) * a.at(i, c);
                    }
                    *q.at_mut(r, c) = s;
                }
            }
            let sub = LipschitzSubproblem::from_gram(&q);
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut atb = vec![0.0; d];
            for k in 0..d {
                for i in 0..n {
                    atb[k] += a.at(i, k) * b[i];
                }
            }
            let l = rng.random_range(0.05..1.5);
            let (xi, lambda) = solve_ball_ls(&sub, &atb, l).unwrap();
            let nrm = norm2(&xi);
            assert!(nrm <= l * (1.0 + 1e-8), "norm {} above bound {}", nrm, l);
            assert!(lambda >= 0.0);
            assert!(
                (lambda * (nrm * nrm - l * l)).abs() < 1e-6,
                "complementary slackness violated: lambda {} norm {}",
                lambda,
                nrm
            );
        }
    }

    #[test]
    fn ball_g_is_decreasing_where_it_matters() {
        let sub = sub_1d(1.3);
        let atb = [5.0];
        for lambda in [0.0, 0.1, 1.0, 10.0] {
            let (_, gp) = ball_g(&sub, &atb, 1.0, lambda);
            assert!(gp < 0.0);
        }
    }

    #[test]
    fn svd_reconstructs_stacked_differences() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(31);
        let n = 20;
        let d = 4;
        let mut a = Mat::zeros(n, d);
        for i in 0..n {
            for k in 0..d {
                *a.at_mut(i, k) = rng.random_range(-1.0..1.0);
            }
        }
        let mut q = Mat::zeros(d, d);
        for r in 0..d {
            for c in 0..d {
                let mut s = 0.0;
                for i in 0..n {
                    s += a.at(i, r) * a.at(i, c);
                }
                *q.at_mut(r, c) = s;
            }
        }
        let sub = LipschitzSubproblem::from_gram(&q);
        assert!(sub.gamma.windows(2).all(|w| w[0] >= w[1]), "singular values sorted");
        assert!(sub.reconstruction_error(&a) <= 1e-8);
    }

    #[test]
    fn nnls_separable_clip() {
        // Q = I, a = (-2, 2): minimize u^T u + <a,u>, u >= 0 -> (1, 0)
        let q = Mat::from_vec(vec![1.0, 0.0, 0.0, 1.0], 2, 2);
        let u = solve_nnls_cd(&q, &[-2.0, 2.0], &SignPattern::nondecreasing(2), &[0.0, 0.0]).unwrap();
        assert!((u[0] - 1.0).abs() < 1e-12);
        assert_eq!(u[1], 0.0);
    }

    #[test]
    fn nnls_nonnegative_gradient_gives_zero() {
        let q = Mat::from_vec(vec![2.0, 0.5, 0.5, 1.0], 2, 2);
        let u = solve_nnls_cd(&q, &[0.3, 1.7], &SignPattern::nondecreasing(2), &[0.4, 0.2]).unwrap();
        assert_eq!(u, vec![0.0, 0.0]);
    }

    #[test]
    fn nnls_objective_never_increases() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(41);
        for _ in 0..20 {
            let d = 4;
            let mut m = Mat::zeros(d + 2, d);
            for i in 0..d + 2 {
                for k in 0..d {
                    *m.at_mut(i, k) = rng.random_range(-1.0..1.0);
                }
            }
            let mut q = Mat::zeros(d, d);
            for r in 0..d {
                for c in 0..d {
                    let mut s = 0.0;
                    for i in 0..d + 2 {
                        s += m.at(i, r) * m.at(i, c);
                    }
                    *q.at_mut(r, c) = s;
                }
            }
            let a: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let warm: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
            let signs = SignPattern::nondecreasing(d);
            let mut last = quad_objective(&q, &a, &warm);
            nnls_cd_impl(&q, &a, &signs, &warm, |u| {
                let obj = quad_objective(&q, &a, u);
                assert!(obj <= last + 1e-12, "objective increased: {} -> {}", last, obj);
                last = obj;
            })
            .unwrap();
        }
    }

    #[test]
    fn nnls_mixed_signs() {
        // minimize (u1-1)^2 + (u2+2)^2 + (u3-3)^2 with signs (-, +, 0):
        // u1 <= 0 -> 0, u2 >= 0 -> 0, u3 free -> 3
        let q = Mat::from_vec(vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], 3, 3);
        let a = [-2.0, 4.0, -6.0];
        let signs: SignPattern = "-,+,0".parse().unwrap();
        let u = solve_nnls_cd(&q, &a, &signs, &[0.0; 3]).unwrap();
        assert_eq!(u[0], 0.0);
        assert_eq!(u[1], 0.0);
        assert!((u[2] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn nnls_rejects_zero_curvature() {
        let q = Mat::from_vec(vec![0.0, 0.0, 0.0, 1.0], 2, 2);
        let err =
            solve_nnls_cd(&q, &[1.0, 1.0], &SignPattern::nondecreasing(2), &[0.0, 0.0]).unwrap_err();
        assert!(err.to_string().contains("curvature"));
    }

    #[test]
    fn sign_pattern_parses_and_round_trips() {
        let sp: SignPattern = "+,-,0,+".parse().unwrap();
        assert_eq!(sp.len(), 4);
        assert_eq!(sp.to_string(), "+,-,0,+");
        assert!(sp.admits(&[0.0, -1.0, 5.0, 2.0]));
        assert!(!sp.admits(&[-0.1, -1.0, 5.0, 2.0]));
        assert!("x,+".parse::<SignPattern>().is_err());
    }
}
