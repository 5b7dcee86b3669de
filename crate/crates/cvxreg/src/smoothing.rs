//! Smooth convex surrogates for the piecewise-affine fit, with certified
//! sup-norm error and gradient Lipschitz constants.
//!
//! The fit phi(x) = max_i { a_i^T x + b_i } is replaced by
//!
//! ```text
//!   phi_tau(x) = max_{w in simplex} sum_i w_i (a_i^T x + b_i) - tau rho(w)
//! ```
//!
//! for a strongly convex prox rho on the simplex. Two proxes are supported:
//! the squared-error prox (evaluation reduces to a Euclidean projection onto
//! the simplex) and the entropy prox (closed-form log-sum-exp). Both keep
//! the surrogate convex, underestimate the fit by at most tau * sup rho, and
//! have a gradient Lipschitz constant proportional to 1/tau.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_lambda_max, Mat};
use crate::model::PwaModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProxKind {
    /// rho(w) = (1/2) || w - 1/m ||_2^2
    #[serde(rename = "sq")]
    Squared,
    /// rho(w) = sum_i w_i log w_i + log m
    #[serde(rename = "entropy")]
    Entropy,
}

impl ProxKind {
    /// sup_{w in simplex} rho(w), the constant in the uniform error bound.
    pub fn sup_rho(self, m: usize) -> f64 {
        match self {
            ProxKind::Squared => 1.0 - 1.0 / m as f64,
            ProxKind::Entropy => (m as f64).ln(),
        }
    }
}

/// Smoothing accuracy budget: fix the sup-norm error or the temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    Epsilon(f64),
    Tau(f64),
}

/// A smooth convex surrogate: affine pieces, prox kind, temperature and the
/// additive bias correction.
#[derive(Debug, Clone)]
pub struct SmoothModel {
    /// Piece slopes, one row per piece (m x d).
    pub a: Mat,
    /// Piece offsets, length m.
    pub b: Vec<f64>,
    pub prox: ProxKind,
    pub tau: f64,
    pub bias_offset: f64,
}

/// Certified accuracy of a smooth surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingCertificate {
    /// Guaranteed sup-norm distance to the piecewise-affine fit.
    pub epsilon: f64,
    /// Guaranteed Lipschitz constant of the surrogate's gradient.
    pub lipschitz_grad_constant: f64,
    pub prox: ProxKind,
    pub tau: f64,
    pub m: usize,
}

/// Value, gradient and the optimal simplex weights at one query point.
#[derive(Debug, Clone)]
pub struct SmoothEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Operation counts for the projection, exposed so the O(m log m) claim can
/// be checked structurally.
#[derive(Debug, Clone, Copy, Default)]
pub struct ProjectionCounts {
    pub sort_comparisons: usize,
    pub scan_steps: usize,
}

/// Euclidean projection onto the unit simplex by sort-based thresholding:
/// one descending sort, then a single linear scan for the threshold t with
/// sum_i max(c_i - t, 0) = 1.
pub fn project_simplex(c: &[f64]) -> Vec<f64> {
    project_simplex_counted(c).0
}

pub fn project_simplex_counted(c: &[f64]) -> (Vec<f64>, ProjectionCounts) {
    let m = c.len();
    assert!(m > 0, "cannot project an empty vector");
    let mut counts = ProjectionCounts::default();
    let mut sorted = c.to_vec();
    let mut comparisons = 0usize;
    sorted.sort_unstable_by(|a, b| {
        comparisons += 1;
        b.partial_cmp(a).expect("non-finite entry in simplex projection")
    });
    counts.sort_comparisons = comparisons;
    let mut cum = 0.0;
    // the largest entry is always active, so the loop sets the threshold at
    // least once
    let mut threshold = sorted[0] - 1.0;
    for (k, &v) in sorted.iter().enumerate() {
        counts.scan_steps += 1;
        cum += v;
        let t = (cum - 1.0) / (k + 1) as f64;
        if v - t > 0.0 {
            threshold = t;
        } else {
            break;
        }
    }
    let w: Vec<f64> = c.iter().map(|&v| (v - threshold).max(0.0)).collect();
    (w, counts)
}

impl SmoothModel {
    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn d(&self) -> usize {
        self.a.cols()
    }

    fn piece_values(&self, x: &[f64]) -> Vec<f64> {
        let m = self.m();
        let d = self.d();
        let mut p = Vec::with_capacity(m);
        for i in 0..m {
            let row = self.a.row(i);
            let mut v = self.b[i];
            for k in 0..d {
                v += row[k] * x[k];
            }
            p.push(v);
        }
        p
    }

    /// Evaluates the surrogate at `x` with its gradient and the optimal
    /// simplex weights, dispatching on the prox kind.
    pub fn eval(&self, x: &[f64]) -> Result<SmoothEval> {
        if x.len() != self.d() {
            return Err(Error::Input(format!(
                "query has {} coordinates, smooth model expects {}",
                x.len(),
                self.d()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite query point".into()));
        }
        Ok(match self.prox {
            ProxKind::Squared => self.eval_sq(x),
            ProxKind::Entropy => self.eval_entropy(x),
        })
    }

    fn gradient_from_weights(&self, w: &[f64]) -> Vec<f64> {
        let d = self.d();
        let mut g = vec![0.0; d];
        for i in 0..self.m() {
            if w[i] != 0.0 {
                let row = self.a.row(i);
                for k in 0..d {
                    g[k] += w[i] * row[k];
                }
            }
        }
        g
    }

    fn eval_sq(&self, x: &[f64]) -> SmoothEval {
        let m = self.m();
        let p = self.piece_values(x);
        let inv_m = 1.0 / m as f64;
        let c: Vec<f64> = p.iter().map(|v| v / self.tau - inv_m).collect();
        let w = project_simplex(&c);
        let mut value = 0.0;
        let mut prox = 0.0;
        for i in 0..m {
            value += w[i] * p[i];
            prox += (w[i] - inv_m) * (w[i] - inv_m);
        }
        value -= 0.5 * self.tau * prox;
        value += self.bias_offset;
        SmoothEval { value, gradient: self.gradient_from_weights(&w), weights: w }
    }

    fn eval_entropy(&self, x: &[f64]) -> SmoothEval {
        let m = self.m();
        let p = self.piece_values(x);
        let pmax = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        let mut w: Vec<f64> = p.iter().map(|v| ((v - pmax) / self.tau).exp()).collect();
        for v in &w {
            z += v;
        }
        for v in w.iter_mut() {
            *v /= z;
        }
        let value = self.tau * z.ln() + pmax - self.tau * (m as f64).ln() + self.bias_offset;
        SmoothEval { value, gradient: self.gradient_from_weights(&w), weights: w }
    }
}

/// Builds the smooth surrogate of a fitted convex model. The pieces are
/// a_i = xi_i, b_i = theta_i - <xi_i, X_i> with m = n kept as-is (no
/// deduplication: the certificate constants depend on m). The budget fixes
/// either the sup-norm error or the temperature; the other is derived.
pub fn make_smooth(
    model: &PwaModel,
    prox: ProxKind,
    budget: Budget,
) -> Result<(SmoothModel, SmoothingCertificate)> {
    if model.variant.shape != crate::model::Shape::Convex {
        return Err(Error::Input(
            "smoothing applies to convex fits; fit the negated responses for concave data".into(),
        ));
    }
    let n = model.n();
    let d = model.d();
    let mut a = Mat::zeros(n, d);
    let mut b = Vec::with_capacity(n);
    for i in 0..n {
        let xi = model.xi.row(i);
        let anchor = model.anchors.row(i);
        let mut off = model.theta[i];
        for k in 0..d {
            *a.at_mut(i, k) = xi[k];
            off -= xi[k] * anchor[k];
        }
        b.push(off);
    }
    let m = n;
    let sup_rho = prox.sup_rho(m);
    let (tau, epsilon) = match budget {
        Budget::Tau(t) => {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::Input(format!("tau must be positive and finite, got {}", t)));
            }
            (t, t * sup_rho)
        }
        Budget::Epsilon(e) => {
            if !(e > 0.0) || !e.is_finite() {
                return Err(Error::Input(format!("epsilon must be positive and finite, got {}", e)));
            }
            if sup_rho == 0.0 {
                return Err(Error::Degenerate(
                    "a single-piece model has sup rho = 0; the temperature for an epsilon \
                     budget is undefined (pass tau instead)"
                        .into(),
                ));
            }
            (e / sup_rho, e)
        }
    };
    let lipschitz = if m == 1 || epsilon == 0.0 {
        0.0
    } else {
        match prox {
            ProxKind::Squared => {
                // A is m x (d+1) with rows (b_i, a_i^T)
                let mut gram = Mat::zeros(d + 1, d + 1);
                for i in 0..m {
                    let row = a.row(i);
                    *gram.at_mut(0, 0) += b[i] * b[i];
                    for r in 0..d {
                        *gram.at_mut(r + 1, 0) += row[r] * b[i];
                        *gram.at_mut(0, r + 1) += b[i] * row[r];
                        for c in 0..d {
                            *gram.at_mut(r + 1, c + 1) += row[r] * row[c];
                        }
                    }
                }
                sym_lambda_max(&gram) * (m as f64 - 1.0) / (m as f64 * epsilon)
            }
            ProxKind::Entropy => {
                let mut amax = 0.0_f64;
                for i in 0..m {
                    amax = amax.max(b[i].abs());
                    for &v in a.row(i) {
                        amax = amax.max(v.abs());
                    }
                }
                amax * amax * (m as f64).ln() / epsilon
            }
        }
    };
    let smooth = SmoothModel { a, b, prox, tau, bias_offset: 0.0 };
    let cert = SmoothingCertificate { epsilon, lipschitz_grad_constant: lipschitz, prox, tau, m };
    Ok((smooth, cert))
}

/// Shifts the surrogate so its mean over the anchors matches the mean of the
/// fitted values (which at convergence equals the sample mean of y). The
/// offset is recomputed from scratch; any previous correction is discarded.
pub fn bias_correct(smooth: &SmoothModel, model: &PwaModel) -> Result<SmoothModel> {
    if smooth.m() != model.n() || smooth.d() != model.d() {
        return Err(Error::Input("smooth model does not match the fit it corrects".into()));
    }
    let mut zeroed = smooth.clone();
    zeroed.bias_offset = 0.0;
    let n = model.n();
    let mut acc = 0.0;
    for i in 0..n {
        let ev = zeroed.eval(model.anchors.row(i))?;
        acc += model.theta[i] - ev.value;
    }
    let mut corrected = smooth.clone();
    corrected.bias_offset = acc / n as f64;
    Ok(corrected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VariantTag;

    fn pwa_1d(anchors: &[f64], theta: &[f64], xi: &[f64]) -> PwaModel {
        let n = anchors.len();
        PwaModel {
            theta: theta.to_vec(),
            xi: Mat::from_vec(xi.to_vec(), n, 1),
            anchors: Mat::from_vec(anchors.to_vec(), n, 1),
            variant: VariantTag::plain(),
            standardization: None,
            fit_meta: None,
        }
    }

    #[test]
    fn projection_fixes_simplex_points() {
        let c = vec![0.2, 0.5, 0.3];
        let w = project_simplex(&c);
        for (a, b) in c.iter().zip(&w) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn projection_dominant_coordinate() {
        let w = project_simplex(&[10.0, 0.0, 0.0]);
        assert_eq!(w, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn projection_threshold_by_hand() {
        // threshold t = 0.1: (0.6-0.1, 0.6-0.1, 0) = (0.5, 0.5, 0)
        let w = project_simplex(&[0.6, 0.6, 0.0]);
        assert!((w[0] - 0.5).abs() < 1e-15);
        assert!((w[1] - 0.5).abs() < 1e-15);
        assert_eq!(w[2], 0.0);
        // brute-force cross-check on a grid over the simplex
        let c = [0.6, 0.6, 0.0];
        let mut best = f64::INFINITY;
        let mut best_w = [0.0; 3];
        let steps = 1000;
        for i in 0..=steps {
            for j in 0..=(steps - i) {
                let w0 = i as f64 / steps as f64;
                let w1 = j as f64 / steps as f64;
                let w2 = 1.0 - w0 - w1;
                let d = (w0 - c[0]).powi(2) + (w1 - c[1]).powi(2) + (w2 - c[2]).powi(2);
                if d < best {
                    best = d;
                    best_w = [w0, w1, w2];
                }
            }
        }
        for k in 0..3 {
            assert!((w[k] - best_w[k]).abs() < 2e-3);
        }
    }

    #[test]
    fn projection_output_is_a_distribution() {
        let w = project_simplex(&[-3.0, 0.4, 2.2, 0.4, -0.7]);
        assert!(w.iter().all(|&v| v >= 0.0));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn squared_eval_identical_pieces_collapse() {
        // both pieces are y = 2x + 1
        let model = pwa_1d(&[0.0, 0.0], &[1.0, 1.0], &[2.0, 2.0]);
        let (smooth, _) = make_smooth(&model, ProxKind::Squared, Budget::Tau(0.3)).unwrap();
        let ev = smooth.eval(&[1.7]).unwrap();
        assert!((ev.value - (2.0 * 1.7 + 1.0)).abs() < 1e-12);
        assert!((ev.gradient[0] - 2.0).abs() < 1e-12);
        assert!((ev.weights[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn squared_eval_large_tau_averages_pieces() {
        let model = pwa_1d(&[0.0, 1.0, 2.0], &[0.0, 0.0, 2.0], &[0.0, 1.0, 2.0]);
        let (smooth, _) = make_smooth(&model, ProxKind::Squared, Budget::Tau(1e6)).unwrap();
        let x = [1.5];
        let ev = smooth.eval(&x).unwrap();
        let mean: f64 = (0..3).map(|i| model.piece_value(i, &x)).sum::<f64>() / 3.0;
        assert!((ev.value - mean).abs() < 1e-4);
        for w in &ev.weights {
            assert!((w - 1.0 / 3.0).abs() < 1e-6);
        }
    }

    #[test]
    fn squared_eval_two_piece_hand_computation() {
        // piece values (0, 1) at x = 0, tau = 1: w = (0, 1),
        // value = 1 - (1/2)||(0,1) - (1/2,1/2)||^2 = 0.75
        let model = pwa_1d(&[0.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]);
        let (smooth, _) = make_smooth(&model, ProxKind::Squared, Budget::Tau(1.0)).unwrap();
        let ev = smooth.eval(&[0.0]).unwrap();
        assert!((ev.weights[0] - 0.0).abs() < 1e-12);
        assert!((ev.weights[1] - 1.0).abs() < 1e-12);
        assert!((ev.value - 0.75).abs() < 1e-12);
        // grid-search oracle over the 2-simplex
        let mut best = f64::NEG_INFINITY;
        for i in 0..=10_000 {
            let w1 = i as f64 / 10_000.0;
            let w0 = 1.0 - w1;
            let val = w1 - 0.5 * ((w0 - 0.5).powi(2) + (w1 - 0.5).powi(2));
            best = best.max(val);
        }
        assert!((ev.value - best).abs() < 1e-8);
    }

    #[test]
    fn entropy_eval_equal_pieces() {
        let model = pwa_1d(&[0.0, 0.0, 0.0], &[0.7, 0.7, 0.7], &[0.0, 0.0, 0.0]);
        let (smooth, _) = make_smooth(&model, ProxKind::Entropy, Budget::Tau(0.2)).unwrap();
        let ev = smooth.eval(&[3.0]).unwrap();
        assert!((ev.value - 0.7).abs() < 1e-12);
    }

    #[test]
    fn entropy_eval_two_piece_formula() {
        // piece values (0, t): tau log(1 + e^{t/tau}) - tau log 2
        let model = pwa_1d(&[0.0, 0.0], &[0.0, 0.0], &[0.0, 1.0]);
        for (tau, t) in [(0.5, 0.8), (1.0, 0.0), (0.1, -0.4)] {
            let (smooth, _) = make_smooth(&model, ProxKind::Entropy, Budget::Tau(tau)).unwrap();
            let x = [t];
            let ev = smooth.eval(&x).unwrap();
            let expect = tau * (1.0 + (t / tau).exp()).ln() - tau * 2.0_f64.ln();
            assert!((ev.value - expect).abs() < 1e-12);
            // two-sided gap bound at m = 2
            let hard = t.max(0.0);
            assert!(hard - ev.value >= -1e-12);
            assert!(hard - ev.value <= tau * 2.0_f64.ln() + 1e-12);
        }
    }

    #[test]
    fn entropy_eval_zero_temperature_limit() {
        let model = pwa_1d(&[0.0, 1.0, 2.0], &[0.0, 0.0, 2.0], &[0.0, 1.0, 2.0]);
        let (smooth, _) = make_smooth(&model, ProxKind::Entropy, Budget::Tau(1e-8)).unwrap();
        for x in [[-0.3], [0.4], [1.9], [3.2]] {
            let ev = smooth.eval(&x).unwrap();
            let hard = model.eval_max_rule(&x).unwrap();
            assert!((ev.value - hard).abs() < 1e-6);
        }
    }

    #[test]
    fn epsilon_budget_inverts_the_bound() {
        let model = pwa_1d(&[0.0, 1.0], &[0.0, 1.0], &[0.0, 2.0]);
        let e = 2.0_f64.ln();
        let (smooth, cert) = make_smooth(&model, ProxKind::Entropy, Budget::Epsilon(e)).unwrap();
        assert!((smooth.tau - 1.0).abs() < 1e-15);
        assert!((cert.epsilon - e).abs() < 1e-15);
        // squared: tau = eps / (1 - 1/m), m = 2
        let (smooth2, _) = make_smooth(&model, ProxKind::Squared, Budget::Epsilon(0.25)).unwrap();
        assert!((smooth2.tau - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_piece_epsilon_budget_is_degenerate() {
        let model = pwa_1d(&[0.0], &[1.0], &[0.5]);
        assert!(make_smooth(&model, ProxKind::Entropy, Budget::Epsilon(0.1)).is_err());
        assert!(make_smooth(&model, ProxKind::Squared, Budget::Epsilon(0.1)).is_err());
        // tau budget stays defined: the surrogate is the piece itself
        let (smooth, cert) = make_smooth(&model, ProxKind::Entropy, Budget::Tau(0.5)).unwrap();
        assert_eq!(cert.epsilon, 0.0);
        assert_eq!(cert.lipschitz_grad_constant, 0.0);
        let ev = smooth.eval(&[2.0]).unwrap();
        assert!((ev.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bias_correction_centers_anchor_values() {
        let model = pwa_1d(&[0.0, 1.0, 2.0], &[0.0, 0.0, 2.0], &[0.0, 1.0, 2.0]);
        for prox in [ProxKind::Squared, ProxKind::Entropy] {
            let (smooth, _) = make_smooth(&model, prox, Budget::Tau(0.05)).unwrap();
            let corrected = bias_correct(&smooth, &model).unwrap();
            // smooth underestimates, so the offset is positive and at most
            // tau * sup rho
            assert!(corrected.bias_offset > 0.0);
            assert!(corrected.bias_offset <= 0.05 * prox.sup_rho(3) + 1e-12);
            let mean_theta: f64 = model.theta.iter().sum::<f64>() / 3.0;
            let mean_smooth: f64 = (0..3)
                .map(|i| corrected.eval(model.anchors.row(i)).unwrap().value)
                .sum::<f64>()
                / 3.0;
            assert!((mean_theta - mean_smooth).abs() < 1e-9);
        }
    }

    #[test]
    fn bias_correction_vanishes_at_tiny_tau() {
        let model = pwa_1d(&[0.0, 1.0, 2.0], &[0.0, 0.0, 2.0], &[0.0, 1.0, 2.0]);
        let (smooth, _) = make_smooth(&model, ProxKind::Entropy, Budget::Tau(1e-9)).unwrap();
        let corrected = bias_correct(&smooth, &model).unwrap();
        assert!(corrected.bias_offset.abs() <= 1e-6);
    }
}
