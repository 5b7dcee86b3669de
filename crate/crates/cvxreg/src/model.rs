//! Problem data and the fitted piecewise-affine model.
//!
//! A fitted model stores the function values `theta`, one subgradient per
//! data point `xi`, and the anchor points themselves. Two extension rules
//! turn the finite fit into a function on all of R^d: the max-rule (pointwise
//! maximum of the fitted supporting hyperplanes, here) and the canonical
//! interpolant (see `canonical`).

use crate::error::{Error, Result};
use crate::linalg::{dot, Mat};
use crate::variants::SignPattern;
use serde::{Deserialize, Serialize};

/// Regression data: covariates `x` (n rows, d columns) and responses `y`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Mat,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Mat, y: Vec<f64>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::Input(format!(
                "x has {} rows but y has {} entries",
                x.rows(),
                y.len()
            )));
        }
        if x.rows() < 2 {
            return Err(Error::Input("need at least 2 observations".into()));
        }
        if x.cols() < 1 {
            return Err(Error::Input("need at least 1 covariate".into()));
        }
        if x.as_slice().iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite entry in dataset".into()));
        }
        Ok(Dataset { x, y })
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }
}

/// Centering/scaling applied before a fit so it can be undone afterwards.
///
/// Columns are mean-centered and scaled to unit Euclidean norm, responses
/// likewise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationInfo {
    pub x_center: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub y_center: f64,
    pub y_scale: f64,
}

/// Centers every covariate column and the response to mean zero and scales
/// each to unit Euclidean norm. Errors on constant columns.
pub fn standardize(data: &Dataset) -> Result<(Dataset, StandardizationInfo)> {
    let n = data.n();
    let d = data.d();
    let mut x_center = vec![0.0; d];
    let mut x_scale = vec![0.0; d];
    for i in 0..n {
        let row = data.x.row(i);
        for k in 0..d {
            x_center[k] += row[k];
        }
    }
    for c in x_center.iter_mut() {
        *c /= n as f64;
    }
    let mut x = Mat::zeros(n, d);
    for i in 0..n {
        let row = data.x.row(i);
        for k in 0..d {
            let v = row[k] - x_center[k];
            *x.at_mut(i, k) = v;
            x_scale[k] += v * v;
        }
    }
    for (k, s) in x_scale.iter_mut().enumerate() {
        *s = s.sqrt();
        if *s <= 0.0 {
            return Err(Error::Degenerate(format!("covariate column {} is constant", k + 1)));
        }
    }
    for i in 0..n {
        let row = x.row_mut(i);
        for k in 0..d {
            row[k] /= x_scale[k];
        }
    }
    let y_center = data.y.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = data.y.iter().map(|v| v - y_center).collect();
    let y_scale = dot(&centered, &centered).sqrt();
    if y_scale <= 0.0 {
        return Err(Error::Degenerate("response column is constant".into()));
    }
    let y = centered.iter().map(|v| v / y_scale).collect();
    Ok((Dataset { x, y }, StandardizationInfo { x_center, x_scale, y_center, y_scale }))
}

/// Applies a previously computed standardization to new covariates.
pub fn standardize_x_with(info: &StandardizationInfo, x: &[f64]) -> Vec<f64> {
    x.iter().zip(info.x_center.iter().zip(info.x_scale.iter())).map(|(v, (c, s))| (v - c) / s).collect()
}

/// Shape of the fitted function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Convex,
    Concave,
}

/// Which constrained estimator produced the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantTag {
    pub shape: Shape,
    /// Euclidean bound on every fitted subgradient, on the scale the fit ran.
    pub lipschitz: Option<f64>,
    pub monotone: Option<SignPattern>,
}

impl VariantTag {
    pub fn plain() -> Self {
        VariantTag { shape: Shape::Convex, lipschitz: None, monotone: None }
    }
}

/// The four optimality residuals of the convex regression QP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// ||Gamma||_F / n where Gamma_ij = eta_ij - (theta_j + <Delta_ij, xi_j> - theta_i).
    pub primal_feasibility: f64,
    /// max_j || sum_i nu_ij Delta_ij ||_2
    pub subgrad_stationarity: f64,
    /// || (theta - y) - D^T vec(nu) ||_2
    pub theta_gradient: f64,
    /// max_ij | eta_ij - min(eta_ij - nu_ij / rho, 0) |
    pub complementarity: f64,
}

/// Fit metadata carried inside a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    pub algorithm: String,
    pub iterations: usize,
    pub rho: f64,
    pub converged: bool,
    /// Residuals on the scale the solver ran (standardized when the fit
    /// pipeline standardized).
    pub kkt: KktReport,
}

/// Fitted piecewise-affine convex (or concave) model.
#[derive(Debug, Clone)]
pub struct PwaModel {
    /// Fitted values at the anchors, length n.
    pub theta: Vec<f64>,
    /// Fitted subgradients, one row per anchor (n x d).
    pub xi: Mat,
    /// The anchor points (n x d).
    pub anchors: Mat,
    pub variant: VariantTag,
    pub standardization: Option<StandardizationInfo>,
    pub fit_meta: Option<FitMeta>,
}

impl PwaModel {
    pub fn n(&self) -> usize {
        self.theta.len()
    }

    pub fn d(&self) -> usize {
        self.anchors.cols()
    }

    fn check_query(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d() {
            return Err(Error::Input(format!(
                "query has {} coordinates, model expects {}",
                x.len(),
                self.d()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite query point".into()));
        }
        Ok(())
    }

    /// Max-rule extension: max_j { theta_j + <x - X_j, xi_j> }.
    pub fn eval_max_rule(&self, x: &[f64]) -> Result<f64> {
        self.check_query(x)?;
        Ok(self.eval_max_rule_unchecked(x))
    }

    #[inline]
    pub(crate) fn eval_max_rule_unchecked(&self, x: &[f64]) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for j in 0..self.n() {
            let v = self.piece_value(j, x);
            if v > best {
                best = v;
            }
        }
        best
    }

    #[inline]
    pub fn piece_value(&self, j: usize, x: &[f64]) -> f64 {
        let xi_j = self.xi.row(j);
        let a_j = self.anchors.row(j);
        let mut v = self.theta[j];
        for k in 0..x.len() {
            v += (x[k] - a_j[k]) * xi_j[k];
        }
        v
    }

    /// Max-rule value together with the set of argmax pieces. Ties are
    /// resolved with a 1e-12 relative tolerance so active sets are
    /// reproducible.
    pub fn eval_max_rule_with_argmax(&self, x: &[f64]) -> Result<(f64, Vec<usize>)> {
        self.check_query(x)?;
        let mut vals = Vec::with_capacity(self.n());
        let mut best = f64::NEG_INFINITY;
        for j in 0..self.n() {
            let v = self.piece_value(j, x);
            vals.push(v);
            if v > best {
                best = v;
            }
        }
        let tol = 1e-12 * best.abs().max(1e-300);
        let arg: Vec<usize> = (0..self.n()).filter(|&j| best - vals[j] <= tol).collect();
        Ok((best, arg))
    }

    /// Largest violation of the supporting-hyperplane constraints,
    /// max_{i != j} (theta_j + <X_i - X_j, xi_j> - theta_i), clamped at zero.
    pub fn max_constraint_violation(&self) -> f64 {
        let n = self.n();
        let mut worst = 0.0_f64;
        for i in 0..n {
            let xi_row = self.anchors.row(i);
            let mut here = f64::NEG_INFINITY;
            for j in 0..n {
                if i == j {
                    continue;
                }
                let v = self.piece_value(j, xi_row) - self.theta[i];
                if v > here {
                    here = v;
                }
            }
            if here > worst {
                worst = here;
            }
        }
        worst
    }

    /// Checks the model invariants: constraint feasibility within `tol`,
    /// subgradient bound for Lipschitz fits, exact signs for monotone fits.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let viol = self.max_constraint_violation();
        if viol > tol {
            return Err(Error::Numerical(format!(
                "model violates feasibility by {} (tol {})",
                viol, tol
            )));
        }
        if let Some(l) = self.variant.lipschitz {
            for j in 0..self.n() {
                let nrm = crate::linalg::norm2(self.xi.row(j));
                if nrm > l + tol.max(1e-8 * l) {
                    return Err(Error::Numerical(format!(
                        "subgradient {} has norm {} above bound {}",
                        j, nrm, l
                    )));
                }
            }
        }
        if let Some(sp) = &self.variant.monotone {
            for j in 0..self.n() {
                if !sp.admits(self.xi.row(j)) {
                    return Err(Error::Numerical(format!(
                        "subgradient {} violates the sign pattern",
                        j
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Maps a model fitted on standardized data back to original units, so that
/// predictions on raw inputs agree with the standardized pipeline.
pub fn destandardize_model(model: &PwaModel, info: &StandardizationInfo) -> PwaModel {
    let n = model.n();
    let d = model.d();
    let mut theta = Vec::with_capacity(n);
    let mut xi = Mat::zeros(n, d);
    let mut anchors = Mat::zeros(n, d);
    for j in 0..n {
        theta.push(info.y_center + info.y_scale * model.theta[j]);
        for k in 0..d {
            *xi.at_mut(j, k) = info.y_scale * model.xi.at(j, k) / info.x_scale[k];
            *anchors.at_mut(j, k) = info.x_center[k] + info.x_scale[k] * model.anchors.at(j, k);
        }
    }
    PwaModel {
        theta,
        xi,
        anchors,
        variant: model.variant.clone(),
        standardization: Some(info.clone()),
        fit_meta: model.fit_meta.clone(),
    }
}
