//! Scalable multivariate convex regression.
//!
//! Fits the least-squares estimator over all convex functions — a quadratic
//! program with O(n^2) supporting-hyperplane constraints — by splitting
//! methods whose per-iteration cost is O(n^2): a three-block ADMM and an
//! augmented-Lagrangian method with inner block-coordinate descent. The
//! framework extends to Lipschitz-bounded subgradients (ball-constrained
//! per-point solves), coordinate-wise monotone fits (sign-constrained
//! coordinate descent) and concave counterparts, and can post-process the
//! fitted piecewise-affine estimator into a smooth convex surrogate with a
//! certified sup-norm error and gradient Lipschitz constant.
//!
//! Entry points:
//! * [`solver::fit`] / [`solver::fit_standardized`] — fit a model;
//! * [`model::PwaModel::eval_max_rule`] and [`canonical::eval_canonical`] —
//!   extend the fit to all of R^d;
//! * [`smoothing::make_smooth`] — certified smooth surrogates;
//! * [`select::cross_validate_l`] — tune the Lipschitz bound by k-fold CV
//!   with the one-standard-error rule;
//! * [`io`] — CSV and JSON wire formats.

pub mod canonical;
pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod select;
pub mod smoothing;
pub mod solver;
pub mod synth;
pub mod variants;

pub use canonical::{eval_canonical, CanonicalValue};
pub use error::{Error, Result};
pub use model::{destandardize_model, standardize, Dataset, KktReport, PwaModel, Shape, StandardizationInfo};
pub use smoothing::{bias_correct, make_smooth, project_simplex, Budget, ProxKind, SmoothModel};
pub use solver::{
    compute_kkt_report, fit, fit_admm, fit_alm, fit_standardized, precompute_gram, Algorithm,
    AlmSchedule, SolverConfig, SolverState, XiConstraint,
};
pub use variants::{concave_adapter, solve_ball_ls, solve_nnls_cd, Sign, SignPattern};
