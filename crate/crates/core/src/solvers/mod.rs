//! Regression solvers: closed-form Ridge, coordinate-descent LASSO, and the
//! Variational Garrote.

mod lasso;
mod ridge;
mod vg;

pub use lasso::{fit_lasso, lambda_max, lasso_path, lasso_path_with, soft_threshold, LassoConfig, LassoProblem};
pub use ridge::{fit_ridge, RidgeProblem};
pub use vg::{
    fit_vg, fit_vg_restarts, fit_vg_with_trace, logit, sigmoid, vg_free_energy, vg_gradients, VgConfig, VgObjective,
    VgTrace,
};

use crate::types::Dataset;

pub(crate) fn residual_sum_of_squares(data: &Dataset, coef: &nalgebra::DVector<f64>) -> f64 {
    let mut r = data.y.clone();
    r.gemv(-1.0, &data.x, coef, 1.0);
    r.norm_squared()
}

/// Noise precision `M / RSS`, capped so a perfect fit still serializes.
pub(crate) fn noise_precision(n_samples: usize, rss: f64) -> f64 {
    n_samples as f64 / rss.max(f64::MIN_POSITIVE)
}
