use nalgebra::{DMatrix, DVector};

use super::{noise_precision, residual_sum_of_squares};
use crate::error::{Error, Result};
use crate::linalg::pseudoinverse_solve_with_rank;
use crate::types::{Dataset, FitResult, SolverId};

/// Cached normal equations for repeated Ridge fits on one dataset.
pub struct RidgeProblem<'a> {
    data: &'a Dataset,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
}

impl<'a> RidgeProblem<'a> {
    pub fn new(data: &'a Dataset) -> Self {
        let gram = data.x.tr_mul(&data.x);
        let xty = data.x.tr_mul(&data.y);
        Self { data, gram, xty }
    }

    pub fn fit(&self, lambda: f64) -> Result<FitResult> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("ridge lambda must be finite and >= 0, got {lambda}")));
        }
        let n = self.data.n_features();
        let mut rank_deficient = false;
        let w = if lambda > 0.0 {
            let mut a = self.gram.clone();
            for i in 0..n {
                a[(i, i)] += lambda;
            }
            match a.clone().cholesky() {
                Some(chol) => chol.solve(&self.xty),
                // Only reachable when lambda is tiny relative to round-off.
                None => crate::linalg::pseudoinverse_solve(&a, &self.xty)?,
            }
        } else {
            let (w, rank) = pseudoinverse_solve_with_rank(&self.data.x, &self.data.y)?;
            rank_deficient = rank < n;
            w
        };
        let rss = residual_sum_of_squares(self.data, &w);
        Ok(FitResult {
            solver_id: SolverId::Ridge,
            reg_strength: lambda,
            rho_model: 1.0,
            loss: rss,
            beta: noise_precision(self.data.n_samples(), rss),
            converged: true,
            iterations: 1,
            w: w.iter().copied().collect(),
            m: vec![1.0; n],
            rank_deficient,
        })
    }
}

/// `w = (xᵀx + λI)⁻¹ xᵀy`; at `λ = 0` the minimum-norm pseudoinverse solution.
pub fn fit_ridge(data: &Dataset, lambda: f64) -> Result<FitResult> {
    RidgeProblem::new(data).fit(lambda)
}
