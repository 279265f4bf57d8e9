use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{noise_precision, residual_sum_of_squares};
use crate::error::{Error, Result};
use crate::types::{Dataset, FitResult, SolverId};

/// LASSO settings. The objective is `½·RSS + λ·‖w‖₁` with no `1/M` factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    #[serde(default)]
    pub lambda: f64,
    /// Convergence threshold on the largest coordinate change in a sweep.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_sweeps() -> usize {
    10_000
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self::new(0.0)
    }
}

impl LassoConfig {
    pub fn new(lambda: f64) -> Self {
        Self { lambda, tol: default_tol(), max_sweeps: default_max_sweeps() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("lasso lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.tol > 0.0) || self.max_sweeps == 0 {
            return Err(Error::InvalidConfig("lasso tol and max_sweeps must be positive".into()));
        }
        Ok(())
    }
}

/// `S(z, t) = sign(z)·max(|z| - t, 0)`.
#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Smallest λ for which the all-zero vector is optimal: `max_j |x_jᵀ y|`.
pub fn lambda_max(data: &Dataset) -> f64 {
    data.x.tr_mul(&data.y).amax()
}

/// Covariance-form coordinate descent state shared across a regularization path.
pub struct LassoProblem<'a> {
    data: &'a Dataset,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
}

impl<'a> LassoProblem<'a> {
    pub fn new(data: &'a Dataset) -> Self {
        Self { data, gram: data.x.tr_mul(&data.x), xty: data.x.tr_mul(&data.y) }
    }

    pub fn fit(&self, cfg: &LassoConfig, warm_start: Option<&[f64]>) -> Result<FitResult> {
        cfg.validate()?;
        let n = self.data.n_features();
        let mut w = match warm_start {
            Some(w0) if w0.len() != n => {
                return Err(Error::InvalidInput(format!("warm start has length {}, expected {n}", w0.len())))
            }
            Some(w0) => DVector::from_column_slice(w0),
            None => DVector::zeros(n),
        };
        // g = G w, kept in sync with every coordinate move.
        let mut g = &self.gram * &w;
        let mut converged = false;
        let mut sweeps = 0;
        while sweeps < cfg.max_sweeps {
            sweeps += 1;
            let mut max_delta: f64 = 0.0;
            for j in 0..n {
                let gjj = self.gram[(j, j)];
                if gjj <= 0.0 {
                    continue;
                }
                let rho = self.xty[j] - g[j] + gjj * w[j];
                let updated = soft_threshold(rho, cfg.lambda) / gjj;
                let delta = updated - w[j];
                if delta != 0.0 {
                    g.axpy(delta, &self.gram.column(j), 1.0);
                    w[j] = updated;
                    max_delta = max_delta.max(delta.abs());
                }
            }
            // A small step alone can leave a gradient error of order G_jj·tol, so the
            // subgradient condition is checked too before stopping.
            if max_delta < cfg.tol && self.kkt_violation(&w, &g, cfg.lambda) < cfg.tol {
                converged = true;
                break;
            }
        }
        let rss = residual_sum_of_squares(self.data, &w);
        let m: Vec<f64> = w.iter().map(|&v| if v != 0.0 { 1.0 } else { 0.0 }).collect();
        let rho_model = crate::types::mean(&m);
        Ok(FitResult {
            solver_id: SolverId::Lasso,
            reg_strength: cfg.lambda,
            rho_model,
            loss: 0.5 * rss + cfg.lambda * w.lp_norm(1),
            beta: noise_precision(self.data.n_samples(), rss),
            converged,
            iterations: sweeps,
            w: w.iter().copied().collect(),
            m,
            rank_deficient: false,
        })
    }

    /// Largest violation of the subgradient optimality conditions, given `g = G w`.
    fn kkt_violation(&self, w: &DVector<f64>, g: &DVector<f64>, lambda: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..w.len() {
            let corr = self.xty[j] - g[j];
            let v = if w[j] == 0.0 {
                (corr.abs() - lambda).max(0.0)
            } else {
                (corr - lambda * w[j].signum()).abs()
            };
            worst = worst.max(v);
        }
        worst
    }

    /// Sequential warm-started fits; `lambdas` must be strictly descending.
    pub fn path(&self, lambdas: &[f64], template: &LassoConfig) -> Result<Vec<FitResult>> {
        if lambdas.windows(2).any(|p| !(p[0] > p[1])) {
            return Err(Error::InvalidInput("lasso path lambdas must be strictly descending".into()));
        }
        let mut out = Vec::with_capacity(lambdas.len());
        let mut warm: Option<Vec<f64>> = None;
        for &lambda in lambdas {
            let cfg = LassoConfig { lambda, ..template.clone() };
            let fit = self.fit(&cfg, warm.as_deref())?;
            warm = Some(fit.w.clone());
            out.push(fit);
        }
        Ok(out)
    }
}

/// Cyclic coordinate descent with soft-thresholding, in fixed order `0..N`.
pub fn fit_lasso(data: &Dataset, cfg: &LassoConfig, warm_start: Option<&[f64]>) -> Result<FitResult> {
    LassoProblem::new(data).fit(cfg, warm_start)
}

pub fn lasso_path(data: &Dataset, lambdas: &[f64]) -> Result<Vec<FitResult>> {
    lasso_path_with(data, lambdas, &LassoConfig::new(0.0))
}

pub fn lasso_path_with(data: &Dataset, lambdas: &[f64], template: &LassoConfig) -> Result<Vec<FitResult>> {
    LassoProblem::new(data).path(lambdas, template)
}
