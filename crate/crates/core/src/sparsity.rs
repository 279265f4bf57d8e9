//! Inferring the true variable density from a selection-uncertainty curve.
//!
//! The observed curve `σ_sel(ρ_model)` is approximated by a nonnegative
//! combination of mean-field kernels, one per candidate density. The
//! normalised coefficients form a discrete posterior over the candidates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::pseudoinverse_solve;
use crate::metrics::meanfield_selection_uncertainty;

pub const NNLS_TOL: f64 = 1e-10;
pub const NNLS_MAX_ITERS: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityPosterior {
    pub grid: Vec<f64>,
    pub probs: Vec<f64>,
    /// Unnormalised mixture coefficients `p_k`.
    pub weights: Vec<f64>,
    pub point_estimate: f64,
    /// Probability-weighted mean of the two most probable candidates.
    pub weighted_estimate: f64,
    pub residual: f64,
    /// Set when the observed curve was identically zero.
    pub degenerate: bool,
    pub nnls_converged: bool,
}

/// Candidate densities `k / N` for `k = 1..=floor(N/4)`.
pub fn default_grid(n_features: usize) -> Vec<f64> {
    (1..=(n_features / 4).max(1)).map(|k| k as f64 / n_features as f64).collect()
}

#[derive(Clone, Debug)]
pub struct NnlsSolution {
    pub x: DVector<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Lawson–Hanson active-set solver for `min ‖Ax - b‖₂` subject to `x ≥ 0`.
/// Stops when no inactive coordinate has a positive gradient above `tol`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64, max_iters: usize) -> Result<NnlsSolution> {
    let (rows, cols) = a.shape();
    if rows != b.len() || cols == 0 {
        return Err(Error::InvalidInput(format!("nnls shape mismatch: A is {rows}x{cols}, b has {}", b.len())));
    }
    let mut x = DVector::zeros(cols);
    let mut passive = vec![false; cols];
    let mut blocked = vec![false; cols];
    let mut iterations = 0;
    let mut converged = false;

    let gradient = |x: &DVector<f64>| a.tr_mul(&(b - a * x));

    loop {
        let w = gradient(&x);
        let candidate = (0..cols)
            .filter(|&j| !passive[j] && !blocked[j])
            .max_by(|&i, &j| w[i].total_cmp(&w[j]))
            .filter(|&j| w[j] > tol);
        let Some(t) = candidate else {
            converged = true;
            break;
        };
        if iterations >= max_iters {
            break;
        }
        passive[t] = true;

        loop {
            iterations += 1;
            let z = solve_passive(a, b, &passive)?;
            if passive.iter().zip(z.iter()).all(|(&p, &zj)| !p || zj > 0.0) {
                x = z;
                break;
            }
            // Step toward z until the first passive coordinate hits zero.
            let alpha = (0..cols)
                .filter(|&j| passive[j] && z[j] <= 0.0)
                .map(|j| x[j] / (x[j] - z[j]))
                .fold(f64::INFINITY, f64::min);
            x += alpha * (&z - &x);
            for j in 0..cols {
                if passive[j] && x[j] <= tol * 1e-3 {
                    passive[j] = false;
                    x[j] = 0.0;
                }
            }
            if iterations >= max_iters {
                break;
            }
        }
        // A newly added coordinate that could not stay positive is numerically
        // dependent on the passive set; exclude it from further selection.
        if !passive[t] {
            blocked[t] = true;
        } else {
            blocked.iter_mut().for_each(|b| *b = false);
        }
    }
    let residual = (b - a * &x).norm();
    Ok(NnlsSolution { x, residual, iterations, converged })
}

fn solve_passive(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[bool]) -> Result<DVector<f64>> {
    let idx: Vec<usize> = (0..passive.len()).filter(|&j| passive[j]).collect();
    let mut z = DVector::zeros(passive.len());
    if idx.is_empty() {
        return Ok(z);
    }
    let sub = a.select_columns(idx.iter());
    let sol = pseudoinverse_solve(&sub, b)?;
    for (k, &j) in idx.iter().enumerate() {
        z[j] = sol[k];
    }
    Ok(z)
}

/// Kernel template matrix `T[j][k] = σ_mf(ρ_model_j; grid_k)`.
pub fn template_matrix(rho_model: &[f64], grid: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(rho_model.len(), grid.len(), |j, k| meanfield_selection_uncertainty(rho_model[j], grid[k]))
}

pub fn infer_data_sparsity(curve: &[(f64, f64)], grid: &[f64]) -> Result<SparsityPosterior> {
    validate(curve, grid)?;
    let k = grid.len();
    let rho: Vec<f64> = curve.iter().map(|p| p.0).collect();
    let sigma = DVector::from_iterator(curve.len(), curve.iter().map(|p| p.1));

    let scale = sigma.amax();
    if scale == 0.0 {
        let probs = vec![1.0 / k as f64; k];
        return Ok(summarize(grid, vec![0.0; k], probs, 0.0, true, true));
    }
    let templates = template_matrix(&rho, grid);
    // Solve on the normalised curve so the stopping rule is scale-free.
    let sol = nnls(&templates, &(&sigma / scale), NNLS_TOL, NNLS_MAX_ITERS)?;
    let weights: Vec<f64> = sol.x.iter().map(|v| v * scale).collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateFit("no nonnegative kernel mixture explains the curve".into()));
    }
    let probs = weights.iter().map(|p| p / total).collect();
    Ok(summarize(grid, weights, probs, sol.residual * scale, false, sol.converged))
}

fn validate(curve: &[(f64, f64)], grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty candidate grid".into()));
    }
    if grid.iter().any(|&g| !(g > 0.0 && g < 1.0)) || grid.windows(2).any(|p| !(p[0] < p[1])) {
        return Err(Error::InvalidInput("candidate grid must be strictly increasing inside (0, 1)".into()));
    }
    if curve.len() < 2 {
        return Err(Error::InvalidInput("curve needs at least two points".into()));
    }
    if curve.iter().any(|&(r, s)| !r.is_finite() || !s.is_finite() || !(0.0..=1.0).contains(&r)) {
        return Err(Error::InvalidInput("curve values must be finite with rho_model in [0, 1]".into()));
    }
    let lo = curve.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = curve.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if !grid.iter().any(|&g| lo < g && g < hi) {
        return Err(Error::InvalidInput(format!(
            "curve spans rho_model in [{lo}, {hi}] which brackets no candidate density"
        )));
    }
    let mut distinct: Vec<f64> = curve.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < grid.len() {
        log::warn!(
            "curve has {} distinct rho_model values for {} candidates; the posterior may be under-determined",
            distinct.len(),
            grid.len()
        );
    }
    Ok(())
}

fn summarize(
    grid: &[f64],
    weights: Vec<f64>,
    probs: Vec<f64>,
    residual: f64,
    degenerate: bool,
    nnls_converged: bool,
) -> SparsityPosterior {
    // Ties resolve toward the smaller candidate: strict comparison keeps the first.
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&i, &j| probs[j].total_cmp(&probs[i]).then(i.cmp(&j)));
    let top = order[0];
    let weighted_estimate = match order.get(1) {
        Some(&second) if probs[top] + probs[second] > 0.0 => {
            (probs[top] * grid[top] + probs[second] * grid[second]) / (probs[top] + probs[second])
        }
        _ => grid[top],
    };
    SparsityPosterior {
        grid: grid.to_vec(),
        probs,
        weights,
        point_estimate: grid[top],
        weighted_estimate,
        residual,
        degenerate,
        nnls_converged,
    }
}
