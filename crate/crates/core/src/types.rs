//! Shared domain types.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Design matrix (rows = samples, columns = features) plus target.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub feature_names: Option<Vec<String>>,
    pub centered: bool,
}

/// Column means removed by [`Dataset::center`], reusable on held-out data.
#[derive(Clone, Debug, PartialEq)]
pub struct CenteringOffsets {
    pub x_means: DVector<f64>,
    pub y_mean: f64,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, feature_names: Option<Vec<String>>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::InvalidInput("design matrix must be non-empty".into()));
        }
        if x.nrows() != y.len() {
            return Err(Error::InvalidInput(format!(
                "x has {} rows but y has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        if let Some(names) = &feature_names {
            if names.len() != x.ncols() {
                return Err(Error::InvalidInput(format!(
                    "{} feature names for {} columns",
                    names.len(),
                    x.ncols()
                )));
            }
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("dataset contains non-finite values".into()));
        }
        Ok(Self { x, y, feature_names, centered: false })
    }

    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn offsets(&self) -> CenteringOffsets {
        let m = self.n_samples() as f64;
        let x_means = DVector::from_iterator(self.n_features(), self.x.column_iter().map(|c| c.sum() / m));
        CenteringOffsets { x_means, y_mean: self.y.sum() / m }
    }

    /// Subtracts empirical column means and the target mean.
    pub fn center(mut self) -> (Self, CenteringOffsets) {
        let offsets = self.offsets();
        self.apply_offsets(&offsets);
        self.centered = true;
        (self, offsets)
    }

    /// Subtracts externally supplied offsets (e.g. training-set means on a test set).
    pub fn apply_offsets(&mut self, offsets: &CenteringOffsets) {
        for (mut col, mean) in self.x.column_iter_mut().zip(offsets.x_means.iter()) {
            col.add_scalar_mut(-mean);
        }
        self.y.add_scalar_mut(-offsets.y_mean);
        self.centered = true;
    }

    /// Checks the centering invariant: each column mean within
    /// `1e-10 * (column std + 1)`.
    pub fn is_centered_within_tolerance(&self) -> bool {
        let m = self.n_samples() as f64;
        let check = |sum: f64, sum_sq: f64| {
            let mean = sum / m;
            let std = (sum_sq / m - mean * mean).max(0.0).sqrt();
            mean.abs() <= 1e-10 * (std + 1.0)
        };
        self.x.column_iter().all(|c| check(c.sum(), c.norm_squared())) && check(self.y.sum(), self.y.norm_squared())
    }

    /// Subset of rows, preserving order of `rows`.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let x = self.x.select_rows(rows.iter());
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&r| self.y[r]));
        Self { x, y, feature_names: self.feature_names.clone(), centered: false }
    }
}

/// Hidden teacher of a synthetic benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub w_star: Vec<f64>,
    pub s_star: Vec<u8>,
    /// Nominal density requested from the generator.
    pub rho_data: f64,
    /// Fraction of nonzero teacher weights actually drawn.
    pub realized_density: f64,
    pub noise_std: f64,
}

impl GroundTruth {
    pub fn from_weights(w_star: Vec<f64>, rho_data: f64) -> Self {
        let s_star: Vec<u8> = w_star.iter().map(|&w| u8::from(w != 0.0)).collect();
        let realized_density = s_star.iter().map(|&s| s as f64).sum::<f64>() / w_star.len() as f64;
        Self { w_star, s_star, rho_data, realized_density, noise_std: 0.0 }
    }

    pub fn n_features(&self) -> usize {
        self.w_star.len()
    }

    pub fn n_relevant(&self) -> usize {
        self.s_star.iter().filter(|&&s| s == 1).count()
    }

    pub fn selection(&self) -> Vec<f64> {
        self.s_star.iter().map(|&s| s as f64).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverId {
    Ridge,
    Lasso,
    Vg,
}

impl SolverId {
    pub const ALL: [SolverId; 3] = [SolverId::Ridge, SolverId::Lasso, SolverId::Vg];

    pub fn as_str(self) -> &'static str {
        match self {
            SolverId::Ridge => "ridge",
            SolverId::Lasso => "lasso",
            SolverId::Vg => "vg",
        }
    }
}

impl std::fmt::Display for SolverId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SolverId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ridge" => Ok(SolverId::Ridge),
            "lasso" => Ok(SolverId::Lasso),
            "vg" => Ok(SolverId::Vg),
            other => Err(Error::InvalidConfig(format!("unknown solver '{other}'"))),
        }
    }
}

/// Outcome of a single regression fit.
///
/// `m` is the selection mask. VG produces soft masks directly. Ridge and
/// LASSO start with a provisional mask (all ones for Ridge, the nonzero
/// support for LASSO) that the masking module replaces via [`FitResult::set_mask`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(rename = "solver")]
    pub solver_id: SolverId,
    pub reg_strength: f64,
    pub rho_model: f64,
    pub loss: f64,
    pub beta: f64,
    pub converged: bool,
    pub iterations: usize,
    pub w: Vec<f64>,
    pub m: Vec<f64>,
    /// Set when an unregularized Ridge fit fell back to the minimum-norm solution.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub rank_deficient: bool,
}

impl FitResult {
    pub fn set_mask(&mut self, m: Vec<f64>) {
        debug_assert_eq!(m.len(), self.w.len());
        self.rho_model = mean(&m);
        self.m = m;
    }

    /// Coefficients used for prediction: `m_i * w_i` for VG, raw `w_i` otherwise.
    pub fn effective_coefficients(&self) -> DVector<f64> {
        match self.solver_id {
            SolverId::Vg => DVector::from_iterator(self.w.len(), self.w.iter().zip(&self.m).map(|(w, m)| w * m)),
            SolverId::Ridge | SolverId::Lasso => DVector::from_column_slice(&self.w),
        }
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> DVector<f64> {
        x * self.effective_coefficients()
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, f64::NAN]);
        let y = DVector::from_vec(vec![0.0, 1.0]);
        assert!(matches!(Dataset::new(x, y, None), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn centering_zeroes_means() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 10.0, 2.0, 20.0, 6.0, 33.0]);
        let y = DVector::from_vec(vec![5.0, 6.0, 10.0]);
        let (d, offsets) = Dataset::new(x, y, None).unwrap().center();
        assert!(d.centered);
        assert!(d.is_centered_within_tolerance());
        assert_eq!(offsets.x_means[0], 3.0);
        assert_eq!(offsets.y_mean, 7.0);
    }

    #[test]
    fn ground_truth_selection_matches_support() {
        let t = GroundTruth::from_weights(vec![0.0, 1.5, 0.0, -2.0], 0.5);
        assert_eq!(t.s_star, vec![0, 1, 0, 1]);
        assert_eq!(t.realized_density, 0.5);
    }

    #[test]
    fn fit_result_json_field_names() {
        let fit = FitResult {
            solver_id: SolverId::Vg,
            reg_strength: -1.0,
            rho_model: 0.5,
            loss: 1.0,
            beta: 2.0,
            converged: true,
            iterations: 3,
            w: vec![1.0, 2.0],
            m: vec![0.25, 0.75],
            rank_deficient: false,
        };
        let v: serde_json::Value = serde_json::to_value(&fit).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            ["beta", "converged", "iterations", "loss", "m", "reg_strength", "rho_model", "solver", "w"]
        );
        assert_eq!(v["solver"], "vg");
    }
}
