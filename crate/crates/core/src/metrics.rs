//! Ensemble metrics and their mean-field predictions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Dataset, FitResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub rho_model_mean: f64,
    pub e_gen: f64,
    /// Absent for real data, where the true selection is unknown.
    pub e_sel: Option<f64>,
    pub sigma_sel: f64,
    pub mean_mask: Vec<f64>,
    pub n_members: usize,
}

/// Normalized prediction error on one held-out set,
/// `sqrt(Σ(y_pred - y)² / Σ y²)`.
pub fn member_generalization_error(fit: &FitResult, test: &Dataset) -> Result<f64> {
    if fit.w.len() != test.n_features() {
        return Err(Error::InvalidInput(format!(
            "fit has {} weights but test set has {} features",
            fit.w.len(),
            test.n_features()
        )));
    }
    let denom = test.y.norm_squared();
    if denom == 0.0 {
        return Err(Error::DegenerateTest("test targets have zero norm".into()));
    }
    let pred = fit.predict(&test.x);
    Ok(((pred - &test.y).norm_squared() / denom).sqrt())
}

/// Mean over paired (fit, test) members of the per-member normalized error.
pub fn generalization_error(fits: &[FitResult], tests: &[Dataset]) -> Result<f64> {
    if fits.len() != tests.len() || fits.is_empty() {
        return Err(Error::InvalidInput(format!("{} fits paired with {} test sets", fits.len(), tests.len())));
    }
    let total = fits
        .iter()
        .zip(tests)
        .map(|(f, t)| member_generalization_error(f, t))
        .sum::<Result<f64>>()?;
    Ok(total / fits.len() as f64)
}

/// `(1/N) Σ_i ⟨ s_i (1 - m_i) + (1 - s_i) m_i ⟩` over `(s_star, m)` members.
pub fn selection_error<S, M>(members: &[(S, M)]) -> Result<f64>
where
    S: AsRef<[f64]>,
    M: AsRef<[f64]>,
{
    if members.is_empty() {
        return Err(Error::InvalidInput("selection error needs at least one member".into()));
    }
    let mut total = 0.0;
    for (s, m) in members {
        let (s, m) = (s.as_ref(), m.as_ref());
        if s.len() != m.len() || s.is_empty() {
            return Err(Error::InvalidInput(format!("selection length {} vs mask length {}", s.len(), m.len())));
        }
        let wrong: f64 = s.iter().zip(m).map(|(&si, &mi)| si * (1.0 - mi) + (1.0 - si) * mi).sum();
        total += wrong / s.len() as f64;
    }
    Ok(total / members.len() as f64)
}

/// `σ_sel = (1/N) Σ_i ⟨m_i⟩(1 - ⟨m_i⟩)` together with the mean mask.
pub fn selection_uncertainty<M: AsRef<[f64]>>(masks: &[M]) -> Result<(f64, Vec<f64>)> {
    if masks.len() < 2 {
        return Err(Error::InvalidInput(format!("selection uncertainty needs >= 2 members, got {}", masks.len())));
    }
    let n = masks[0].as_ref().len();
    if n == 0 || masks.iter().any(|m| m.as_ref().len() != n) {
        return Err(Error::InvalidInput("masks must share a nonzero length".into()));
    }
    let mut mean = vec![0.0; n];
    for m in masks {
        for (acc, &v) in mean.iter_mut().zip(m.as_ref()) {
            *acc += v;
        }
    }
    let k = masks.len() as f64;
    mean.iter_mut().for_each(|v| *v /= k);
    Ok((sigma_from_mean_mask(&mean), mean))
}

pub fn sigma_from_mean_mask(mean_mask: &[f64]) -> f64 {
    mean_mask.iter().map(|&p| p * (1.0 - p)).sum::<f64>() / mean_mask.len() as f64
}

/// Mean-field selection error `|ρ_model - ρ_data|`.
pub fn meanfield_selection_error(rho_model: f64, rho_data: f64) -> f64 {
    if rho_model < rho_data {
        rho_data - rho_model
    } else {
        rho_model - rho_data
    }
}

/// Mean-field selection uncertainty kernel.
///
/// Under-selection: `(ρ_m/ρ_d)(ρ_d - ρ_m)`; over-selection:
/// `(ρ_m - ρ_d)(1 - ρ_m)/(1 - ρ_d)`; zero at `ρ_m = ρ_d`.
pub fn meanfield_selection_uncertainty(rho_model: f64, rho_data: f64) -> f64 {
    if rho_model < rho_data {
        rho_model / rho_data * (rho_data - rho_model)
    } else if rho_model > rho_data {
        if rho_data >= 1.0 {
            0.0
        } else {
            (rho_model - rho_data) * (1.0 - rho_model) / (1.0 - rho_data)
        }
    } else {
        0.0
    }
}
