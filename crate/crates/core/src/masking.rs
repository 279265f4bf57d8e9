//! Turning solver weights into selection masks.
//!
//! VG masks are used as-is. LASSO weights are split at the "elbow" found by a
//! zero-centred two-Gaussian mixture; Ridge weights are compared against a
//! lower bound calibrated from unregularized fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solvers::fit_ridge;
use crate::types::Dataset;

const EM_TOL: f64 = 1e-10;
const EM_MAX_ITERS: usize = 5_000;
/// Component widths never drop below this fraction of the RMS weight, so an
/// exact-zero cluster cannot collapse the likelihood.
const SIGMA_FLOOR: f64 = 1e-6;
/// (narrow, wide) multipliers of the RMS weight for each EM restart.
const RESTARTS: [(f64, f64); 3] = [(0.1, 2.0), (0.05, 3.0), (0.2, 1.5)];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElbowFit {
    pub sigma_narrow: f64,
    pub sigma_wide: f64,
    /// Prior weight of the narrow component.
    pub mix_weight: f64,
    pub threshold: f64,
    pub em_iters: usize,
    pub converged: bool,
    /// Set when every weight was exactly zero and no mixture was fitted.
    #[serde(default)]
    pub all_zero: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeBound {
    pub w_lower: f64,
    pub n_calibration: usize,
}

/// Binary mask `|w_i| > elbow` from a two-component zero-mean mixture fitted by EM.
pub fn mask_from_lasso(w: &[f64]) -> Result<(Vec<f64>, ElbowFit)> {
    if w.len() < 4 {
        return Err(Error::InvalidInput(format!("elbow fit needs at least 4 weights, got {}", w.len())));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite weight".into()));
    }
    if w.iter().all(|&v| v == 0.0) {
        let elbow = ElbowFit {
            sigma_narrow: 0.0,
            sigma_wide: 0.0,
            mix_weight: 1.0,
            threshold: 0.0,
            em_iters: 0,
            converged: true,
            all_zero: true,
        };
        return Ok((vec![0.0; w.len()], elbow));
    }
    let first = w[0].abs();
    if w.iter().all(|v| v.abs() == first) {
        return Err(Error::DegenerateFit("all weights have identical magnitude".into()));
    }

    let sq: Vec<f64> = w.iter().map(|v| v * v).collect();
    let rms = (sq.iter().sum::<f64>() / sq.len() as f64).sqrt();
    let floor = SIGMA_FLOOR * rms;

    let best = RESTARTS
        .iter()
        .map(|&(a, b)| em(&sq, a * rms, b * rms, 0.5, floor))
        .max_by(|p, q| p.log_lik.total_cmp(&q.log_lik))
        .expect("non-empty restarts");

    let threshold = equal_responsibility_threshold(best.sigma_narrow, best.sigma_wide, best.mix_weight);
    let mask = w.iter().map(|v| if v.abs() > threshold { 1.0 } else { 0.0 }).collect();
    let elbow = ElbowFit {
        sigma_narrow: best.sigma_narrow,
        sigma_wide: best.sigma_wide,
        mix_weight: best.mix_weight,
        threshold,
        em_iters: best.iters,
        converged: best.converged,
        all_zero: false,
    };
    Ok((mask, elbow))
}

struct EmResult {
    sigma_narrow: f64,
    sigma_wide: f64,
    mix_weight: f64,
    log_lik: f64,
    iters: usize,
    converged: bool,
}

/// EM on squared weights for `π N(0, s1²) + (1 - π) N(0, s2²)`.
fn em(sq: &[f64], s1: f64, s2: f64, pi: f64, floor: f64) -> EmResult {
    let (mut v1, mut v2, mut pi) = (s1 * s1, s2 * s2, pi);
    let floor_var = floor * floor;
    let n = sq.len() as f64;
    let mut resp = vec![0.0; sq.len()];
    let mut prev = f64::NEG_INFINITY;
    let mut iters = 0;
    let mut converged = false;
    let mut log_lik = prev;
    while iters < EM_MAX_ITERS {
        iters += 1;
        // E-step with log-sum-exp for stability.
        log_lik = 0.0;
        for (r, &s) in resp.iter_mut().zip(sq) {
            let l1 = pi.ln() - 0.5 * v1.ln() - 0.5 * s / v1;
            let l2 = (1.0 - pi).ln() - 0.5 * v2.ln() - 0.5 * s / v2;
            let hi = l1.max(l2);
            let lse = hi + ((l1 - hi).exp() + (l2 - hi).exp()).ln();
            *r = (l1 - lse).exp();
            log_lik += lse;
        }
        log_lik -= 0.5 * n * (2.0 * std::f64::consts::PI).ln();
        if log_lik - prev < EM_TOL && iters > 1 {
            converged = true;
            break;
        }
        prev = log_lik;
        // M-step.
        let r_sum: f64 = resp.iter().sum();
        let r_min = 1e-12 * n;
        let n1 = r_sum.clamp(r_min, n - r_min);
        let n2 = n - n1;
        let s1_sum: f64 = resp.iter().zip(sq).map(|(r, s)| r * s).sum();
        let s2_sum: f64 = resp.iter().zip(sq).map(|(r, s)| (1.0 - r) * s).sum();
        v1 = (s1_sum / n1).max(floor_var);
        v2 = (s2_sum / n2).max(floor_var);
        pi = (n1 / n).clamp(1e-12, 1.0 - 1e-12);
    }
    let (mut sn, mut sw, mut pn) = (v1.sqrt(), v2.sqrt(), pi);
    if sn > sw {
        std::mem::swap(&mut sn, &mut sw);
        pn = 1.0 - pn;
    }
    EmResult { sigma_narrow: sn, sigma_wide: sw, mix_weight: pn, log_lik, iters, converged }
}

/// Magnitude at which both components carry equal posterior responsibility.
pub fn equal_responsibility_threshold(sigma_narrow: f64, sigma_wide: f64, mix_weight: f64) -> f64 {
    if sigma_wide <= sigma_narrow {
        return 0.0;
    }
    // π/σ1 exp(-t²/2σ1²) = (1-π)/σ2 exp(-t²/2σ2²)
    let log_ratio = (mix_weight * sigma_wide / ((1.0 - mix_weight) * sigma_narrow)).ln();
    if log_ratio <= 0.0 {
        return 0.0;
    }
    let curvature = 1.0 / (sigma_narrow * sigma_narrow) - 1.0 / (sigma_wide * sigma_wide);
    (2.0 * log_ratio / curvature).sqrt()
}

/// Mean over datasets of the smallest absolute unregularized weight.
pub fn calibrate_ridge_bound(datasets: &[Dataset]) -> Result<RidgeBound> {
    let minima = datasets
        .iter()
        .map(|d| {
            let fit = fit_ridge(d, 0.0)?;
            Ok(min_abs(&fit.w))
        })
        .collect::<Result<Vec<f64>>>()?;
    ridge_bound_from_minima(&minima)
}

pub fn ridge_bound_from_minima(minima: &[f64]) -> Result<RidgeBound> {
    if minima.is_empty() {
        return Err(Error::InvalidInput("ridge bound calibration needs at least one dataset".into()));
    }
    let w_lower = minima.iter().sum::<f64>() / minima.len() as f64;
    Ok(RidgeBound { w_lower, n_calibration: minima.len() })
}

pub fn min_abs(w: &[f64]) -> f64 {
    w.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min)
}

pub fn mask_from_ridge(w: &[f64], bound: &RidgeBound) -> Vec<f64> {
    w.iter()
        .map(|v| if v.abs() >= bound.w_lower && *v != 0.0 { 1.0 } else { 0.0 })
        .collect()
}

pub fn rho_from_mask(m: &[f64]) -> f64 {
    crate::types::mean(m)
}
