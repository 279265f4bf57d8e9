//! Bisection on the regularization strength for a target model density.

use log::warn;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::ensemble::Ensemble;
use super::sweep::{SweepContext, SweepRow};
use crate::error::{Error, Result};
use crate::types::SolverId;

pub const MAX_BISECTION_STEPS: usize = 40;
/// Midpoints straying further than this many `tol` outside their parents count as non-monotone.
const MONOTONE_SLACK: f64 = 5.0;

#[derive(Clone, Debug, PartialEq)]
pub struct TargetOptions {
    pub tol: f64,
    pub max_steps: usize,
    /// Search interval; defaults per solver when absent.
    pub bracket: Option<(f64, f64)>,
}

impl TargetOptions {
    pub fn new(tol: f64) -> Self {
        Self { tol, max_steps: MAX_BISECTION_STEPS, bracket: None }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TargetResult {
    pub solver: SolverId,
    pub rho_target: f64,
    pub reg_strength: f64,
    pub rho_model: f64,
    /// Midpoint evaluations performed.
    pub steps: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
    pub config_hash: String,
    /// Ensemble summary at the returned strength.
    pub row: SweepRow,
}

/// Default search interval: λ ∈ [1e-4, 1e6] for Ridge, [λ_max·1e-4, λ_max]
/// for LASSO, γ ∈ [-20, 20] for VG.
pub fn default_bracket(solver: SolverId, lasso_lambda_max: Option<f64>) -> (f64, f64) {
    match solver {
        SolverId::Ridge => (1e-4, 1e6),
        SolverId::Lasso => {
            let lmax = lasso_lambda_max.unwrap_or(1.0);
            (lmax * 1e-4, lmax)
        }
        SolverId::Vg => (-20.0, 20.0),
    }
}

pub fn target_rho(cfg: &ExperimentConfig, solver: SolverId, rho_target: f64, opts: &TargetOptions) -> Result<TargetResult> {
    let ensemble = Ensemble::build(cfg)?;
    target_rho_on(cfg, &ensemble, solver, rho_target, opts)
}

pub fn target_rho_on(
    cfg: &ExperimentConfig,
    ensemble: &Ensemble,
    solver: SolverId,
    rho_target: f64,
    opts: &TargetOptions,
) -> Result<TargetResult> {
    if !(0.0..=1.0).contains(&rho_target) {
        return Err(Error::InvalidInput(format!("rho_target must lie in [0, 1], got {rho_target}")));
    }
    if !(opts.tol > 0.0) || opts.max_steps == 0 {
        return Err(Error::InvalidInput("tol and max_steps must be positive".into()));
    }
    let mut cfg = cfg.clone();
    cfg.solvers = vec![solver];
    let ctx = SweepContext::prepare(&cfg, ensemble)?;
    let (a, b) = opts.bracket.unwrap_or_else(|| default_bracket(solver, ctx.lasso_lambda_max));
    let log_scale = solver != SolverId::Vg;
    if !(a < b) || (log_scale && !(a > 0.0)) {
        return Err(Error::InvalidInput(format!("invalid bracket [{a}, {b}] for {solver}")));
    }
    let done = |row: SweepRow, steps: usize, converged: bool, warnings: Vec<String>| TargetResult {
        solver,
        rho_target,
        reg_strength: row.reg_strength,
        rho_model: row.rho_model,
        steps,
        converged,
        warnings,
        config_hash: cfg.config_hash(),
        row,
    };

    let mut lo = ctx.evaluate_point(solver, a)?;
    let mut hi = ctx.evaluate_point(solver, b)?;
    for end in [&lo, &hi] {
        if (end.rho_model - rho_target).abs() <= opts.tol {
            return Ok(done(end.clone(), 0, true, Vec::new()));
        }
    }
    let (r_min, r_max) = (lo.rho_model.min(hi.rho_model), lo.rho_model.max(hi.rho_model));
    if !(r_min < rho_target && rho_target < r_max) {
        return Err(Error::NoBracket { target: rho_target, lo: r_min, hi: r_max });
    }

    let mut warnings = Vec::new();
    let mut best = if (lo.rho_model - rho_target).abs() < (hi.rho_model - rho_target).abs() { lo.clone() } else { hi.clone() };
    for step in 1..=opts.max_steps {
        let mid_s = if log_scale {
            (0.5 * (lo.reg_strength.ln() + hi.reg_strength.ln())).exp()
        } else {
            0.5 * (lo.reg_strength + hi.reg_strength)
        };
        let mid = ctx.evaluate_point(solver, mid_s)?;
        let (p_min, p_max) = (lo.rho_model.min(hi.rho_model), lo.rho_model.max(hi.rho_model));
        let slack = MONOTONE_SLACK * opts.tol;
        if mid.rho_model < p_min - slack || mid.rho_model > p_max + slack || mid.rho_model.is_nan() {
            let msg = format!(
                "non-monotone density at {solver} strength {mid_s}: rho {} outside parents [{p_min}, {p_max}]",
                mid.rho_model
            );
            warn!("{msg}");
            warnings.push(msg);
        }
        if (mid.rho_model - rho_target).abs() < (best.rho_model - rho_target).abs() {
            best = mid.clone();
        }
        if (mid.rho_model - rho_target).abs() <= opts.tol {
            return Ok(done(mid, step, true, warnings));
        }
        // Keep the half whose end values still straddle the target.
        if (lo.rho_model - rho_target).signum() == (mid.rho_model - rho_target).signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let msg = format!("no strength within tol {} of {rho_target} after {} steps", opts.tol, opts.max_steps);
    warn!("{msg}");
    warnings.push(msg);
    Ok(done(best, opts.max_steps, false, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{DataSource, SyntheticSource};

    fn cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(vec![SolverId::Lasso], DataSource::Synthetic(SyntheticSource::square(32, 0.25)));
        cfg.n_members = 4;
        cfg.seed_base = 11;
        cfg
    }

    #[test]
    fn lasso_reaches_intermediate_density() {
        let r = target_rho(&cfg(), SolverId::Lasso, 0.25, &TargetOptions::new(1.0 / 64.0)).unwrap();
        assert!(r.converged, "{r:?}");
        assert!((r.rho_model - 0.25).abs() <= 1.0 / 64.0);
        assert!(r.steps <= MAX_BISECTION_STEPS);
        assert!(r.reg_strength > 0.0);
    }

    #[test]
    fn endpoint_target_returns_immediately() {
        // At lambda_max every member is all-zero.
        let r = target_rho(&cfg(), SolverId::Lasso, 0.0, &TargetOptions::new(1e-9)).unwrap();
        assert_eq!(r.steps, 0);
        assert_eq!(r.rho_model, 0.0);
    }

    #[test]
    fn unbracketed_target_is_an_error() {
        let opts = TargetOptions { bracket: Some((1e3, 1e4)), ..TargetOptions::new(1e-3) };
        let mut c = cfg();
        c.solvers = vec![SolverId::Ridge];
        let err = target_rho(&c, SolverId::Ridge, 0.9, &opts).unwrap_err();
        assert!(matches!(err, Error::NoBracket { .. }), "{err}");
    }
}
