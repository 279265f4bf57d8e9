use std::io::Write;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::ensemble::{Ensemble, Member};
use crate::error::{Error, Result};
use crate::ingest::PreprocessReport;
use crate::masking::{mask_from_lasso, mask_from_ridge, min_abs, ridge_bound_from_minima, RidgeBound};
use crate::metrics::{selection_error, sigma_from_mean_mask};
use crate::solvers::{fit_ridge, fit_vg_restarts, lambda_max, LassoConfig, LassoProblem, RidgeProblem, VgConfig};
use crate::types::{FitResult, GroundTruth, SolverId};

/// A grid point is flagged invalid when more than this fraction of members failed.
pub const MAX_FAILURE_FRACTION: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub solver: SolverId,
    pub reg_strength: f64,
    /// Mean over successful members.
    pub rho_model: f64,
    pub e_gen: f64,
    /// Synthetic data only.
    pub e_sel: Option<f64>,
    /// Needs at least two successful members.
    pub sigma_sel: Option<f64>,
    /// Successful members.
    pub n_members: usize,
    pub n_failed: usize,
    pub valid: bool,
    /// Mean LASSO elbow threshold over members.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elbow_threshold: Option<f64>,
    pub mean_mask: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub solver: SolverId,
    /// Sorted by achieved `rho_model`.
    pub rows: Vec<SweepRow>,
}

impl SweepCurve {
    /// Valid row with the smallest value of `key`, ignoring missing values.
    pub fn argmin_by(&self, key: impl Fn(&SweepRow) -> Option<f64>) -> Option<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.valid)
            .filter_map(|r| key(r).filter(|v| v.is_finite()).map(|v| (v, r)))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, r)| r)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepOutput {
    /// Canonical form of the experiment, the exact input of `config_hash`.
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub n_features: usize,
    pub feature_names: Vec<String>,
    pub truth: Option<GroundTruth>,
    pub ridge_bound: Option<RidgeBound>,
    pub lasso_lambda_max: Option<f64>,
    pub preprocess: Option<PreprocessReport>,
    pub warnings: Vec<String>,
    pub curves: Vec<SweepCurve>,
}

impl SweepOutput {
    pub fn curve(&self, solver: SolverId) -> Option<&SweepCurve> {
        self.curves.iter().find(|c| c.solver == solver)
    }
}

struct Point {
    rho: f64,
    e_gen: f64,
    e_sel: Option<f64>,
    mask: Vec<f64>,
    elbow: Option<f64>,
    fit: Option<FitResult>,
}

type Outcome = std::result::Result<Point, String>;

#[derive(Default)]
struct Accumulator {
    n_ok: usize,
    n_failed: usize,
    rho: f64,
    e_gen: f64,
    e_sel: f64,
    elbow: f64,
    n_elbow: usize,
    mask: Vec<f64>,
    first_error: Option<String>,
}

impl Accumulator {
    fn add(&mut self, outcome: &Outcome) {
        match outcome {
            Ok(p) => {
                self.n_ok += 1;
                self.rho += p.rho;
                self.e_gen += p.e_gen;
                self.e_sel += p.e_sel.unwrap_or(0.0);
                if let Some(t) = p.elbow {
                    self.elbow += t;
                    self.n_elbow += 1;
                }
                if self.mask.is_empty() {
                    self.mask = vec![0.0; p.mask.len()];
                }
                for (acc, v) in self.mask.iter_mut().zip(&p.mask) {
                    *acc += v;
                }
            }
            Err(e) => {
                self.n_failed += 1;
                self.first_error.get_or_insert_with(|| e.clone());
            }
        }
    }

    fn finish(self, solver: SolverId, reg_strength: f64, synthetic: bool, n_features: usize) -> SweepRow {
        if let Some(e) = &self.first_error {
            warn!("{solver} at {reg_strength}: {} member fit(s) failed, first: {e}", self.n_failed);
        }
        let total = self.n_ok + self.n_failed;
        let k = self.n_ok as f64;
        let mean_mask: Vec<f64> =
            if self.n_ok == 0 { vec![f64::NAN; n_features] } else { self.mask.iter().map(|v| v / k).collect() };
        SweepRow {
            solver,
            reg_strength,
            rho_model: if self.n_ok == 0 { f64::NAN } else { self.rho / k },
            e_gen: if self.n_ok == 0 { f64::NAN } else { self.e_gen / k },
            e_sel: (synthetic && self.n_ok > 0).then(|| self.e_sel / k),
            sigma_sel: (self.n_ok >= 2).then(|| sigma_from_mean_mask(&mean_mask)),
            n_members: self.n_ok,
            n_failed: self.n_failed,
            valid: self.n_ok > 0 && (self.n_failed as f64) <= MAX_FAILURE_FRACTION * total as f64,
            elbow_threshold: (self.n_elbow > 0).then(|| self.elbow / self.n_elbow as f64),
            mean_mask,
        }
    }
}

/// Ensemble, calibration results and worker pool shared by sweeps and
/// density targeting.
pub struct SweepContext<'a> {
    pub cfg: &'a ExperimentConfig,
    pub ensemble: &'a Ensemble,
    pub ridge_bound: Option<RidgeBound>,
    pub lasso_lambda_max: Option<f64>,
    pool: rayon::ThreadPool,
}

impl<'a> SweepContext<'a> {
    /// Builds the worker pool and runs the calibration pass: the Ridge mask
    /// bound (mean smallest unregularized |w| over members) and the largest
    /// member `lambda_max` for the default LASSO grid.
    pub fn prepare(cfg: &'a ExperimentConfig, ensemble: &'a Ensemble) -> Result<Self> {
        cfg.validate()?;
        // Parallelism comes from the member pool; each task stays sequential.
        faer::set_global_parallelism(faer::Par::Seq);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.worker_count)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
        let mut ctx = Self { cfg, ensemble, ridge_bound: None, lasso_lambda_max: None, pool };

        let need_ridge = cfg.solvers.contains(&SolverId::Ridge);
        let need_lmax = cfg.solvers.contains(&SolverId::Lasso);
        if need_ridge || need_lmax {
            let stats = ctx.map_members(|m| {
                let min_w = if need_ridge { min_abs(&fit_ridge(&m.train, 0.0)?.w) } else { 0.0 };
                Ok((min_w, lambda_max(&m.train)))
            })?;
            if need_ridge {
                let minima: Vec<f64> = stats.iter().map(|s| s.0).collect();
                ctx.ridge_bound = Some(ridge_bound_from_minima(&minima)?);
            }
            if need_lmax {
                ctx.lasso_lambda_max = Some(stats.iter().map(|s| s.1).fold(0.0, f64::max));
            }
        }
        Ok(ctx)
    }

    /// Applies `f` to every member in index order, in parallel chunks.
    fn map_members<T: Send>(&self, f: impl Fn(&Member<'_>) -> Result<T> + Sync) -> Result<Vec<T>> {
        let mut out = Vec::with_capacity(self.ensemble.n_members);
        self.for_each_chunk(|k| f(&self.ensemble.member(k)?), |_, v| out.push(v))?;
        Ok(out)
    }

    /// Runs `task` for every member on the pool, handing results to `sink`
    /// sequentially in member order. Chunking bounds memory for large ensembles.
    fn for_each_chunk<T: Send>(
        &self,
        task: impl Fn(usize) -> Result<T> + Sync,
        mut sink: impl FnMut(usize, T),
    ) -> Result<()> {
        let n = self.ensemble.n_members;
        let chunk = (8 * self.cfg.worker_count).max(32);
        let mut start = 0;
        while start < n {
            let end = (start + chunk).min(n);
            let results: Vec<Result<T>> = self.pool.install(|| (start..end).into_par_iter().map(&task).collect());
            for (k, r) in (start..end).zip(results) {
                sink(k, r?);
            }
            start = end;
        }
        Ok(())
    }

    pub fn grid(&self, solver: SolverId) -> Result<Vec<f64>> {
        self.cfg.reg_grid.resolve(solver, self.lasso_lambda_max)
    }

    /// Fits every member at every `(solver, strengths)` point and aggregates
    /// rows in grid order. Raw fits go to `fits` as JSON lines when given.
    pub fn evaluate(
        &self,
        grids: &[(SolverId, Vec<f64>)],
        mut fits: Option<&mut dyn Write>,
    ) -> Result<Vec<Vec<SweepRow>>> {
        let mut acc: Vec<Vec<Accumulator>> =
            grids.iter().map(|(_, g)| g.iter().map(|_| Accumulator::default()).collect()).collect();
        let keep_fits = fits.is_some();
        let mut io_error: Option<std::io::Error> = None;
        self.for_each_chunk(
            |k| {
                let member = self.ensemble.member(k)?;
                Ok(grids.iter().map(|(s, g)| self.fit_member(&member, *s, g, keep_fits)).collect::<Vec<_>>())
            },
            |k, per_solver: Vec<Vec<Outcome>>| {
                for (si, outcomes) in per_solver.iter().enumerate() {
                    for (gi, o) in outcomes.iter().enumerate() {
                        acc[si][gi].add(o);
                        if let (Some(w), Ok(Point { fit: Some(fit), .. })) = (fits.as_mut(), o) {
                            let line = serde_json::json!({ "member": k, "fit": fit });
                            if let Err(e) = writeln!(w, "{line}") {
                                io_error.get_or_insert(e);
                            }
                        }
                    }
                }
                if (k + 1) % 50 == 0 {
                    info!("{} / {} members", k + 1, self.ensemble.n_members);
                }
            },
        )?;
        if let Some(e) = io_error {
            return Err(e.into());
        }
        let synthetic = self.ensemble.truth().is_some();
        Ok(acc
            .into_iter()
            .zip(grids)
            .map(|(row_acc, (solver, grid))| {
                row_acc
                    .into_iter()
                    .zip(grid)
                    .map(|(a, &s)| a.finish(*solver, s, synthetic, self.ensemble.n_features))
                    .collect()
            })
            .collect())
    }

    fn fit_member(&self, member: &Member<'_>, solver: SolverId, grid: &[f64], keep_fit: bool) -> Vec<Outcome> {
        let finish = |fit: Result<FitResult>, elbow: Option<f64>| -> Outcome {
            let fit = fit.map_err(|e| e.to_string())?;
            let e_gen = member.test_error(&fit).map_err(|e| e.to_string())?;
            let e_sel = match self.ensemble.truth() {
                Some(t) => Some(selection_error(&[(t.selection(), fit.m.as_slice())]).map_err(|e| e.to_string())?),
                None => None,
            };
            Ok(Point { rho: fit.rho_model, e_gen, e_sel, mask: fit.m.clone(), elbow, fit: keep_fit.then_some(fit) })
        };
        match solver {
            SolverId::Ridge => {
                let bound = self.ridge_bound.as_ref().expect("ridge bound calibrated");
                let problem = RidgeProblem::new(&member.train);
                grid.iter()
                    .map(|&lambda| {
                        let fit = problem.fit(lambda).map(|mut f| {
                            f.set_mask(mask_from_ridge(&f.w, bound));
                            f
                        });
                        finish(fit, None)
                    })
                    .collect()
            }
            SolverId::Lasso => {
                // Warm-started path in descending order, reported in grid order.
                let mut order: Vec<usize> = (0..grid.len()).collect();
                order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));
                let lambdas: Vec<f64> = order.iter().map(|&i| grid[i]).collect();
                let template = LassoConfig { lambda: 0.0, ..self.cfg.lasso.clone() };
                let path = LassoProblem::new(&member.train).path(&lambdas, &template);
                let mut out: Vec<Option<Outcome>> = (0..grid.len()).map(|_| None).collect();
                match path {
                    Ok(fits) => {
                        for (&i, mut fit) in order.iter().zip(fits) {
                            let outcome = match mask_from_lasso(&fit.w) {
                                Ok((mask, elbow)) => {
                                    fit.set_mask(mask);
                                    finish(Ok(fit), Some(elbow.threshold))
                                }
                                Err(e) => Err(e.to_string()),
                            };
                            out[i] = Some(outcome);
                        }
                    }
                    Err(e) => out.iter_mut().for_each(|o| *o = Some(Err(e.to_string()))),
                }
                out.into_iter().map(|o| o.expect("every grid point visited")).collect()
            }
            SolverId::Vg => grid
                .iter()
                .map(|&gamma| {
                    let cfg = VgConfig { gamma, seed: member.seed, ..self.cfg.vg.clone() };
                    finish(fit_vg_restarts(&member.train, &cfg, self.cfg.vg_restarts), None)
                })
                .collect(),
        }
    }

    /// Mean-ensemble row at a single regularization strength.
    pub fn evaluate_point(&self, solver: SolverId, strength: f64) -> Result<SweepRow> {
        let mut rows = self.evaluate(&[(solver, vec![strength])], None)?;
        Ok(rows.remove(0).remove(0))
    }
}

/// Orders rows by achieved density; ties keep grid order.
pub fn sort_rows(rows: &mut [SweepRow]) {
    rows.sort_by(|a, b| a.rho_model.total_cmp(&b.rho_model));
}

/// Runs the configured sweep. Raw fits are written to
/// `<output_dir>/fits.jsonl` when `persist_fits` is set.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    let ensemble = Ensemble::build(cfg)?;
    run_sweep_on(cfg, &ensemble)
}

pub fn run_sweep_on(cfg: &ExperimentConfig, ensemble: &Ensemble) -> Result<SweepOutput> {
    let ctx = SweepContext::prepare(cfg, ensemble)?;
    let grids = cfg.solvers.iter().map(|&s| Ok((s, ctx.grid(s)?))).collect::<Result<Vec<_>>>()?;
    info!(
        "sweep {}: {} members, {} grid points, {} worker(s)",
        cfg.config_hash(),
        ensemble.n_members,
        grids.iter().map(|g| g.1.len()).sum::<usize>(),
        cfg.worker_count
    );
    let rows = if cfg.persist_fits {
        std::fs::create_dir_all(&cfg.output_dir)?;
        let mut w = std::io::BufWriter::new(std::fs::File::create(cfg.output_dir.join("fits.jsonl"))?);
        let rows = ctx.evaluate(&grids, Some(&mut w))?;
        w.flush()?;
        rows
    } else {
        ctx.evaluate(&grids, None)?
    };
    let curves = grids
        .iter()
        .zip(rows)
        .map(|((solver, _), mut rows)| {
            sort_rows(&mut rows);
            SweepCurve { solver: *solver, rows }
        })
        .collect();
    let mut warnings = ensemble.warnings.clone();
    if ensemble.n_members < 2 {
        warnings.push("fewer than two members: sigma_sel is not reported".into());
    }
    Ok(SweepOutput {
        config: cfg.canonical(),
        config_hash: cfg.config_hash(),
        n_features: ensemble.n_features,
        feature_names: ensemble.feature_names.clone(),
        truth: ensemble.truth().cloned(),
        ridge_bound: ctx.ridge_bound.clone(),
        lasso_lambda_max: ctx.lasso_lambda_max,
        preprocess: ensemble.report.clone(),
        warnings,
        curves,
    })
}
