//! Figure-ready tables for the synthetic benchmarks and the real-data study.

use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::config::{DataSource, ExperimentConfig, RealSource, SyntheticSource};
use super::ensemble::Ensemble;
use super::report::{cell, opt_cell, sweep_cells, write_json, write_table, SWEEP_COLUMNS};
use super::sweep::{run_sweep_on, SweepOutput};
use crate::error::{Error, Result};
use crate::ingest::resolve_data_dir;
use crate::metrics::{meanfield_selection_error, meanfield_selection_uncertainty};
use crate::solvers::VgConfig;
use crate::sparsity::{default_grid, infer_data_sparsity, SparsityPosterior};
use crate::types::SolverId;

/// Ensemble size behind the published curves.
pub const FULL_MEMBERS: usize = 20_000;
pub const MIN_MEMBERS: usize = 100;
/// Features and samples of the synthetic figure benchmarks.
pub const FIGURE_N: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FigureId {
    Fig2a,
    Fig2b,
    Fig2c,
    Fig3,
    Fig4,
}

impl FigureId {
    pub const ALL: [FigureId; 5] = [FigureId::Fig2a, FigureId::Fig2b, FigureId::Fig2c, FigureId::Fig3, FigureId::Fig4];

    pub fn as_str(self) -> &'static str {
        match self {
            FigureId::Fig2a => "fig2a",
            FigureId::Fig2b => "fig2b",
            FigureId::Fig2c => "fig2c",
            FigureId::Fig3 => "fig3",
            FigureId::Fig4 => "fig4",
        }
    }

    /// Relevant-variable counts (out of 256) of the synthetic panels.
    pub fn relevant_counts(self) -> &'static [usize] {
        match self {
            FigureId::Fig2a => &[192],
            FigureId::Fig2b => &[80],
            FigureId::Fig2c => &[5],
            FigureId::Fig3 => &[3, 8],
            FigureId::Fig4 => &[],
        }
    }
}

impl std::fmt::Display for FigureId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FigureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FigureId::ALL
            .into_iter()
            .find(|f| f.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown figure '{s}' (expected fig2a, fig2b, fig2c, fig3 or fig4)")))
    }
}

#[derive(Clone, Debug)]
pub struct ReproduceOptions {
    /// Fraction of the full 20,000-member ensemble, in (0, 1].
    pub scale: f64,
    pub seed: u64,
    pub workers: usize,
    pub out_dir: PathBuf,
    pub data_dir: Option<PathBuf>,
    /// Overrides the member count derived from `scale`.
    pub members: Option<usize>,
    /// Overrides the length of the default regularization grids.
    pub grid_points: Option<usize>,
    pub vg: VgConfig,
    pub vg_restarts: usize,
}

impl ReproduceOptions {
    pub fn new(scale: f64, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            scale,
            seed: 0,
            workers: 1,
            out_dir: out_dir.into(),
            data_dir: None,
            members: None,
            grid_points: None,
            vg: VgConfig::default(),
            vg_restarts: 1,
        }
    }

    pub fn n_members(&self) -> usize {
        self.members.unwrap_or_else(|| members_for_scale(self.scale))
    }
}

/// `max(round(scale · 20000), 100)`.
pub fn members_for_scale(scale: f64) -> usize {
    ((scale * FULL_MEMBERS as f64).round() as usize).max(MIN_MEMBERS)
}

#[derive(Clone, Debug, Serialize)]
pub struct LabeledSweep {
    /// `synthetic` panels carry `rho_data`; real panels carry the dataset name.
    pub dataset: String,
    pub rho_data: Option<f64>,
    pub output: SweepOutput,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolverPosterior {
    pub dataset: String,
    pub solver: SolverId,
    pub n_features: usize,
    pub posterior: Option<SparsityPosterior>,
    /// Why no posterior could be formed.
    pub error: Option<String>,
}

impl SolverPosterior {
    /// `N · ρ̂` from the weighted estimate.
    pub fn n_relevant(&self) -> Option<f64> {
        self.posterior.as_ref().map(|p| p.weighted_estimate * self.n_features as f64)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FigureOutput {
    pub figure: FigureId,
    pub scale: f64,
    pub n_members: usize,
    pub sweeps: Vec<LabeledSweep>,
    pub posteriors: Vec<SolverPosterior>,
    #[serde(skip)]
    pub files: Vec<PathBuf>,
}

/// Experiment configs behind a figure, labelled by dataset.
pub fn figure_configs(fig: FigureId, opts: &ReproduceOptions) -> Result<Vec<(String, Option<f64>, ExperimentConfig)>> {
    if !(opts.scale > 0.0 && opts.scale <= 1.0) {
        return Err(Error::InvalidConfig(format!("scale must lie in (0, 1], got {}", opts.scale)));
    }
    let base = |data: DataSource| {
        let mut cfg = ExperimentConfig::new(SolverId::ALL.to_vec(), data);
        cfg.n_members = opts.n_members();
        cfg.seed_base = opts.seed;
        cfg.worker_count = opts.workers;
        cfg.output_dir = opts.out_dir.clone();
        cfg.vg = opts.vg.clone();
        cfg.vg_restarts = opts.vg_restarts;
        if let Some(k) = opts.grid_points {
            cfg.reg_grid.default_points = k;
        }
        cfg
    };
    if fig == FigureId::Fig4 {
        let dir = resolve_data_dir(opts.data_dir.as_deref());
        return Ok(["cc", "bf"]
            .into_iter()
            .map(|name| {
                let src = RealSource { path: Some(dir.join(name)), train_fraction: None };
                let data = if name == "cc" { DataSource::Cc(src) } else { DataSource::Bf(src) };
                (name.to_string(), None, base(data))
            })
            .collect());
    }
    Ok(fig
        .relevant_counts()
        .iter()
        .map(|&k| {
            let rho = k as f64 / FIGURE_N as f64;
            ("synthetic".to_string(), Some(rho), base(DataSource::Synthetic(SyntheticSource::square(FIGURE_N, rho))))
        })
        .collect())
}

pub fn reproduce_figure(fig: FigureId, opts: &ReproduceOptions) -> Result<FigureOutput> {
    let configs = figure_configs(fig, opts)?;
    // Load every data source up front so a missing file fails before any fitting.
    let ensembles = configs.iter().map(|(_, _, cfg)| Ensemble::build(cfg)).collect::<Result<Vec<_>>>()?;
    let mut sweeps = Vec::with_capacity(configs.len());
    for ((dataset, rho_data, cfg), ensemble) in configs.iter().zip(&ensembles) {
        info!("{fig}: {dataset} sweep with {} members", cfg.n_members);
        let output = run_sweep_on(cfg, ensemble)?;
        sweeps.push(LabeledSweep { dataset: dataset.clone(), rho_data: *rho_data, output });
    }
    let posteriors = if fig == FigureId::Fig4 { sweeps.iter().flat_map(infer_per_solver).collect() } else { Vec::new() };
    let mut out = FigureOutput { figure: fig, scale: opts.scale, n_members: opts.n_members(), sweeps, posteriors, files: Vec::new() };
    out.files = write_figure(&out, &opts.out_dir)?;
    Ok(out)
}

/// Sparsity posterior from each solver's `(ρ_model, σ_sel)` curve.
pub fn infer_per_solver(sweep: &LabeledSweep) -> Vec<SolverPosterior> {
    let n = sweep.output.n_features;
    let grid = default_grid(n);
    sweep
        .output
        .curves
        .iter()
        .map(|curve| {
            let points: Vec<(f64, f64)> = curve
                .rows
                .iter()
                .filter(|r| r.valid && r.rho_model.is_finite())
                .filter_map(|r| r.sigma_sel.map(|s| (r.rho_model, s)))
                .collect();
            let (posterior, error) = match infer_data_sparsity(&points, &grid) {
                Ok(p) => (Some(p), None),
                Err(e) => {
                    warn!("{} {}: no sparsity posterior: {e}", sweep.dataset, curve.solver);
                    (None, Some(e.to_string()))
                }
            };
            SolverPosterior { dataset: sweep.dataset.clone(), solver: curve.solver, n_features: n, posterior, error }
        })
        .collect()
}

fn mixture_curve(p: &SparsityPosterior, rho_model: f64) -> f64 {
    p.grid.iter().zip(&p.weights).map(|(&d, &w)| w * meanfield_selection_uncertainty(rho_model, d)).sum()
}

fn write_figure(out: &FigureOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    let name = out.figure.as_str();
    let mut files = Vec::new();
    if out.figure == FigureId::Fig4 {
        files.extend(write_real_tables(out, dir)?);
    } else {
        files.extend(write_synthetic_tables(out, dir)?);
    }
    let json = dir.join(format!("{name}.json"));
    write_json(&json, out)?;
    files.push(json);
    Ok(files)
}

fn write_synthetic_tables(out: &FigureOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    let name = out.figure.as_str();
    let mut header = vec!["rho_data"];
    header.extend(SWEEP_COLUMNS);
    header.extend(["meanfield_e_sel", "meanfield_sigma_sel"]);
    let mut rows = Vec::new();
    let mut mask_rows = Vec::new();
    for sweep in &out.sweeps {
        let rho_data = sweep.rho_data.expect("synthetic panel");
        let hash = &sweep.output.config_hash;
        let truth = sweep.output.truth.as_ref().expect("synthetic truth");
        for row in sweep.output.curves.iter().flat_map(|c| &c.rows) {
            let mut cells = vec![cell(rho_data)];
            cells.extend(sweep_cells(row, hash));
            let finite = row.rho_model.is_finite();
            cells.push(if finite { cell(meanfield_selection_error(row.rho_model, rho_data)) } else { String::new() });
            cells.push(if finite { cell(meanfield_selection_uncertainty(row.rho_model, rho_data)) } else { String::new() });
            rows.push(cells);
            for (i, &s) in truth.s_star.iter().enumerate() {
                if s == 1 {
                    mask_rows.push(vec![
                        cell(rho_data),
                        row.solver.to_string(),
                        cell(row.reg_strength),
                        cell(row.rho_model),
                        (i + 1).to_string(),
                        cell(row.mean_mask[i]),
                        hash.clone(),
                    ]);
                }
            }
        }
    }
    let main = dir.join(format!("{name}.csv"));
    write_table(&main, &header, &rows)?;
    let mut files = vec![main];
    if out.figure == FigureId::Fig3 {
        let masks = dir.join(format!("{name}_masks.csv"));
        write_table(
            &masks,
            &["rho_data", "solver", "reg_strength", "rho_model", "variable", "mean_mask", "config_hash"],
            &mask_rows,
        )?;
        files.push(masks);
    }
    Ok(files)
}

fn write_real_tables(out: &FigureOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    let posterior_for = |dataset: &str, solver: SolverId| {
        out.posteriors.iter().find(|p| p.dataset == dataset && p.solver == solver).and_then(|p| p.posterior.as_ref())
    };
    let mut header = vec!["dataset"];
    header.extend(SWEEP_COLUMNS);
    header.push("meanfield_sigma_sel");
    let (mut rows, mut mask_rows, mut post_rows, mut est_rows) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for sweep in &out.sweeps {
        let hash = &sweep.output.config_hash;
        for curve in &sweep.output.curves {
            let posterior = posterior_for(&sweep.dataset, curve.solver);
            for row in &curve.rows {
                let mut cells = vec![sweep.dataset.clone()];
                cells.extend(sweep_cells(row, hash));
                cells.push(opt_cell(posterior.filter(|_| row.rho_model.is_finite()).map(|p| mixture_curve(p, row.rho_model))));
                rows.push(cells);
                for (name, &m) in sweep.output.feature_names.iter().zip(&row.mean_mask) {
                    mask_rows.push(vec![
                        sweep.dataset.clone(),
                        row.solver.to_string(),
                        cell(row.reg_strength),
                        cell(row.rho_model),
                        name.clone(),
                        cell(m),
                        hash.clone(),
                    ]);
                }
            }
        }
        for post in out.posteriors.iter().filter(|p| p.dataset == sweep.dataset) {
            let n = post.n_features as f64;
            let Some(p) = &post.posterior else {
                est_rows.push(vec![
                    post.dataset.clone(),
                    post.solver.to_string(),
                    post.n_features.to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    hash.clone(),
                ]);
                continue;
            };
            for ((&d, &prob), &w) in p.grid.iter().zip(&p.probs).zip(&p.weights) {
                post_rows.push(vec![
                    post.dataset.clone(),
                    post.solver.to_string(),
                    cell(d),
                    cell(d * n),
                    cell(prob),
                    cell(w),
                    hash.clone(),
                ]);
            }
            est_rows.push(vec![
                post.dataset.clone(),
                post.solver.to_string(),
                post.n_features.to_string(),
                cell(p.point_estimate),
                cell(p.weighted_estimate),
                cell(p.point_estimate * n),
                cell(p.weighted_estimate * n),
                cell(p.residual),
                hash.clone(),
            ]);
        }
    }
    let files = [
        ("fig4.csv", header.iter().map(|s| s.to_string()).collect::<Vec<_>>(), rows),
        (
            "fig4_masks.csv",
            ["dataset", "solver", "reg_strength", "rho_model", "variable", "mean_mask", "config_hash"].map(String::from).to_vec(),
            mask_rows,
        ),
        (
            "fig4_posterior.csv",
            ["dataset", "solver", "rho_candidate", "n_candidate", "prob", "weight", "config_hash"].map(String::from).to_vec(),
            post_rows,
        ),
        (
            "fig4_estimates.csv",
            [
                "dataset",
                "solver",
                "n_features",
                "point_estimate",
                "weighted_estimate",
                "n_relevant_point",
                "n_relevant_weighted",
                "residual",
                "config_hash",
            ]
            .map(String::from)
            .to_vec(),
            est_rows,
        ),
    ];
    let mut paths = Vec::new();
    for (file, header, rows) in files {
        let path = dir.join(file);
        write_table(&path, &header, &rows)?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn member_scaling() {
        assert_eq!(members_for_scale(0.01), 200);
        assert_eq!(members_for_scale(0.001), 100);
        assert_eq!(members_for_scale(1.0), 20_000);
    }

    #[test]
    fn figure_ids_parse() {
        for f in FigureId::ALL {
            assert_eq!(f.as_str().parse::<FigureId>().unwrap(), f);
        }
        assert!("fig5".parse::<FigureId>().is_err());
    }

    #[test]
    fn scale_out_of_range_rejected() {
        let opts = ReproduceOptions::new(0.0, "out");
        assert!(figure_configs(FigureId::Fig3, &opts).is_err());
        let opts = ReproduceOptions::new(1.5, "out");
        assert!(figure_configs(FigureId::Fig3, &opts).is_err());
    }

    #[test]
    fn fig3_configs_cover_both_densities() {
        let opts = ReproduceOptions::new(0.01, "out");
        let cfgs = figure_configs(FigureId::Fig3, &opts).unwrap();
        let rhos: Vec<f64> = cfgs.iter().map(|c| c.1.unwrap()).collect();
        assert_eq!(rhos, vec![3.0 / 256.0, 8.0 / 256.0]);
        assert!(cfgs.iter().all(|c| c.2.n_members == 200 && c.2.solvers.len() == 3));
    }

    #[test]
    fn fig4_without_data_names_fetch_script() {
        let mut opts = ReproduceOptions::new(0.005, tempfile::tempdir().unwrap().path());
        opts.data_dir = Some("/nonexistent/data".into());
        let err = reproduce_figure(FigureId::Fig4, &opts).unwrap_err();
        assert!(matches!(err, Error::MissingData(_)));
        assert!(err.to_string().contains("scripts/fetch_data.sh"));
    }

    #[test]
    fn small_synthetic_figure_writes_tables() {
        let dir = tempfile::tempdir().unwrap();
        let mut opts = ReproduceOptions::new(0.01, dir.path());
        opts.members = Some(3);
        opts.grid_points = Some(3);
        opts.vg.plateau_threshold = 1e-6;
        opts.vg.max_iters = 3000;
        let out = reproduce_figure(FigureId::Fig3, &opts).unwrap();
        assert_eq!(out.files.len(), 3);
        let text = std::fs::read_to_string(dir.path().join("fig3.csv")).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("rho_data,solver,reg_strength,rho_model,e_gen"));
        assert!(header.ends_with("meanfield_e_sel,meanfield_sigma_sel"));
        assert_eq!(lines.count(), 2 * 3 * 3);
        let masks = std::fs::read_to_string(dir.path().join("fig3_masks.csv")).unwrap();
        assert_eq!(masks.lines().count(), 1 + (3 + 8) * 3 * 3);
    }
}
