use std::path::{Path, PathBuf};

use garrote_core::datagen::{generate_dataset, sample_teacher_weights, DensityMode};
use garrote_core::harness::config::content_hash;
use garrote_core::harness::report::{cell, write_json, write_table};
use garrote_core::harness::{
    reproduce_figure, run_sweep, target_rho, write_sweep, DataSource, ExperimentConfig, RealSource, ReproduceOptions,
    SyntheticSource, TargetOptions,
};
use garrote_core::ingest::{load_bf, load_cc, resolve_data_dir, write_report};
use garrote_core::io::{is_dataset_cache, read_dataset_cache, read_dataset_csv, write_dataset_cache, write_dataset_csv};
use garrote_core::masking::{mask_from_lasso, mask_from_ridge, RidgeBound};
use garrote_core::rng::{stream_rng, Stream};
use garrote_core::solvers::{fit_lasso, fit_ridge, fit_vg_restarts, LassoConfig, VgConfig};
use garrote_core::sparsity::{default_grid, infer_data_sparsity};
use garrote_core::{Error, Result, SolverId};

use crate::{Cli, Command, DatasetKind, ExperimentArgs, Global, RealKind, SyntheticArgs, VgArgs};

/// Prints a line, tolerating a closed stdout (e.g. piped into `head`).
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

const DEFAULT_OUT: &str = "results";
const DEFAULT_N: usize = 256;

pub fn run(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    let base = match &g.config {
        Some(path) => Some(read_config(path)?),
        None => None,
    };
    match &cli.command {
        Command::Generate(a) => generate(g, base, &a.synthetic, a.cache),
        Command::Fit(a) => fit(g, base, a),
        Command::Sweep(a) => {
            let mut cfg = experiment_config(g, base, &a.experiment, a.solvers.clone())?;
            cfg.persist_fits |= a.persist_fits;
            let out = run_sweep(&cfg)?;
            for path in write_sweep(&out, &cfg.output_dir)? {
                say!("{}", path.display());
            }
            print_warnings(&out.warnings);
            Ok(())
        }
        Command::TargetRho(a) => {
            let cfg = experiment_config(g, base, &a.experiment, Some(vec![a.solver]))?;
            let bracket = match a.bracket.as_deref() {
                None => None,
                Some(&[lo, hi]) => Some((lo, hi)),
                Some(_) => return Err(Error::InvalidConfig("--bracket takes exactly two values: lo,hi".into())),
            };
            let opts = TargetOptions { tol: a.tol, max_steps: a.max_steps, bracket };
            let result = target_rho(&cfg, a.solver, a.rho_target, &opts)?;
            write_json(&cfg.output_dir.join("target_rho.json"), &result)?;
            say!(
                "{} reg_strength={} rho_model={} steps={} converged={}",
                result.solver,
                cell(result.reg_strength),
                cell(result.rho_model),
                result.steps,
                result.converged
            );
            print_warnings(&result.warnings);
            Ok(())
        }
        Command::InferSparsity(a) => infer(g, a),
        Command::Reproduce(a) => {
            let mut opts = ReproduceOptions::new(a.scale, out_dir(g, base.as_ref()));
            opts.seed = g.seed.or(base.as_ref().map(|b| b.seed_base)).unwrap_or(0);
            opts.workers = g.workers.or(base.as_ref().map(|b| b.worker_count)).unwrap_or(1);
            opts.data_dir = g.data_dir.clone();
            opts.members = a.members;
            opts.grid_points = a.grid_points;
            if let Some(b) = &base {
                opts.vg = b.vg.clone();
                opts.vg_restarts = b.vg_restarts;
            }
            apply_vg(&mut opts.vg, &a.vg);
            if let Some(r) = a.vg.vg_restarts {
                opts.vg_restarts = r;
            }
            let out = reproduce_figure(a.fig, &opts)?;
            for path in &out.files {
                say!("{}", path.display());
            }
            for p in &out.posteriors {
                match p.n_relevant() {
                    Some(n) => say!("{} {}: estimated relevant variables {n:.2}", p.dataset, p.solver),
                    None => say!("{} {}: no estimate ({})", p.dataset, p.solver, p.error.as_deref().unwrap_or("")),
                }
            }
            Ok(())
        }
        Command::Ingest(a) => ingest(g, a.dataset, a.path.as_deref()),
    }
}

fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

fn out_dir(g: &Global, base: Option<&ExperimentConfig>) -> PathBuf {
    g.out.clone().or_else(|| base.map(|b| b.output_dir.clone())).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn print_warnings(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn apply_vg(vg: &mut VgConfig, a: &VgArgs) {
    if let Some(v) = a.vg_max_iters {
        vg.max_iters = v;
    }
    if let Some(v) = a.vg_plateau_threshold {
        vg.plateau_threshold = v;
    }
}

fn synthetic_source(base: Option<&SyntheticSource>, a: &SyntheticArgs) -> Result<SyntheticSource> {
    let mut s = match (base, a.rho) {
        (Some(b), _) => b.clone(),
        (None, Some(rho)) => {
            let n = a.n_features.unwrap_or(DEFAULT_N);
            SyntheticSource::square(n, rho)
        }
        (None, None) => return Err(Error::InvalidConfig("synthetic data needs --rho (or a --config data block)".into())),
    };
    if let Some(n) = a.n_features {
        s.n_features = n;
        if a.n_samples.is_none() && base.is_none() {
            s.n_samples = n;
        }
    }
    if let Some(m) = a.n_samples {
        s.n_samples = m;
    }
    if let Some(r) = a.rho {
        s.rho_data = r;
    }
    if let Some(snr) = a.snr {
        s.snr = snr;
    }
    if a.binomial {
        s.density_mode = DensityMode::Binomial;
    }
    Ok(s)
}

/// Config file values overridden by command-line flags.
fn experiment_config(
    g: &Global,
    base: Option<ExperimentConfig>,
    a: &ExperimentArgs,
    solvers: Option<Vec<SolverId>>,
) -> Result<ExperimentConfig> {
    let kind = a.dataset.or(match base.as_ref().map(|b| &b.data) {
        Some(DataSource::Cc(_)) => Some(DatasetKind::Cc),
        Some(DataSource::Bf(_)) => Some(DatasetKind::Bf),
        _ => None,
    });
    let data = match kind {
        Some(DatasetKind::Cc) | Some(DatasetKind::Bf) => {
            let name = if kind == Some(DatasetKind::Cc) { "cc" } else { "bf" };
            let mut src = match base.as_ref().map(|b| &b.data) {
                Some(DataSource::Cc(r)) if name == "cc" => r.clone(),
                Some(DataSource::Bf(r)) if name == "bf" => r.clone(),
                _ => RealSource::default(),
            };
            if let Some(p) = &a.path {
                src.path = Some(p.clone());
            } else if let Some(d) = &g.data_dir {
                src.path = Some(d.join(name));
            }
            if let Some(f) = a.train_fraction {
                src.train_fraction = Some(f);
            }
            if name == "cc" {
                DataSource::Cc(src)
            } else {
                DataSource::Bf(src)
            }
        }
        Some(DatasetKind::Synthetic) | None => {
            let b = match base.as_ref().map(|b| &b.data) {
                Some(DataSource::Synthetic(s)) => Some(s),
                _ => None,
            };
            DataSource::Synthetic(synthetic_source(b, &a.synthetic)?)
        }
    };
    let mut cfg = match base {
        Some(mut b) => {
            b.data = data;
            b
        }
        None => ExperimentConfig::new(SolverId::ALL.to_vec(), data),
    };
    if let Some(s) = solvers {
        cfg.solvers = s;
    }
    if let Some(k) = a.members {
        cfg.n_members = k;
    }
    if let Some(k) = a.grid_points {
        cfg.reg_grid.default_points = k;
    }
    if let Some(s) = g.seed {
        cfg.seed_base = s;
    }
    if let Some(w) = g.workers {
        cfg.worker_count = w;
    }
    if let Some(o) = &g.out {
        cfg.output_dir = o.clone();
    }
    apply_vg(&mut cfg.vg, &a.vg);
    if let Some(r) = a.vg.vg_restarts {
        cfg.vg_restarts = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn generate(g: &Global, base: Option<ExperimentConfig>, a: &SyntheticArgs, cache: bool) -> Result<()> {
    let b = match base.as_ref().map(|b| &b.data) {
        Some(DataSource::Synthetic(s)) => Some(s),
        _ => None,
    };
    let src = synthetic_source(b, a)?;
    let seed = g.seed.or(base.as_ref().map(|b| b.seed_base)).unwrap_or(0);
    let truth = sample_teacher_weights(&src.spec(seed), &mut stream_rng(seed, Stream::Teacher))?;
    let data = generate_dataset(&truth, src.n_samples, &mut stream_rng(seed, Stream::Data))?;
    let dir = out_dir(g, base.as_ref());
    std::fs::create_dir_all(&dir)?;
    let data_path = if cache {
        let p = dir.join("dataset.bin");
        write_dataset_cache(&data, &p)?;
        p
    } else {
        let p = dir.join("dataset.csv");
        write_dataset_csv(&data, &p)?;
        p
    };
    let truth_path = dir.join("truth.json");
    write_json(&truth_path, &truth)?;
    say!("{}", data_path.display());
    say!("{}", truth_path.display());
    Ok(())
}

fn read_any_dataset(path: &Path) -> Result<garrote_core::Dataset> {
    if !path.exists() {
        return Err(Error::MissingData(format!("{} does not exist", path.display())));
    }
    if is_dataset_cache(path) {
        read_dataset_cache(path)
    } else {
        read_dataset_csv(path)
    }
}

fn fit(g: &Global, base: Option<ExperimentConfig>, a: &crate::FitArgs) -> Result<()> {
    let mut data = read_any_dataset(&a.data)?;
    if !data.centered {
        data = data.center().0;
    }
    let fit = match a.solver {
        SolverId::Ridge => {
            let mut fit = fit_ridge(&data, a.reg)?;
            if let Some(b) = a.ridge_bound {
                fit.set_mask(mask_from_ridge(&fit.w, &RidgeBound { w_lower: b, n_calibration: 0 }));
            }
            fit
        }
        SolverId::Lasso => {
            let template = base.as_ref().map(|b| b.lasso.clone()).unwrap_or_default();
            let mut fit = fit_lasso(&data, &LassoConfig { lambda: a.reg, ..template }, None)?;
            if fit.w.len() >= 4 {
                fit.set_mask(mask_from_lasso(&fit.w)?.0);
            }
            fit
        }
        SolverId::Vg => {
            let mut cfg = base.as_ref().map(|b| b.vg.clone()).unwrap_or_default();
            apply_vg(&mut cfg, &a.vg);
            cfg.gamma = a.reg;
            cfg.seed = g.seed.or(base.as_ref().map(|b| b.seed_base)).unwrap_or(0);
            let restarts = a.vg.vg_restarts.or(base.as_ref().map(|b| b.vg_restarts)).unwrap_or(1);
            fit_vg_restarts(&data, &cfg, restarts)?
        }
    };
    let json = serde_json::to_string_pretty(&fit)?;
    if let Some(dir) = &g.out {
        write_json(&dir.join("fit.json"), &fit)?;
    }
    say!("{json}");
    Ok(())
}

fn infer(g: &Global, a: &crate::InferArgs) -> Result<()> {
    let mut rdr = csv::Reader::from_path(&a.curve)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(rho_col), Some(sigma_col)) = (col("rho_model"), col("sigma_sel")) else {
        return Err(Error::InvalidInput(format!("{} needs rho_model and sigma_sel columns", a.curve.display())));
    };
    let (solver_col, valid_col) = (col("solver"), col("valid"));
    let parse = |s: &str, what: &str| -> Result<f64> {
        s.trim().parse::<f64>().map_err(|_| Error::InvalidInput(format!("bad {what} value '{s}'")))
    };
    let mut curve = Vec::new();
    let mut solvers_seen = std::collections::BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        if let Some(c) = solver_col {
            let s: SolverId = rec[c].parse()?;
            solvers_seen.insert(s);
            if a.solver.is_some_and(|want| want != s) {
                continue;
            }
        }
        if valid_col.is_some_and(|c| &rec[c] == "false") || rec[sigma_col].is_empty() || rec[rho_col].is_empty() {
            continue;
        }
        curve.push((parse(&rec[rho_col], "rho_model")?, parse(&rec[sigma_col], "sigma_sel")?));
    }
    if a.solver.is_none() && solvers_seen.len() > 1 {
        return Err(Error::InvalidInput("curve mixes several solvers; choose one with --solver".into()));
    }
    let grid = default_grid(a.n_features);
    let posterior = infer_data_sparsity(&curve, &grid)?;
    let hash = content_hash(serde_json::to_string(&(&curve, &grid))?.as_bytes());
    let n = a.n_features as f64;
    let rows: Vec<Vec<String>> = posterior
        .grid
        .iter()
        .zip(&posterior.probs)
        .zip(&posterior.weights)
        .map(|((&d, &p), &w)| vec![cell(d), cell(d * n), cell(p), cell(w), hash.clone()])
        .collect();
    let dir = g.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let csv_path = dir.join("posterior.csv");
    write_table(&csv_path, &["rho_candidate", "n_candidate", "prob", "weight", "config_hash"], &rows)?;
    write_json(&dir.join("posterior.json"), &posterior)?;
    say!("{}", csv_path.display());
    say!(
        "point_estimate={} weighted_estimate={} n_relevant={:.3}",
        cell(posterior.point_estimate),
        cell(posterior.weighted_estimate),
        posterior.weighted_estimate * n
    );
    Ok(())
}

fn ingest(g: &Global, kind: RealKind, path: Option<&Path>) -> Result<()> {
    let name = match kind {
        RealKind::Cc => "cc",
        RealKind::Bf => "bf",
    };
    let path = path.map(Path::to_path_buf).unwrap_or_else(|| resolve_data_dir(g.data_dir.as_deref()).join(name));
    let (data, report) = match kind {
        RealKind::Cc => load_cc(&path)?,
        RealKind::Bf => load_bf(&path)?,
    };
    let dir = g.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    std::fs::create_dir_all(&dir)?;
    let cache = dir.join(format!("{name}.bin"));
    write_dataset_cache(&data, &cache)?;
    let report_path = dir.join(format!("{name}_report.json"));
    write_report(&report, &report_path)?;
    say!("{name}: M = {}, N = {}", data.n_samples(), data.n_features());
    say!("{}", cache.display());
    say!("{}", report_path.display());
    print_warnings(&report.warnings);
    Ok(())
}
