//! Acceptance criteria 1–10, one printed verdict line per criterion.
//!
//! The ensemble criteria (5, 6, 7, 9, 10) run at a reduced scale by default so
//! that `cargo test` finishes on a laptop core. Set `GARROTE_ACCEPTANCE=full`
//! for 200-member ensembles, 25-point grids, the default VG schedule and the
//! literal `reproduce --fig fig3 --scale 0.01 --seed 7` determinism run.
//! Every line reports the scale it ran at.
//!
//! Criteria 7 and 9 are soft: their verdict is printed but never fails the
//! test. Criterion 9 reports BLOCKED when the raw real-data files are absent.

use std::io::Write as _;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use garrote_core::harness::config::{linspace, logspace};
use garrote_core::harness::{
    reproduce_figure, run_sweep, run_sweep_on, target_rho_on, DataSource, Ensemble, ExperimentConfig, FigureId,
    ReproduceOptions, SweepOutput, SyntheticSource, TargetOptions,
};
use garrote_core::ingest::fixtures::{write_bf_raw, write_cc_raw};
use garrote_core::ingest::{
    load_bf, load_cc, plan_splits, resolve_data_dir, SplitSpec, CC_EXPECTED_FEATURES, CC_FILE, CC_ID_COLUMNS,
};
use garrote_core::metrics::{meanfield_selection_error, meanfield_selection_uncertainty};
use garrote_core::rng::seeded_rng;
use garrote_core::solvers::{fit_lasso, fit_ridge, lambda_max, vg_gradients, LassoConfig, VgConfig};
use garrote_core::sparsity::{default_grid, infer_data_sparsity};
use garrote_core::{Dataset, SolverId};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

const N: usize = 256;
const REPLICATIONS: u64 = 5;

#[derive(Clone, Debug)]
struct Scale {
    full: bool,
    /// Members for the fig2 orderings.
    fig2_members: usize,
    /// Members for the fig3 selection structure.
    fig3_members: usize,
    recovery_members: usize,
    real_members: usize,
    /// Ridge/LASSO grid length; VG uses `vg_points`.
    points: usize,
    vg_points: usize,
    fig3_vg_points: usize,
    vg: VgConfig,
}

impl Scale {
    fn from_env() -> Self {
        let full = std::env::var("GARROTE_ACCEPTANCE").is_ok_and(|v| v == "full");
        if full {
            return Self {
                full,
                fig2_members: 200,
                fig3_members: 200,
                recovery_members: 200,
                real_members: 200,
                points: 25,
                vg_points: 25,
                fig3_vg_points: 25,
                vg: VgConfig::default(),
            };
        }
        let mut vg = VgConfig::default();
        vg.max_iters = 20_000;
        vg.plateau_threshold = 1e-6;
        Self {
            full,
            fig2_members: 2,
            fig3_members: 4,
            recovery_members: 8,
            real_members: 20,
            points: 25,
            vg_points: 17,
            fig3_vg_points: 9,
            vg,
        }
    }

    fn label(&self, members: usize) -> String {
        let kind = if self.full { "full" } else { "reduced" };
        format!(
            "scale={kind} members={members} grid={}/{} vg_max_iters={} vg_plateau={:e}",
            self.points, self.vg_points, self.vg.max_iters, self.vg.plateau_threshold
        )
    }

    fn config(&self, solvers: Vec<SolverId>, rho_data: f64, members: usize, seed: u64) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(solvers, DataSource::Synthetic(SyntheticSource::square(N, rho_data)));
        cfg.n_members = members;
        cfg.seed_base = seed;
        cfg.reg_grid.default_points = self.points;
        cfg.reg_grid.vg = Some(linspace(-20.0, 20.0, self.vg_points));
        cfg.vg = self.vg.clone();
        cfg
    }
}

/// Writes past libtest's output capture so verdicts show up in plain `cargo test` logs.
fn verdict(criterion: u32, pass: Option<bool>, detail: &str, started: Instant) {
    let status = match pass {
        Some(true) => "PASS",
        Some(false) => "FAIL",
        None => "BLOCKED",
    };
    let secs = started.elapsed().as_secs_f64();
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "acceptance criterion {criterion:>2}: {status} | {detail} | {secs:.1}s");
}

fn random_dataset(m: usize, n: usize, seed: u64) -> Dataset {
    let mut rng = seeded_rng(seed);
    let x = DMatrix::from_fn(m, n, |_, _| rng.sample(StandardNormal));
    let y = DVector::from_fn(m, |_, _| rng.sample(StandardNormal));
    Dataset::new(x, y, None).unwrap().center().0
}

/// Free energy by explicit loops over samples and features.
fn free_energy_loops(data: &Dataset, m: &[f64], w: &[f64], gamma: f64) -> f64 {
    let (rows, cols) = data.x.shape();
    let mut d = 0.0;
    for mu in 0..rows {
        let mut pred = 0.0;
        for i in 0..cols {
            pred += m[i] * w[i] * data.x[(mu, i)];
        }
        d += (data.y[mu] - pred).powi(2);
        for i in 0..cols {
            d += m[i] * (1.0 - m[i]) * (w[i] * data.x[(mu, i)]).powi(2);
        }
    }
    let mut f = 0.5 * rows as f64 * d.ln();
    for &mi in m {
        f += mi * mi.ln() + (1.0 - mi) * (1.0 - mi).ln() - gamma * mi;
    }
    f
}

#[test]
fn criterion_01_vg_gradients() {
    let started = Instant::now();
    let (h, n, m) = (1e-6, 16, 32);
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for instance in 0..10 {
        let data = random_dataset(m, n, 1_000 + instance);
        let mut rng = seeded_rng(2_000 + instance);
        for _ in 0..5 {
            let masks: Vec<f64> = (0..n).map(|_| rng.random_range(0.02..0.98)).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let gamma = rng.random_range(-3.0..3.0);
            let (gm, gw) = vg_gradients(&data, &masks, &w, gamma).unwrap();
            for i in 0..n {
                let mut up = masks.clone();
                let mut down = masks.clone();
                up[i] += h;
                down[i] -= h;
                let fd = (free_energy_loops(&data, &up, &w, gamma) - free_energy_loops(&data, &down, &w, gamma)) / (2.0 * h);
                worst = worst.max((fd - gm[i]).abs() / gm[i].abs().max(1.0));

                let mut up = w.clone();
                let mut down = w.clone();
                up[i] += h;
                down[i] -= h;
                let fd = (free_energy_loops(&data, &masks, &up, gamma) - free_energy_loops(&data, &masks, &down, gamma))
                    / (2.0 * h);
                worst = worst.max((fd - gw[i]).abs() / gw[i].abs().max(1.0));
            }
            points += 1;
        }
    }
    let pass = worst < 1e-5;
    verdict(1, Some(pass), &format!("{points} points, worst relative error {worst:.2e} (< 1e-5)"), started);
    assert!(pass);
}

#[test]
fn criterion_02_convex_solver_oracles() {
    let started = Instant::now();
    let mut ridge_worst: f64 = 0.0;
    let mut kkt_worst: f64 = 0.0;
    let mut zero_ok = true;
    let cfg_tol = LassoConfig::default().tol;
    for k in 0..100u64 {
        let (m, n) = if k % 3 == 0 { (20, 40) } else { (50, 30) };
        let data = random_dataset(m, n, 3_000 + k);
        let gram = data.x.tr_mul(&data.x);
        let xty = data.x.tr_mul(&data.y);

        let lambda = 10f64.powf(-2.0 + 4.0 * (k as f64) / 99.0);
        let fit = fit_ridge(&data, lambda).unwrap();
        let w = DVector::from_column_slice(&fit.w);
        let resid = (&gram * &w + lambda * &w - &xty).amax();
        ridge_worst = ridge_worst.max(resid);

        let lmax = lambda_max(&data);
        let lam = lmax * (0.02 + 0.9 * ((k * 37) % 100) as f64 / 100.0);
        let fit = fit_lasso(&data, &LassoConfig::new(lam), None).unwrap();
        let w = DVector::from_column_slice(&fit.w);
        let corr = &xty - &gram * &w;
        for j in 0..n {
            let v = if w[j] != 0.0 { (corr[j] - lam * w[j].signum()).abs() } else { (corr[j].abs() - lam).max(0.0) };
            kkt_worst = kkt_worst.max(v);
        }

        for scale in [1.0, 1.5] {
            let fit = fit_lasso(&data, &LassoConfig::new(lmax * scale), None).unwrap();
            zero_ok &= fit.w.iter().all(|&v| v == 0.0);
        }
    }
    let pass = ridge_worst < 1e-8 && kkt_worst < 10.0 * cfg_tol && zero_ok;
    verdict(
        2,
        Some(pass),
        &format!(
            "100 instances: ridge normal-eq residual {ridge_worst:.1e} (< 1e-8), lasso KKT {kkt_worst:.1e} (< {:.0e}), zero at λ ≥ λ_max: {zero_ok}",
            10.0 * cfg_tol
        ),
        started,
    );
    assert!(pass);
}

#[test]
fn criterion_03_meanfield_identities() {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let rho_data = (k as f64 + 0.5) / 1000.0;
        worst = worst.max(meanfield_selection_uncertainty(rho_data, rho_data).abs());
        worst = worst.max(meanfield_selection_uncertainty(1.0, rho_data).abs());
        worst = worst.max((meanfield_selection_uncertainty(0.5 * rho_data, rho_data) - 0.25 * rho_data).abs());
        let rho_model = k as f64 / 999.0;
        for rd in [0.1, 0.5, rho_data] {
            worst = worst.max((meanfield_selection_error(rho_model, rd) - (rho_model - rd).abs()).abs());
        }
    }
    let pass = worst < 1e-12;
    verdict(3, Some(pass), &format!("1000-point grid, worst deviation {worst:.1e} (< 1e-12)"), started);
    assert!(pass);
}

#[test]
fn criterion_04_sparsity_self_consistency() {
    let started = Instant::now();
    let grid = default_grid(N);
    let rho_model: Vec<f64> = (0..=N).map(|j| j as f64 / N as f64).collect();
    let mut weakest = 1.0f64;
    for (k, &rho_data) in grid.iter().enumerate() {
        let curve: Vec<(f64, f64)> =
            rho_model.iter().map(|&r| (r, meanfield_selection_uncertainty(r, rho_data))).collect();
        let post = infer_data_sparsity(&curve, &grid).unwrap();
        weakest = weakest.min(post.probs[k]);
    }
    let pass = weakest >= 0.99;
    verdict(4, Some(pass), &format!("{} candidates, least mass on truth {weakest:.4} (≥ 0.99)", grid.len()), started);
    assert!(pass);
}

fn min_e_gen(out: &SweepOutput, solver: SolverId) -> f64 {
    out.curve(solver).and_then(|c| c.argmin_by(|r| Some(r.e_gen))).map_or(f64::INFINITY, |r| r.e_gen)
}

#[test]
fn criterion_05_fig2_orderings() {
    let started = Instant::now();
    let scale = Scale::from_env();
    let all = vec![SolverId::Ridge, SolverId::Lasso, SolverId::Vg];
    let (mut dense_ok, mut sparse_ok) = (0, 0);
    let mut notes = Vec::new();
    for rep in 0..REPLICATIONS {
        let seed = 5_000 + 100 * rep;
        let dense = run_sweep(&scale.config(all.clone(), 192.0 / 256.0, scale.fig2_members, seed)).unwrap();
        let (r, l, v) =
            (min_e_gen(&dense, SolverId::Ridge), min_e_gen(&dense, SolverId::Lasso), min_e_gen(&dense, SolverId::Vg));
        dense_ok += usize::from(r <= l && r <= v);
        notes.push(format!("a{rep}:{r:.3}/{l:.3}/{v:.3}"));

        let sparse = run_sweep(&scale.config(all.clone(), 5.0 / 256.0, scale.fig2_members, seed + 1)).unwrap();
        let (r, l, v) =
            (min_e_gen(&sparse, SolverId::Ridge), min_e_gen(&sparse, SolverId::Lasso), min_e_gen(&sparse, SolverId::Vg));
        sparse_ok += usize::from(v <= l && l <= r);
        notes.push(format!("c{rep}:{r:.3}/{l:.3}/{v:.3}"));
    }
    let pass = dense_ok >= 4 && sparse_ok >= 4;
    verdict(
        5,
        Some(pass),
        &format!(
            "(a) ridge best {dense_ok}/5, (c) vg<=lasso<=ridge {sparse_ok}/5; min E_gen ridge/lasso/vg {} | {}",
            notes.join(" "),
            scale.label(scale.fig2_members)
        ),
        started,
    );
    assert!(pass);
}

struct Fig3Rep {
    esel_ok: bool,
    sigma_ok: bool,
    note: String,
}

fn fig3_replication(scale: &Scale, relevant: usize, seed: u64) -> Fig3Rep {
    let rho_data = relevant as f64 / N as f64;
    let all = vec![SolverId::Ridge, SolverId::Lasso, SolverId::Vg];
    let mut cfg = scale.config(all.clone(), rho_data, scale.fig3_members, seed);
    // The convex solvers are cheap, so their E_sel minima are located on a finer grid.
    cfg.reg_grid.ridge = Some(logspace(-4.0, 6.0, 4 * scale.points));
    cfg.reg_grid.default_points = 4 * scale.points;
    cfg.reg_grid.vg = Some(linspace(-20.0, 20.0, scale.fig3_vg_points));
    let ensemble = Ensemble::build(&cfg).unwrap();
    let out = run_sweep_on(&cfg, &ensemble).unwrap();

    let mut esel_ok = true;
    let mut note = format!("k={relevant}:");
    for solver in &all {
        let best = out.curve(*solver).and_then(|c| c.argmin_by(|r| r.e_sel)).unwrap();
        let off = (best.rho_model - rho_data).abs() * N as f64;
        esel_ok &= off <= 2.0 + 1e-9;
        note.push_str(&format!(" {solver} Δ={off:.2}"));
    }

    let sigma = |target: f64| {
        let opts = TargetOptions { bracket: Some((-200.0, 20.0)), ..TargetOptions::new(0.5 / N as f64) };
        target_rho_on(&cfg, &ensemble, SolverId::Vg, target, &opts).ok().and_then(|t| t.row.sigma_sel)
    };
    let matched = sigma(rho_data);
    let above = sigma(rho_data + 3.0 / N as f64);
    // At 3/256 the lower neighbour is the empty model, whose uncertainty is zero by construction.
    let below = if relevant > 3 { sigma(rho_data - 3.0 / N as f64) } else { None };
    let sigma_ok = match (matched, above) {
        (Some(m), Some(a)) => m < a && (relevant <= 3 || below.is_some_and(|b| m < b)),
        _ => false,
    };
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    note.push_str(&format!(" σ {}/{}/{}", fmt(below), fmt(matched), fmt(above)));
    Fig3Rep { esel_ok, sigma_ok, note }
}

#[test]
fn criterion_06_fig3_selection_structure() {
    let started = Instant::now();
    let scale = Scale::from_env();
    let mut lines = Vec::new();
    let mut pass = true;
    for relevant in [3usize, 8] {
        let mut both = 0;
        let (mut esel, mut sig) = (0, 0);
        for rep in 0..REPLICATIONS {
            let r = fig3_replication(&scale, relevant, 6_000 + 100 * rep + relevant as u64);
            esel += usize::from(r.esel_ok);
            sig += usize::from(r.sigma_ok);
            both += usize::from(r.esel_ok && r.sigma_ok);
            lines.push(r.note);
        }
        pass &= both >= 4;
        lines.push(format!("[k={relevant}: E_sel {esel}/5, σ_sel {sig}/5, both {both}/5]"));
    }
    let label = format!("{} fig3_vg_grid={}", scale.label(scale.fig3_members), scale.fig3_vg_points);
    verdict(6, Some(pass), &format!("{} | {label}", lines.join(" ")), started);
    assert!(pass);
}

#[test]
fn criterion_07_vg_soft_sharing() {
    let started = Instant::now();
    let scale = Scale::from_env();
    let target = 2.0 / N as f64;
    let mut passes = 0;
    let mut notes = Vec::new();
    for rep in 0..REPLICATIONS {
        let cfg = scale.config(vec![SolverId::Vg, SolverId::Lasso], 3.0 / N as f64, scale.recovery_members, 7_000 + 100 * rep);
        let ensemble = Ensemble::build(&cfg).unwrap();
        let truth = ensemble.truth().unwrap();
        let relevant: Vec<usize> = (0..N).filter(|&i| truth.s_star[i] == 1).collect();

        let vg_opts = TargetOptions { bracket: Some((-200.0, 20.0)), ..TargetOptions::new(0.25 / N as f64) };
        let vg = target_rho_on(&cfg, &ensemble, SolverId::Vg, target, &vg_opts).unwrap();
        let lasso = target_rho_on(&cfg, &ensemble, SolverId::Lasso, target, &TargetOptions::new(0.25 / N as f64)).unwrap();
        let vg_masks: Vec<f64> = relevant.iter().map(|&i| vg.row.mean_mask[i]).collect();
        let lasso_masks: Vec<f64> = relevant.iter().map(|&i| lasso.row.mean_mask[i]).collect();
        let ok = vg_masks.iter().all(|&m| m > 0.3) && lasso_masks.iter().any(|&m| m < 0.2);
        passes += usize::from(ok);
        let show = |v: &[f64]| v.iter().map(|m| format!("{m:.2}")).collect::<Vec<_>>().join(",");
        notes.push(format!("r{rep}: vg[{}] lasso[{}]", show(&vg_masks), show(&lasso_masks)));
    }
    verdict(
        7,
        Some(passes >= 3),
        &format!("soft; {passes}/5 replications (need 3): {} | {}", notes.join(" "), scale.label(scale.recovery_members)),
        started,
    );
}

#[test]
fn criterion_08_real_data_shapes() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();

    let cc_path = dir.path().join(CC_FILE);
    write_cc_raw(&cc_path, 2215, 8).unwrap();
    let (cc, cc_report) = load_cc(&cc_path).unwrap();
    let count_warning = |w: &Vec<String>| w.iter().any(|w| w.contains("retained"));
    let cc_ok = cc.n_samples() == 2215
        && cc_report.n_kept_features == cc.n_features()
        && cc.n_features() == CC_EXPECTED_FEATURES
        && !count_warning(&cc_report.warnings);

    // One attribute blanked out drops the retained count to 100, which must be reported.
    let text = std::fs::read_to_string(&cc_path).unwrap();
    let patched: String = text
        .lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f[CC_ID_COLUMNS.len() + 5] = "?";
            f.join(",") + "\n"
        })
        .collect();
    let short_path = dir.path().join("short.txt");
    std::fs::write(&short_path, patched).unwrap();
    let (short, short_report) = load_cc(&short_path).unwrap();
    let warn_ok = short.n_features() == CC_EXPECTED_FEATURES - 1 && count_warning(&short_report.warnings);

    let bf_dir = dir.path().join("bf");
    write_bf_raw(&bf_dir, 52_397, &[1_906, 1_906, 1_906, 1_906], 9).unwrap();
    let (bf, _) = load_bf(&bf_dir).unwrap();
    let bf_ok = bf.n_features() == 120 && bf.n_samples() == 60_021;

    let cc_split = SplitSpec { train_fraction: 0.15, n_splits: 1, seed: 1 };
    let bf_split = SplitSpec { train_fraction: 0.01, n_splits: 1, seed: 1 };
    let cc_plan = plan_splits(&cc, &cc_split).unwrap();
    let bf_plan = plan_splits(&bf, &bf_split).unwrap();
    let sizes = |p: &garrote_core::ingest::SplitPlan| (p.row_sets[0].0.len(), p.row_sets[0].1.len());
    let (cc_sizes, bf_sizes) = (sizes(&cc_plan), sizes(&bf_plan));
    let split_ok = cc_sizes == (332, 1883) && bf_sizes == (600, 59_421);

    let pass = cc_ok && warn_ok && bf_ok && split_ok;
    verdict(
        8,
        Some(pass),
        &format!(
            "fixtures at full size: CC {}x{} (warning on 100 features: {warn_ok}), BF {}x{}, splits CC {cc_sizes:?} BF {bf_sizes:?}",
            cc.n_samples(),
            cc.n_features(),
            bf.n_samples(),
            bf.n_features()
        ),
        started,
    );
    assert!(cc.n_samples() == 2215 && bf.n_samples() == 60_021 && bf.n_features() == 120);
    assert!(pass);
}

#[test]
fn criterion_09_real_data_estimates() {
    let started = Instant::now();
    let scale = Scale::from_env();
    let data_dir = resolve_data_dir(None);
    let present = |name: &str| {
        let p = data_dir.join(name);
        p.is_dir() && std::fs::read_dir(&p).is_ok_and(|mut d| d.next().is_some())
    };
    if !(present("cc") && present("bf")) {
        verdict(
            9,
            None,
            &format!("soft; raw CC/BF files not found under {} (run scripts/fetch_data.sh)", data_dir.display()),
            started,
        );
        return;
    }
    let out_dir = tempfile::tempdir().unwrap();
    let mut opts = ReproduceOptions::new(0.01, out_dir.path());
    opts.members = Some(scale.real_members);
    opts.grid_points = Some(scale.points);
    opts.vg = scale.vg.clone();
    opts.data_dir = Some(data_dir);
    let fig = reproduce_figure(FigureId::Fig4, &opts).unwrap();
    let estimate = |dataset: &str| {
        fig.posteriors
            .iter()
            .find(|p| p.dataset == dataset && p.solver == SolverId::Vg)
            .and_then(|p| p.n_relevant())
    };
    let (cc, bf) = (estimate("cc"), estimate("bf"));
    let pass = cc.is_some_and(|v| (1.5..=4.0).contains(&v)) && bf.is_some_and(|v| (0.0..=2.0).contains(&v));
    verdict(
        9,
        Some(pass),
        &format!("soft; VG N·ρ̂ CC {cc:?} (in [1.5, 4]) BF {bf:?} (1 ± 1) | {}", scale.label(scale.real_members)),
        started,
    );
}

fn reproduce_fig3(out: &Path, workers: usize, scale: &Scale) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_garrote"));
    cmd.args(["reproduce", "--fig", "fig3", "--scale", "0.01", "--seed", "7"])
        .arg("--workers")
        .arg(workers.to_string())
        .arg("--out")
        .arg(out);
    if !scale.full {
        cmd.args(["--members", "3", "--grid-points", "5", "--vg-max-iters", "2000"]);
    }
    let status = cmd.output().unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
}

#[test]
fn criterion_10_determinism() {
    let started = Instant::now();
    let scale = Scale::from_env();
    let dir = tempfile::tempdir().unwrap();
    let runs = [(dir.path().join("a"), 1), (dir.path().join("b"), 1), (dir.path().join("c"), 3)];
    for (path, workers) in &runs {
        reproduce_fig3(path, *workers, &scale);
    }
    let mut identical = true;
    let mut compared = 0;
    for name in ["fig3.csv", "fig3_masks.csv"] {
        let first = std::fs::read(runs[0].0.join(name)).unwrap();
        for (path, _) in &runs[1..] {
            identical &= std::fs::read(path.join(name)).unwrap() == first;
            compared += 1;
        }
    }
    let label = if scale.full {
        "scale=full (reproduce --fig fig3 --scale 0.01 --seed 7)".to_string()
    } else {
        "scale=reduced (--scale 0.01 --seed 7 with --members 3 --grid-points 5 --vg-max-iters 2000)".to_string()
    };
    verdict(
        10,
        Some(identical),
        &format!("{compared} CSV comparisons across workers 1/1/3, byte-identical: {identical} | {label}"),
        started,
    );
    assert!(identical);
}
