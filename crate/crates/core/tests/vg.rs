use garrote_core::rng::seeded_rng;
use garrote_core::solvers::{fit_vg, fit_vg_with_trace, vg_free_energy, vg_gradients, VgConfig};
use garrote_core::Dataset;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn random_dataset(m: usize, n: usize, seed: u64) -> Dataset {
    let mut rng = seeded_rng(seed);
    let x = DMatrix::from_fn(m, n, |_, _| rng.sample(StandardNormal));
    let y = DVector::from_fn(m, |_, _| rng.sample(StandardNormal));
    Dataset::new(x, y, None).unwrap().center().0
}

/// Direct double-loop evaluation, independent of the library's vectorised path.
fn oracle_free_energy(data: &Dataset, m: &[f64], w: &[f64], gamma: f64) -> f64 {
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
    for i in 0..cols {
        f += m[i] * m[i].ln() + (1.0 - m[i]) * (1.0 - m[i]).ln() - gamma * m[i];
    }
    f
}

#[test]
fn half_masks_zero_weights() {
    let data = random_dataset(20, 6, 1);
    let m = vec![0.5; 6];
    let w = vec![0.0; 6];
    let f = vg_free_energy(&data, &m, &w, 0.0).unwrap();
    let expected = 10.0 * data.y.norm_squared().ln() - 6.0 * 2f64.ln();
    assert!((f - expected).abs() < 1e-12 * expected.abs().max(1.0));

    let (gm, _) = vg_gradients(&data, &m, &w, 0.0).unwrap();
    assert!(gm.iter().all(|&g| g == 0.0));
}

#[test]
fn linear_in_gamma() {
    let data = random_dataset(15, 5, 2);
    let m = [0.1, 0.3, 0.5, 0.7, 0.9];
    let w = [1.0, -2.0, 0.5, 0.0, 3.0];
    let base = vg_free_energy(&data, &m, &w, 0.0).unwrap();
    let sum_m: f64 = m.iter().sum();
    for gamma in [-3.0, 0.5, 7.0] {
        let f = vg_free_energy(&data, &m, &w, gamma).unwrap();
        assert!((f - (base - gamma * sum_m)).abs() < 1e-10);
    }
}

#[test]
fn boundary_masks_rejected() {
    let data = random_dataset(10, 3, 3);
    assert!(vg_free_energy(&data, &[0.0, 0.5, 0.5], &[1.0; 3], 0.0).is_err());
    assert!(vg_gradients(&data, &[0.5, 1.0, 0.5], &[1.0; 3], 0.0).is_err());
}

#[test]
fn gradients_match_central_differences() {
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for instance in 0..10 {
        let data = random_dataset(32, 16, 100 + instance);
        let mut rng = seeded_rng(200 + instance);
        for _ in 0..5 {
            let m: Vec<f64> = (0..16).map(|_| rng.random_range(0.05..0.95)).collect();
            let w: Vec<f64> = (0..16).map(|_| rng.sample(StandardNormal)).collect();
            let gamma = rng.random_range(-2.0..2.0);
            let (gm, gw) = vg_gradients(&data, &m, &w, gamma).unwrap();
            for i in 0..16 {
                let mut mp = m.clone();
                let mut mm = m.clone();
                mp[i] += h;
                mm[i] -= h;
                let fd = (oracle_free_energy(&data, &mp, &w, gamma) - oracle_free_energy(&data, &mm, &w, gamma)) / (2.0 * h);
                worst = worst.max((fd - gm[i]).abs() / gm[i].abs().max(1.0));

                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[i] += h;
                wm[i] -= h;
                let fd = (oracle_free_energy(&data, &m, &wp, gamma) - oracle_free_energy(&data, &m, &wm, gamma)) / (2.0 * h);
                worst = worst.max((fd - gw[i]).abs() / gw[i].abs().max(1.0));
            }
        }
    }
    assert!(worst < 1e-5, "worst relative gradient error {worst:e}");
}

#[test]
fn weight_gradient_near_full_mask_is_least_squares() {
    let data = random_dataset(200, 6, 4);
    let eps = 1e-7;
    let m = vec![1.0 - eps; 6];
    let w: Vec<f64> = (0..6).map(|i| 0.1 * i as f64).collect();
    let (_, gw) = vg_gradients(&data, &m, &w, 0.0).unwrap();
    let wv = DVector::from_column_slice(&w);
    let r = &data.y - &data.x * &wv;
    let ls = -(data.x.tr_mul(&r)) * (200.0 / r.norm_squared());
    for i in 0..6 {
        assert!((gw[i] - ls[i]).abs() < 1e-4 * ls.amax().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn value_matches_oracle(seed in 0u64..1000, n in 1usize..12, rows in 2usize..24, gamma in -5.0f64..5.0) {
        let data = random_dataset(rows, n, seed);
        let mut rng = seeded_rng(seed ^ 0xabcd);
        let m: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.99)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let f = vg_free_energy(&data, &m, &w, gamma).unwrap();
        let oracle = oracle_free_energy(&data, &m, &w, gamma);
        prop_assert!((f - oracle).abs() <= 1e-10 * oracle.abs().max(1.0));
    }
}

fn noiseless(x: DMatrix<f64>, w_star: &[f64]) -> Dataset {
    let y = &x * DVector::from_column_slice(w_star);
    Dataset::new(x, y, None).unwrap().center().0
}

#[test]
fn single_relevant_variable_is_recovered() {
    let mut rng = seeded_rng(11);
    let x = DMatrix::from_fn(64, 8, |_, _| rng.sample(StandardNormal));
    let mut w_star = vec![0.0; 8];
    w_star[0] = 3.0;
    let data = noiseless(x, &w_star);
    let fit = fit_vg(&data, &VgConfig { seed: 5, ..VgConfig::default() }).unwrap();
    assert!(fit.m[0] > 0.99, "m_1 = {}", fit.m[0]);
    assert!(((fit.m[0] * fit.w[0]) - 3.0).abs() < 0.15);
    // Irrelevant variables carry no data evidence, so γ = 0 leaves them at or below one half.
    for i in 1..8 {
        assert!(fit.m[i] < 0.5 + 1e-3, "m_{} = {}", i + 1, fit.m[i]);
    }
}

#[test]
fn zero_target_with_negative_gamma_prunes_everything() {
    // With y ≡ 0 the optimum sends w → 0 and D → 0, so the schedule can stop
    // before every logit has travelled down; judge the ensemble, not one draw.
    let mut all_pruned = 0;
    for seed in 0..20 {
        let mut rng = seeded_rng(12 + seed);
        let x = DMatrix::from_fn(40, 10, |_, _| rng.sample(StandardNormal));
        let data = Dataset::new(x, DVector::zeros(40), None).unwrap().center().0;
        let fit = fit_vg(&data, &VgConfig::with_gamma(-10.0)).unwrap();
        assert!(fit.rho_model < 0.05, "seed {seed}: rho {}", fit.rho_model);
        if fit.rho_model < 0.01 && fit.m.iter().all(|&m| m < 0.01) {
            all_pruned += 1;
        }
    }
    assert!(all_pruned >= 16, "{all_pruned}/20 instances fully pruned");
}

#[test]
fn single_feature_recovers_ols() {
    let mut rng = seeded_rng(13);
    let x = DMatrix::from_fn(30, 1, |_, _| rng.sample(StandardNormal));
    let data = noiseless(x, &[1.7]);
    let ols = data.x.column(0).dot(&data.y) / data.x.column(0).norm_squared();
    let fit = fit_vg(&data, &VgConfig::default()).unwrap();
    assert!((fit.m[0] * fit.w[0] - ols).abs() < 1e-3, "{} vs {ols}", fit.m[0] * fit.w[0]);
}

#[test]
fn fits_are_deterministic() {
    let data = random_dataset(24, 10, 14);
    let cfg = VgConfig { seed: 99, gamma: 1.0, ..VgConfig::default() };
    let a = fit_vg(&data, &cfg).unwrap();
    let b = fit_vg(&data, &cfg).unwrap();
    assert_eq!(a, b);
    let c = fit_vg(&data, &VgConfig { seed: 100, ..cfg }).unwrap();
    assert_ne!(a.w, c.w);
}

#[test]
fn loss_does_not_increase_over_plateau_windows() {
    let data = random_dataset(48, 16, 15);
    let cfg = VgConfig::with_gamma(-1.0);
    let (fit, trace) = fit_vg_with_trace(&data, &cfg).unwrap();
    assert!(fit.converged);
    let p = cfg.plateau_patience;
    for t in 0..trace.loss.len().saturating_sub(p) {
        if trace.lr[t] == trace.lr[t + p] {
            assert!(trace.loss[t + p] <= trace.loss[t] + 1e-9, "t = {t}: {} > {}", trace.loss[t + p], trace.loss[t]);
        }
    }
    assert!(*trace.lr.last().unwrap() < cfg.lr_init);
}

#[test]
fn invalid_config_rejected() {
    let data = random_dataset(10, 3, 16);
    assert!(fit_vg(&data, &VgConfig { lr_stop: 1.0, ..VgConfig::default() }).is_err());
    assert!(fit_vg(&data, &VgConfig { mask_init: 1.0, ..VgConfig::default() }).is_err());
}
