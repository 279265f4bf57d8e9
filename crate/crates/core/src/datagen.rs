//! Synthetic spike-and-slab regression benchmarks.
//!
//! Teacher weights are zero with probability `1 - rho_data` and otherwise
//! uniform in `(1, w_max) ∪ (-w_max, -1)` with
//! `w_max = sqrt(12 / rho_data - 3/4) - 1/2`. Inputs are i.i.d. standard
//! normal, and the Gaussian noise variance is `sum(w*²) / snr`.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng as _;
use rand_distr::{StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::types::{Dataset, GroundTruth};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityMode {
    /// Exactly `round(N * rho_data)` nonzero weights at uniformly chosen positions.
    #[default]
    ExactCount,
    /// Each weight independently nonzero with probability `rho_data`.
    Binomial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpikeSlabSpec {
    pub n_features: usize,
    pub n_samples: usize,
    pub rho_data: f64,
    #[serde(default = "default_snr")]
    pub snr: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub density_mode: DensityMode,
}

fn default_snr() -> f64 {
    3.0
}

impl SpikeSlabSpec {
    pub fn new(n_features: usize, n_samples: usize, rho_data: f64) -> Self {
        Self { n_features, n_samples, rho_data, snr: default_snr(), seed: 0, density_mode: DensityMode::ExactCount }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho_data > 0.0 && self.rho_data <= 1.0) {
            return Err(Error::InvalidSpec(format!("rho_data must lie in (0, 1], got {}", self.rho_data)));
        }
        if self.n_features == 0 || self.n_samples == 0 {
            return Err(Error::InvalidSpec("n_features and n_samples must be positive".into()));
        }
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return Err(Error::InvalidSpec(format!("snr must be positive, got {}", self.snr)));
        }
        Ok(())
    }

    pub fn slab_upper_bound(&self) -> f64 {
        slab_upper_bound(self.rho_data)
    }

    pub fn nonzero_count(&self) -> usize {
        (self.n_features as f64 * self.rho_data).round() as usize
    }
}

/// Upper edge of the slab magnitude, `sqrt(12/rho - 3/4) - 1/2`.
pub fn slab_upper_bound(rho_data: f64) -> f64 {
    (12.0 / rho_data - 0.75).sqrt() - 0.5
}

/// Second moment of a slab magnitude uniform on `(1, w_max)`: `(w_max² + w_max + 1) / 3`.
pub fn slab_second_moment(rho_data: f64) -> f64 {
    let wb = slab_upper_bound(rho_data);
    (wb * wb + wb + 1.0) / 3.0
}

/// Draws teacher weights and records the calibrated noise level.
pub fn sample_teacher_weights(spec: &SpikeSlabSpec, rng: &mut Rng) -> Result<GroundTruth> {
    spec.validate()?;
    let n = spec.n_features;
    let w_max = spec.slab_upper_bound();
    let magnitude = Uniform::new(1.0, w_max).map_err(|e| Error::InvalidSpec(e.to_string()))?;
    let draw_slab = |rng: &mut Rng| -> f64 {
        let mag = loop {
            let v: f64 = rng.sample(magnitude);
            if v > 1.0 && v < w_max {
                break v;
            }
        };
        if rng.random::<bool>() {
            mag
        } else {
            -mag
        }
    };

    let mut w = vec![0.0; n];
    match spec.density_mode {
        DensityMode::ExactCount => {
            let k = spec.nonzero_count().min(n);
            let mut chosen = index::sample(rng, n, k).into_vec();
            chosen.sort_unstable();
            for i in chosen {
                w[i] = draw_slab(rng);
            }
        }
        DensityMode::Binomial => {
            for wi in w.iter_mut() {
                if rng.random::<f64>() < spec.rho_data {
                    *wi = draw_slab(rng);
                }
            }
        }
    }
    let mut truth = GroundTruth::from_weights(w, spec.rho_data);
    truth.noise_std = noise_std_for(&truth.w_star, spec.snr);
    Ok(truth)
}

/// Noise standard deviation giving population SNR `snr` for standard-normal inputs.
pub fn noise_std_for(w_star: &[f64], snr: f64) -> f64 {
    (w_star.iter().map(|w| w * w).sum::<f64>() / snr).sqrt()
}

/// Draws a fresh design and noisy targets from the teacher, then centers them.
pub fn generate_dataset(truth: &GroundTruth, n_samples: usize, rng: &mut Rng) -> Result<Dataset> {
    let (data, _) = generate_dataset_with_noise(truth, n_samples, rng)?;
    Ok(data)
}

/// Like [`generate_dataset`] but also returns the raw (uncentered) noise draws.
pub fn generate_dataset_with_noise(
    truth: &GroundTruth,
    n_samples: usize,
    rng: &mut Rng,
) -> Result<(Dataset, DVector<f64>)> {
    let (data, noise) = draw(truth, n_samples, rng)?;
    Ok((data.center().0, noise))
}

/// Same draws as [`generate_dataset`], left uncentered so held-out sets can
/// be shifted by training-set means instead of their own.
pub fn generate_uncentered(truth: &GroundTruth, n_samples: usize, rng: &mut Rng) -> Result<Dataset> {
    Ok(draw(truth, n_samples, rng)?.0)
}

fn draw(truth: &GroundTruth, n_samples: usize, rng: &mut Rng) -> Result<(Dataset, DVector<f64>)> {
    if n_samples == 0 {
        return Err(Error::InvalidInput("n_samples must be positive".into()));
    }
    let n = truth.n_features();
    let mut x = DMatrix::zeros(n_samples, n);
    for mu in 0..n_samples {
        for i in 0..n {
            x[(mu, i)] = rng.sample(StandardNormal);
        }
    }
    let noise = DVector::from_fn(n_samples, |_, _| truth.noise_std * rng.sample::<f64, _>(StandardNormal));
    let y = &x * DVector::from_column_slice(&truth.w_star) + &noise;
    Ok((Dataset::new(x, y, None)?, noise))
}
