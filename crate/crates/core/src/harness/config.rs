use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::{DensityMode, SpikeSlabSpec};
use crate::error::{Error, Result};
use crate::solvers::{LassoConfig, VgConfig};
use crate::types::SolverId;

pub const DEFAULT_GRID_POINTS: usize = 25;
pub const DEFAULT_MEMBERS: usize = 200;
pub const CC_TRAIN_FRACTION: f64 = 0.15;
pub const BF_TRAIN_FRACTION: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    Synthetic(SyntheticSource),
    Cc(RealSource),
    Bf(RealSource),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSource {
    pub n_features: usize,
    pub n_samples: usize,
    pub rho_data: f64,
    #[serde(default = "default_snr")]
    pub snr: f64,
    #[serde(default)]
    pub density_mode: DensityMode,
    /// Held-out rows drawn per member; `None` means `n_samples`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_test: Option<usize>,
}

fn default_snr() -> f64 {
    3.0
}

impl SyntheticSource {
    pub fn square(n: usize, rho_data: f64) -> Self {
        Self { n_features: n, n_samples: n, rho_data, snr: default_snr(), density_mode: DensityMode::default(), n_test: None }
    }

    pub fn spec(&self, seed: u64) -> SpikeSlabSpec {
        SpikeSlabSpec {
            n_features: self.n_features,
            n_samples: self.n_samples,
            rho_data: self.rho_data,
            snr: self.snr,
            seed,
            density_mode: self.density_mode,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RealSource {
    /// Raw file, directory or dataset cache. Defaults to `<data dir>/cc` or `<data dir>/bf`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_fraction: Option<f64>,
}

impl DataSource {
    pub fn label(&self) -> &'static str {
        match self {
            DataSource::Synthetic(_) => "synthetic",
            DataSource::Cc(_) => "cc",
            DataSource::Bf(_) => "bf",
        }
    }

    pub fn is_synthetic(&self) -> bool {
        matches!(self, DataSource::Synthetic(_))
    }
}

/// Per-solver regularization values. A missing vector selects the default grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegGrid {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ridge: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lasso: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vg: Option<Vec<f64>>,
    /// Length of the default grids.
    #[serde(default = "default_points")]
    pub default_points: usize,
}

fn default_points() -> usize {
    DEFAULT_GRID_POINTS
}

impl Default for RegGrid {
    fn default() -> Self {
        Self { ridge: None, lasso: None, vg: None, default_points: DEFAULT_GRID_POINTS }
    }
}

impl RegGrid {
    pub fn explicit(&self, solver: SolverId) -> Option<&[f64]> {
        match solver {
            SolverId::Ridge => self.ridge.as_deref(),
            SolverId::Lasso => self.lasso.as_deref(),
            SolverId::Vg => self.vg.as_deref(),
        }
    }

    pub fn set(&mut self, solver: SolverId, values: Vec<f64>) {
        match solver {
            SolverId::Ridge => self.ridge = Some(values),
            SolverId::Lasso => self.lasso = Some(values),
            SolverId::Vg => self.vg = Some(values),
        }
    }

    /// Grid for `solver`. The LASSO default scales with `lambda_max`.
    pub fn resolve(&self, solver: SolverId, lambda_max: Option<f64>) -> Result<Vec<f64>> {
        if let Some(v) = self.explicit(solver) {
            return Ok(v.to_vec());
        }
        let k = self.default_points;
        Ok(match solver {
            SolverId::Ridge => logspace(-4.0, 6.0, k),
            SolverId::Vg => linspace(-20.0, 20.0, k),
            SolverId::Lasso => {
                let lmax = lambda_max.ok_or_else(|| Error::InvalidConfig("lasso default grid needs lambda_max".into()))?;
                logspace(0.0, -4.0, k).into_iter().map(|f| f * lmax).collect()
            }
        })
    }
}

/// `k` points from `10^a` to `10^b`, endpoints included.
pub fn logspace(a: f64, b: f64, k: usize) -> Vec<f64> {
    linspace(a, b, k).into_iter().map(|e| 10f64.powf(e)).collect()
}

pub fn linspace(a: f64, b: f64, k: usize) -> Vec<f64> {
    match k {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..k).map(|i| a + (b - a) * i as f64 / (k - 1) as f64).collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub solvers: Vec<SolverId>,
    pub data: DataSource,
    #[serde(default)]
    pub reg_grid: RegGrid,
    #[serde(default = "default_members")]
    pub n_members: usize,
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_workers")]
    pub worker_count: usize,
    /// Template for every VG fit; `gamma` and `seed` are overwritten per task.
    #[serde(default)]
    pub vg: VgConfig,
    /// Independent VG initialisations per fit, keeping the lowest free energy.
    #[serde(default = "default_restarts")]
    pub vg_restarts: usize,
    /// Template for LASSO fits; `lambda` is overwritten per grid point.
    #[serde(default)]
    pub lasso: LassoConfig,
    /// Write every member fit to `fits.jsonl`.
    #[serde(default)]
    pub persist_fits: bool,
}

fn default_members() -> usize {
    DEFAULT_MEMBERS
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_workers() -> usize {
    1
}

fn default_restarts() -> usize {
    1
}

impl ExperimentConfig {
    pub fn new(solvers: Vec<SolverId>, data: DataSource) -> Self {
        Self {
            solvers,
            data,
            reg_grid: RegGrid::default(),
            n_members: DEFAULT_MEMBERS,
            seed_base: 0,
            output_dir: default_output_dir(),
            worker_count: 1,
            vg: VgConfig::default(),
            vg_restarts: 1,
            lasso: LassoConfig::default(),
            persist_fits: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.solvers.is_empty() {
            return bad("at least one solver is required".into());
        }
        let mut seen = self.solvers.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.solvers.len() {
            return bad("solver list contains duplicates".into());
        }
        if self.n_members == 0 {
            return bad("n_members must be positive".into());
        }
        if self.worker_count == 0 {
            return bad("worker_count must be positive".into());
        }
        if self.reg_grid.default_points == 0 {
            return bad("reg_grid.default_points must be positive".into());
        }
        for &solver in &self.solvers {
            let Some(grid) = self.reg_grid.explicit(solver) else { continue };
            if grid.is_empty() {
                return bad(format!("reg_grid for {solver} is empty"));
            }
            if grid.iter().any(|v| !v.is_finite()) {
                return bad(format!("reg_grid for {solver} has non-finite values"));
            }
            if solver != SolverId::Vg && grid.iter().any(|&v| v < 0.0) {
                return bad(format!("reg_grid for {solver} has negative lambda"));
            }
            let mut sorted = grid.to_vec();
            sorted.sort_by(f64::total_cmp);
            if sorted.windows(2).any(|p| p[0] == p[1]) {
                return bad(format!("reg_grid for {solver} has repeated values"));
            }
        }
        if self.vg_restarts == 0 {
            return bad("vg_restarts must be positive".into());
        }
        self.vg.validate()?;
        LassoConfig { lambda: 0.0, ..self.lasso.clone() }.validate()?;
        match &self.data {
            DataSource::Synthetic(s) => {
                s.spec(self.seed_base).validate()?;
                if s.n_test == Some(0) {
                    return bad("n_test must be positive".into());
                }
            }
            DataSource::Cc(r) | DataSource::Bf(r) => {
                if let Some(f) = r.train_fraction {
                    if !(f > 0.0 && f < 1.0) {
                        return bad(format!("train_fraction must lie in (0, 1), got {f}"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn train_fraction(&self) -> Option<f64> {
        match &self.data {
            DataSource::Synthetic(_) => None,
            DataSource::Cc(r) => Some(r.train_fraction.unwrap_or(CC_TRAIN_FRACTION)),
            DataSource::Bf(r) => Some(r.train_fraction.unwrap_or(BF_TRAIN_FRACTION)),
        }
    }

    /// The config with everything that cannot change results cleared:
    /// worker count, output location, fit persistence and data file paths.
    pub fn canonical(&self) -> Self {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.worker_count = 1;
        c.persist_fits = false;
        match &mut c.data {
            DataSource::Cc(r) | DataSource::Bf(r) => r.path = None,
            DataSource::Synthetic(_) => {}
        }
        c
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(&self.canonical()).expect("config serializes")
    }

    /// [`content_hash`] of [`Self::canonical_json`].
    pub fn config_hash(&self) -> String {
        content_hash(self.canonical_json().as_bytes())
    }
}

/// First 16 hex digits of the SHA-256 of `bytes`.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..8])
}
