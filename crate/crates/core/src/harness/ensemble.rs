//! Ensemble members built lazily from seeds, so memory does not grow with
//! the member count.

use nalgebra::DVector;

use super::config::{DataSource, ExperimentConfig};
use crate::datagen::{generate_uncentered, sample_teacher_weights};
use crate::error::{Error, Result};
use crate::ingest::{self, PreprocessReport, SplitPlan, SplitSpec};
use crate::rng::{member_seed, stream_rng, Stream};
use crate::types::{CenteringOffsets, Dataset, FitResult, GroundTruth};

enum Source {
    Synthetic { truth: GroundTruth, n_samples: usize, n_test: usize },
    Real { plan: SplitPlan },
}

pub struct Ensemble {
    pub n_members: usize,
    pub n_features: usize,
    pub seed_base: u64,
    pub feature_names: Vec<String>,
    pub report: Option<PreprocessReport>,
    pub warnings: Vec<String>,
    source: Source,
}

/// Held-out data of one member. Real-data test sets are row views into the
/// shared source rather than copies.
enum HeldOut<'a> {
    Owned(Dataset),
    Rows { source: &'a Dataset, rows: &'a [usize], offsets: CenteringOffsets },
}

pub struct Member<'a> {
    pub index: usize,
    /// Seed for per-member randomness such as the VG initialisation.
    pub seed: u64,
    pub train: Dataset,
    held_out: HeldOut<'a>,
}

impl Ensemble {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        match &cfg.data {
            DataSource::Synthetic(s) => {
                let truth = sample_teacher_weights(&s.spec(cfg.seed_base), &mut stream_rng(cfg.seed_base, Stream::Teacher))?;
                let n = truth.n_features();
                Ok(Self {
                    n_members: cfg.n_members,
                    n_features: n,
                    seed_base: cfg.seed_base,
                    feature_names: (1..=n).map(|i| format!("x{i}")).collect(),
                    report: None,
                    warnings: Vec::new(),
                    source: Source::Synthetic { truth, n_samples: s.n_samples, n_test: s.n_test.unwrap_or(s.n_samples) },
                })
            }
            DataSource::Cc(r) | DataSource::Bf(r) => {
                let label = cfg.data.label();
                let path = r.path.clone().unwrap_or_else(|| ingest::resolve_data_dir(None).join(label));
                let (data, report) = if label == "cc" { ingest::load_cc(&path)? } else { ingest::load_bf(&path)? };
                let spec = SplitSpec {
                    train_fraction: cfg.train_fraction().expect("real data source"),
                    n_splits: cfg.n_members,
                    seed: cfg.seed_base,
                };
                Self::from_dataset(data, Some(report), &spec)
            }
        }
    }

    /// Ensemble of random train/test splits of an in-memory dataset.
    pub fn from_dataset(data: Dataset, report: Option<PreprocessReport>, spec: &SplitSpec) -> Result<Self> {
        let plan = ingest::plan_splits(&data, spec)?;
        let n = plan.source.n_features();
        let feature_names = plan
            .source
            .feature_names
            .clone()
            .unwrap_or_else(|| (1..=n).map(|i| format!("x{i}")).collect());
        let mut warnings = report.as_ref().map(|r| r.warnings.clone()).unwrap_or_default();
        warnings.extend(plan.warnings.iter().cloned());
        Ok(Self {
            n_members: spec.n_splits,
            n_features: n,
            seed_base: spec.seed,
            feature_names,
            report,
            warnings,
            source: Source::Real { plan },
        })
    }

    pub fn truth(&self) -> Option<&GroundTruth> {
        match &self.source {
            Source::Synthetic { truth, .. } => Some(truth),
            Source::Real { .. } => None,
        }
    }

    pub fn member(&self, k: usize) -> Result<Member<'_>> {
        if k >= self.n_members {
            return Err(Error::InvalidInput(format!("member {k} out of range ({} members)", self.n_members)));
        }
        let seed = member_seed(self.seed_base, k);
        match &self.source {
            Source::Synthetic { truth, n_samples, n_test } => {
                let (train, offsets) = generate_uncentered(truth, *n_samples, &mut stream_rng(seed, Stream::Data))?.center();
                let mut test = generate_uncentered(truth, *n_test, &mut stream_rng(seed, Stream::Test))?;
                test.apply_offsets(&offsets);
                Ok(Member { index: k, seed, train, held_out: HeldOut::Owned(test) })
            }
            Source::Real { plan } => {
                let (train, offsets) = plan.train(k);
                let held_out = HeldOut::Rows { source: &plan.source, rows: &plan.row_sets[k].1, offsets };
                Ok(Member { index: k, seed, train, held_out })
            }
        }
    }
}

impl Member<'_> {
    pub fn n_test(&self) -> usize {
        match &self.held_out {
            HeldOut::Owned(d) => d.n_samples(),
            HeldOut::Rows { rows, .. } => rows.len(),
        }
    }

    /// Normalized held-out error `sqrt(Σ(ŷ - y)² / Σ y²)`.
    pub fn test_error(&self, fit: &FitResult) -> Result<f64> {
        match &self.held_out {
            HeldOut::Owned(test) => crate::metrics::member_generalization_error(fit, test),
            HeldOut::Rows { source, rows, offsets } => {
                if fit.w.len() != source.n_features() {
                    return Err(Error::InvalidInput(format!(
                        "fit has {} weights but test set has {} features",
                        fit.w.len(),
                        source.n_features()
                    )));
                }
                let coef = fit.effective_coefficients();
                let shift = offsets.x_means.dot(&coef);
                let full: DVector<f64> = &source.x * &coef;
                let (mut num, mut den) = (0.0, 0.0);
                for &r in rows.iter() {
                    let y = source.y[r] - offsets.y_mean;
                    let e = full[r] - shift - y;
                    num += e * e;
                    den += y * y;
                }
                if den == 0.0 {
                    return Err(Error::DegenerateTest("test targets have zero norm".into()));
                }
                Ok((num / den).sqrt())
            }
        }
    }

    /// The member's held-out set as an owned dataset.
    pub fn test_set(&self) -> Dataset {
        match &self.held_out {
            HeldOut::Owned(d) => d.clone(),
            HeldOut::Rows { source, rows, offsets } => {
                let mut d = source.select_rows(rows);
                d.apply_offsets(offsets);
                d
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{RealSource, SyntheticSource};
    use crate::metrics::member_generalization_error;
    use crate::rng::seeded_rng;
    use crate::solvers::fit_ridge;
    use crate::types::SolverId;
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn synthetic_members_share_teacher_and_differ_in_data() {
        let mut cfg = ExperimentConfig::new(vec![SolverId::Ridge], DataSource::Synthetic(SyntheticSource::square(16, 0.25)));
        cfg.n_members = 3;
        cfg.seed_base = 5;
        let ens = Ensemble::build(&cfg).unwrap();
        assert_eq!(ens.truth().unwrap().n_relevant(), 4);
        let a = ens.member(0).unwrap();
        let b = ens.member(1).unwrap();
        assert_ne!(a.train.x, b.train.x);
        assert!(a.train.is_centered_within_tolerance());
        assert_eq!(a.n_test(), 16);
        assert_eq!(a.seed, 5);
        assert_eq!(ens.member(0).unwrap().train, a.train);
        assert!(ens.member(3).is_err());
    }

    #[test]
    fn row_view_error_matches_materialized() {
        let mut rng = seeded_rng(3);
        let x = DMatrix::from_fn(120, 6, |_, _| 2.0 + rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(120, |i, _| x[(i, 0)] - 0.5 * x[(i, 3)] + 0.1 * rng.sample::<f64, _>(StandardNormal));
        let data = Dataset::new(x, y, None).unwrap();
        let spec = SplitSpec { train_fraction: 0.3, n_splits: 2, seed: 1 };
        let ens = Ensemble::from_dataset(data, None, &spec).unwrap();
        let member = ens.member(1).unwrap();
        assert_eq!((member.train.n_samples(), member.n_test()), (36, 84));
        let fit = fit_ridge(&member.train, 0.5).unwrap();
        let viewed = member.test_error(&fit).unwrap();
        let owned = member_generalization_error(&fit, &member.test_set()).unwrap();
        assert!((viewed - owned).abs() < 1e-12, "{viewed} vs {owned}");
        assert!(viewed < 0.5);
    }

    #[test]
    fn missing_real_data_names_fetch_script() {
        let cfg = ExperimentConfig::new(
            vec![SolverId::Vg],
            DataSource::Cc(RealSource { path: Some("/nonexistent/cc".into()), train_fraction: None }),
        );
        let err = Ensemble::build(&cfg).err().unwrap();
        assert!(matches!(err, Error::MissingData(_)));
        assert!(err.to_string().contains(ingest::FETCH_SCRIPT));
    }
}
