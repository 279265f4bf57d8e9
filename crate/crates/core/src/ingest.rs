//! Loaders for the Communities & Crime (CC) and Blog Feedback (BF) UCI
//! regression datasets, plus random train/test splitting.
//!
//! CC is read from `CommViolPredUnnormalizedData.txt`: 147 comma-separated
//! columns, no header, `?` for missing values. The columns are 4 identifiers
//! (communityname, state, countyCode, communityCode), 125 attributes of which
//! the first (`fold`) is a cross-validation index, and 18 crime targets.
//!
//! BF is read from a directory holding `blogData_train.csv` followed by the
//! `blogData_test-*.csv` files in lexicographic order, or from a single CSV.
//! Each row has 280 numeric features and the feedback count last.
//!
//! Either loader also accepts a binary dataset cache written by
//! [`crate::io::write_dataset_cache`] and returns it unchanged.

use std::path::{Path, PathBuf};

use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{is_dataset_cache, read_dataset_cache};
use crate::rng::{member_seed, stream_rng, Stream};
use crate::types::{CenteringOffsets, Dataset};

pub const CC_FILE: &str = "CommViolPredUnnormalizedData.txt";
pub const CC_ID_COLUMNS: [&str; 4] = ["communityname", "state", "countyCode", "communityCode"];
pub const CC_N_ATTRIBUTES: usize = 125;
pub const CC_TARGETS: [&str; 18] = [
    "murders",
    "murdPerPop",
    "rapes",
    "rapesPerPop",
    "robberies",
    "robbbPerPop",
    "assaults",
    "assaultPerPop",
    "burglaries",
    "burglPerPop",
    "larcenies",
    "larcPerPop",
    "autoTheft",
    "autoTheftPerPop",
    "arsons",
    "arsonsPerPop",
    "ViolentCrimesPerPop",
    "nonViolPerPop",
];
/// Per-population rates are excluded when choosing the target; only raw counts compete.
pub fn is_count_target(name: &str) -> bool {
    !name.ends_with("PerPop")
}

pub const CC_N_COLUMNS: usize = CC_ID_COLUMNS.len() + CC_N_ATTRIBUTES + CC_TARGETS.len();
pub const CC_EXPECTED_FEATURES: usize = 101;
pub const CC_EXPECTED_INSTANCES: usize = 2215;
pub const CC_CLAMP: f64 = -3.0;

pub const BF_TRAIN_FILE: &str = "blogData_train.csv";
pub const BF_TEST_PREFIX: &str = "blogData_test-";
pub const BF_N_COLUMNS: usize = 281;
/// Leading comment-statistics block used as the quantitative variables.
pub const BF_N_QUANTITATIVE: usize = 60;
pub const BF_EXPECTED_INSTANCES: usize = 60021;

pub const DATA_DIR_ENV: &str = "DATA_DIR";
pub const FETCH_SCRIPT: &str = "scripts/fetch_data.sh";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub dataset: String,
    pub n_raw_attributes: usize,
    pub n_kept_features: usize,
    pub n_instances: usize,
    pub dropped_columns: Vec<String>,
    pub transform_log: Vec<String>,
    pub warnings: Vec<String>,
}

impl PreprocessReport {
    fn warn(&mut self, msg: String) {
        warn!("{msg}");
        self.warnings.push(msg);
    }

    fn from_cache(dataset: &str, path: &Path, data: &Dataset) -> Self {
        Self {
            dataset: dataset.into(),
            n_raw_attributes: data.n_features(),
            n_kept_features: data.n_features(),
            n_instances: data.n_samples(),
            transform_log: vec![format!("loaded preprocessed cache {}", path.display())],
            ..Self::default()
        }
    }
}

/// Data directory resolution: explicit flag, then `$DATA_DIR`, then `./data`.
pub fn resolve_data_dir(flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os(DATA_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from("data"),
    }
}

fn ingest_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Ingest { path: path.to_path_buf(), message: message.into() }
}

fn missing(path: &Path, what: &str) -> Error {
    Error::MissingData(format!(
        "{what} not found at {}; run {FETCH_SCRIPT} or pass --data-dir / set {DATA_DIR_ENV}",
        path.display()
    ))
}

/// Reads a headerless CSV into rows of raw string fields, checking the column count.
fn read_raw_rows(path: &Path, n_cols: usize) -> Result<Vec<Vec<String>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| ingest_err(path, e.to_string()))?;
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| ingest_err(path, e.to_string()))?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != n_cols {
            return Err(ingest_err(path, format!("row {}: expected {n_cols} columns, found {}", line + 1, rec.len())));
        }
        rows.push(rec.iter().map(str::to_owned).collect());
    }
    if rows.is_empty() {
        return Err(ingest_err(path, "file contains no rows"));
    }
    Ok(rows)
}

fn parse_value(field: &str) -> Option<f64> {
    field.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Population mean and standard deviation.
fn mean_std(col: &[f64]) -> (f64, f64) {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn standardize(col: &mut [f64]) -> bool {
    let (mean, std) = mean_std(col);
    if !(std > 0.0) {
        return false;
    }
    for v in col.iter_mut() {
        *v = (*v - mean) / std;
    }
    true
}

/// `sgn(v)·ln(1 + |v|)`.
pub fn signed_log(v: f64) -> f64 {
    v.signum() * v.abs().ln_1p()
}

fn assemble(columns: Vec<Vec<f64>>, names: Vec<String>, y: Vec<f64>) -> Result<Dataset> {
    let m = y.len();
    let x = DMatrix::from_fn(m, columns.len(), |i, j| columns[j][i]);
    Dataset::new(x, DVector::from_vec(y), Some(names))
}

pub fn load_cc(path: &Path) -> Result<(Dataset, PreprocessReport)> {
    let path = if path.is_dir() { path.join(CC_FILE) } else { path.to_path_buf() };
    if !path.exists() {
        return Err(missing(&path, "Communities & Crime file"));
    }
    if is_dataset_cache(&path) {
        let data = read_dataset_cache(&path)?;
        let report = PreprocessReport::from_cache("cc", &path, &data);
        return Ok((data, report));
    }
    let rows = read_raw_rows(&path, CC_N_COLUMNS)?;
    let m = rows.len();
    let mut report = PreprocessReport {
        dataset: "cc".into(),
        n_raw_attributes: CC_N_ATTRIBUTES,
        ..PreprocessReport::default()
    };

    // Target: the raw count column (not a per-population rate) with the largest total.
    let target_base = CC_ID_COLUMNS.len() + CC_N_ATTRIBUTES;
    let mut target: Option<(usize, f64)> = None;
    for (k, name) in CC_TARGETS.iter().enumerate().filter(|(_, n)| is_count_target(n)) {
        let total: f64 = rows.iter().filter_map(|r| parse_value(&r[target_base + k])).sum();
        report.transform_log.push(format!("target candidate {name}: total {total}"));
        if target.is_none_or(|t| total > t.1) {
            target = Some((k, total));
        }
    }
    let (tk, _) = target.ok_or_else(|| ingest_err(&path, "no crime count target"))?;
    let keep_rows: Vec<usize> = (0..m).filter(|&i| parse_value(&rows[i][target_base + tk]).is_some()).collect();
    if keep_rows.len() < m {
        report.warn(format!("dropped {} rows with missing {}", m - keep_rows.len(), CC_TARGETS[tk]));
    }
    let rows: Vec<&Vec<String>> = keep_rows.iter().map(|&i| &rows[i]).collect();
    report.n_instances = rows.len();
    if rows.len() != CC_EXPECTED_INSTANCES {
        report.warn(format!("found {} instances, expected {CC_EXPECTED_INSTANCES}", rows.len()));
    }
    let mut y: Vec<f64> = rows.iter().map(|r| parse_value(&r[target_base + tk]).unwrap_or_default()).collect();
    report.transform_log.push(format!("target = {}", CC_TARGETS[tk]));
    if !standardize(&mut y) {
        return Err(ingest_err(&path, format!("target {} is constant", CC_TARGETS[tk])));
    }
    report.transform_log.push("target standardized".into());

    let parse_column = |j: usize| -> Option<Vec<f64>> { rows.iter().map(|r| parse_value(&r[j])).collect() };

    let mut columns = Vec::new();
    let mut names = Vec::new();
    for a in 0..CC_N_ATTRIBUTES {
        let j = CC_ID_COLUMNS.len() + a;
        let name = format!("attr{:03}", a);
        if a == 0 {
            report.dropped_columns.push("fold".into());
            report.transform_log.push("fold dropped: cross-validation index".into());
            continue;
        }
        let Some(mut col) = parse_column(j).filter(|c| c.iter().all(|&v| v >= 0.0)) else {
            report.dropped_columns.push(name);
            continue;
        };
        let Some(eps) = col.iter().copied().filter(|&v| v > 0.0).reduce(f64::min) else {
            report.dropped_columns.push(name);
            continue;
        };
        for v in col.iter_mut() {
            *v = (*v + eps).ln();
        }
        if !standardize(&mut col) {
            report.dropped_columns.push(name);
            continue;
        }
        for v in col.iter_mut() {
            *v = v.max(CC_CLAMP);
        }
        columns.push(col);
        names.push(name);
    }
    report.transform_log.push("features: ln(v + smallest positive value), standardized, clamped below at -3".into());
    report.n_kept_features = columns.len();
    if columns.len() != CC_EXPECTED_FEATURES {
        report.warn(format!("retained {} features, expected {CC_EXPECTED_FEATURES}", columns.len()));
    }
    if columns.is_empty() {
        return Err(ingest_err(&path, "every attribute was dropped"));
    }
    info!("cc: {} instances, {} features", rows.len(), columns.len());
    Ok((assemble(columns, names, y)?, report))
}

fn bf_files(path: &Path) -> Result<Vec<PathBuf>> {
    if !path.is_dir() {
        return if path.exists() { Ok(vec![path.to_path_buf()]) } else { Err(missing(path, "Blog Feedback file")) };
    }
    let train = path.join(BF_TRAIN_FILE);
    if !train.exists() {
        return Err(missing(&train, "Blog Feedback training file"));
    }
    let mut tests: Vec<PathBuf> = std::fs::read_dir(path)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with(BF_TEST_PREFIX) && n.ends_with(".csv"))
        })
        .collect();
    tests.sort();
    let mut files = vec![train];
    files.extend(tests);
    Ok(files)
}

pub fn load_bf(path: &Path) -> Result<(Dataset, PreprocessReport)> {
    if path.is_file() && is_dataset_cache(path) {
        let data = read_dataset_cache(path)?;
        let report = PreprocessReport::from_cache("bf", path, &data);
        return Ok((data, report));
    }
    let files = bf_files(path)?;
    let mut raw = vec![Vec::new(); BF_N_QUANTITATIVE];
    let mut y = Vec::new();
    for file in &files {
        for (line, row) in read_raw_rows(file, BF_N_COLUMNS)?.iter().enumerate() {
            for (j, col) in raw.iter_mut().enumerate() {
                let v = parse_value(&row[j])
                    .ok_or_else(|| ingest_err(file, format!("row {}: column {} is not numeric", line + 1, j + 1)))?;
                col.push(v);
            }
            let t = parse_value(&row[BF_N_COLUMNS - 1])
                .ok_or_else(|| ingest_err(file, format!("row {}: target is not numeric", line + 1)))?;
            y.push(t);
        }
    }
    let m = y.len();
    let mut report = PreprocessReport {
        dataset: "bf".into(),
        n_raw_attributes: BF_N_COLUMNS - 1,
        n_instances: m,
        ..PreprocessReport::default()
    };
    report.transform_log.push(format!("read {} file(s), train file first then test files by name", files.len()));
    if m != BF_EXPECTED_INSTANCES {
        report.warn(format!("found {m} instances, expected {BF_EXPECTED_INSTANCES}"));
    }

    let mut columns = Vec::with_capacity(2 * BF_N_QUANTITATIVE);
    let mut names = Vec::with_capacity(2 * BF_N_QUANTITATIVE);
    let logged: Vec<Vec<f64>> = raw.iter().map(|c| c.iter().map(|&v| signed_log(v)).collect()).collect();
    for (prefix, block) in [("v", raw), ("slog_v", logged)] {
        for (j, mut col) in block.into_iter().enumerate() {
            let name = format!("{prefix}{:02}", j + 1);
            if standardize(&mut col) {
                columns.push(col);
                names.push(name);
            } else {
                report.dropped_columns.push(name);
            }
        }
    }
    report
        .transform_log
        .push(format!("features: columns 1-{BF_N_QUANTITATIVE} plus signed-log copies, then standardized"));
    if !standardize(&mut y) {
        return Err(ingest_err(path, "target is constant"));
    }
    report.transform_log.push("target standardized".into());
    report.n_kept_features = columns.len();
    if columns.len() != 2 * BF_N_QUANTITATIVE {
        report.warn(format!("retained {} features, expected {}", columns.len(), 2 * BF_N_QUANTITATIVE));
    }
    info!("bf: {} instances, {} features", m, columns.len());
    Ok((assemble(columns, names, y)?, report))
}

pub fn write_report(report: &PreprocessReport, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(report)?)?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub n_splits: usize,
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!("train_fraction must lie in (0, 1), got {}", self.train_fraction)));
        }
        if self.n_splits == 0 {
            return Err(Error::InvalidConfig("n_splits must be positive".into()));
        }
        Ok(())
    }

    pub fn train_size(&self, m: usize) -> usize {
        (self.train_fraction * m as f64).round() as usize
    }
}

#[derive(Clone, Debug)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
    /// Sorted row indices of the training set in the source dataset.
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

/// Splits plus the columns removed because some training set left them constant.
#[derive(Clone, Debug)]
pub struct SplitSet {
    pub splits: Vec<Split>,
    pub dropped_columns: Vec<String>,
    pub warnings: Vec<String>,
}

/// Row assignments for every split over a column-reduced source, without
/// materializing the member datasets.
#[derive(Clone, Debug)]
pub struct SplitPlan {
    /// Source data with the dropped columns removed (uncentered).
    pub source: Dataset,
    /// `(train_rows, test_rows)` per split, both sorted.
    pub row_sets: Vec<(Vec<usize>, Vec<usize>)>,
    pub dropped_columns: Vec<String>,
    pub warnings: Vec<String>,
}

impl SplitPlan {
    pub fn len(&self) -> usize {
        self.row_sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_sets.is_empty()
    }

    /// Centered training set of split `k` and the offsets it removed.
    pub fn train(&self, k: usize) -> (Dataset, CenteringOffsets) {
        self.source.select_rows(&self.row_sets[k].0).center()
    }

    pub fn materialize(&self, k: usize) -> Split {
        let (train_rows, test_rows) = self.row_sets[k].clone();
        let (train, offsets) = self.train(k);
        let mut test = self.source.select_rows(&test_rows);
        test.apply_offsets(&offsets);
        Split { train, test, train_rows, test_rows }
    }
}

/// Independent random splits. Split `k` draws its rows from the split
/// stream of `seed + k`, so each split is reproducible on its own.
pub fn plan_splits(data: &Dataset, spec: &SplitSpec) -> Result<SplitPlan> {
    spec.validate()?;
    let m = data.n_samples();
    let n_train = spec.train_size(m);
    if n_train == 0 || n_train >= m {
        return Err(Error::InvalidConfig(format!("train size {n_train} leaves no train or test rows out of {m}")));
    }
    let mut warnings = Vec::new();
    if n_train < data.n_features() {
        let msg = format!("training size {n_train} is below the feature count {}", data.n_features());
        warn!("{msg}");
        warnings.push(msg);
    }

    let mut row_sets = Vec::with_capacity(spec.n_splits);
    for k in 0..spec.n_splits {
        let mut rng = stream_rng(member_seed(spec.seed, k), Stream::Split);
        let mut train_rows = index::sample(&mut rng, m, n_train).into_vec();
        train_rows.sort_unstable();
        let mut in_train = vec![false; m];
        for &r in &train_rows {
            in_train[r] = true;
        }
        let test_rows: Vec<usize> = (0..m).filter(|&r| !in_train[r]).collect();
        row_sets.push((train_rows, test_rows));
    }

    // Columns constant on any training set are removed from every split so all members share N.
    let mut constant = vec![false; data.n_features()];
    for (train_rows, _) in &row_sets {
        for (j, flag) in constant.iter_mut().enumerate() {
            let first = data.x[(train_rows[0], j)];
            if train_rows.iter().all(|&r| data.x[(r, j)] == first) {
                *flag = true;
            }
        }
    }
    let keep: Vec<usize> = (0..data.n_features()).filter(|&j| !constant[j]).collect();
    if keep.is_empty() {
        return Err(Error::DegenerateTest("every column is constant on some training set".into()));
    }
    let names = data.feature_names.clone();
    let name_of = |j: usize| names.as_ref().map_or_else(|| format!("x{j}"), |n| n[j].clone());
    let dropped_columns: Vec<String> = (0..data.n_features()).filter(|&j| constant[j]).map(name_of).collect();
    let source = if dropped_columns.is_empty() {
        Dataset { centered: false, ..data.clone() }
    } else {
        let msg = format!("dropped {} column(s) constant on a training set", dropped_columns.len());
        warn!("{msg}");
        warnings.push(msg);
        Dataset {
            x: data.x.select_columns(keep.iter()),
            y: data.y.clone(),
            feature_names: names.as_ref().map(|n| keep.iter().map(|&j| n[j].clone()).collect()),
            centered: false,
        }
    };
    Ok(SplitPlan { source, row_sets, dropped_columns, warnings })
}

pub fn make_splits(data: &Dataset, spec: &SplitSpec) -> Result<SplitSet> {
    let plan = plan_splits(data, spec)?;
    let splits = (0..plan.len()).map(|k| plan.materialize(k)).collect();
    Ok(SplitSet { splits, dropped_columns: plan.dropped_columns, warnings: plan.warnings })
}

/// Writers for synthetic raw files laid out exactly like the public
/// downloads. They exercise the loaders when the real files are absent.
pub mod fixtures {
    use std::fmt::Write as _;
    use std::path::Path;

    use rand::Rng as _;

    use super::*;
    use crate::rng::seeded_rng;

    /// Attribute positions (0 = fold) that get `?` entries in the CC fixture.
    pub fn cc_missing_attributes() -> Vec<usize> {
        (0..23).map(|k| 100 + k).collect()
    }

    pub fn write_cc_raw(path: &Path, n_rows: usize, seed: u64) -> Result<()> {
        let mut rng = seeded_rng(seed);
        let missing_attrs = cc_missing_attributes();
        let mut out = String::with_capacity(n_rows * CC_N_COLUMNS * 6);
        for i in 0..n_rows {
            write!(out, "Town{i}city,{},", rng.random_range(1..57)).unwrap();
            // County and community codes are missing for many rows in the real file.
            if i % 3 == 0 {
                out.push_str("?,?,");
            } else {
                write!(out, "{},{},", rng.random_range(1..800), rng.random_range(1..90000)).unwrap();
            }
            write!(out, "{}", 1 + i % 10).unwrap();
            for a in 1..CC_N_ATTRIBUTES {
                if missing_attrs.contains(&a) && i % 7 != 0 {
                    out.push_str(",?");
                } else if a % 4 == 0 {
                    write!(out, ",{:.2}", rng.random_range(0.0..100.0)).unwrap();
                } else {
                    write!(out, ",{}", rng.random_range(0..5000u32)).unwrap();
                }
            }
            for k in 0..CC_TARGETS.len() {
                // Rates are large but never win; larcenies is the largest count.
                let hi = match CC_TARGETS[k] {
                    n if !is_count_target(n) => 20_000,
                    "larcenies" => 3000,
                    _ => 100 * (k as u32 + 1),
                };
                if k == 2 && i % 50 == 0 {
                    out.push_str(",?");
                } else {
                    write!(out, ",{}", rng.random_range(0..hi)).unwrap();
                }
            }
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    fn bf_rows(out: &mut String, n_rows: usize, rng: &mut crate::rng::Rng) {
        for _ in 0..n_rows {
            for j in 0..BF_N_COLUMNS - 1 {
                let v: u32 = if j < 62 { rng.random_range(0..200) } else { rng.random_range(0..2) };
                write!(out, "{v}.0,").unwrap();
            }
            writeln!(out, "{}.0", rng.random_range(0..40u32)).unwrap();
        }
    }

    /// Writes `blogData_train.csv` and `test_rows.len()` test files into `dir`.
    pub fn write_bf_raw(dir: &Path, train_rows: usize, test_rows: &[usize], seed: u64) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut rng = seeded_rng(seed);
        let mut out = String::new();
        bf_rows(&mut out, train_rows, &mut rng);
        std::fs::write(dir.join(BF_TRAIN_FILE), &out)?;
        for (k, &rows) in test_rows.iter().enumerate() {
            out.clear();
            bf_rows(&mut out, rows, &mut rng);
            let name = format!("{BF_TEST_PREFIX}2012.{:02}.{:02}.00_00.csv", 2 + k / 28, 1 + k % 28);
            std::fs::write(dir.join(name), &out)?;
        }
        Ok(())
    }
}
