//! Dataset file formats.
//!
//! CSV: an optional `#format=garrote-dataset-csv,version=1,centered=<bool>`
//! comment line, then a header of feature names followed by `target`, then
//! one row per sample.
//!
//! Binary cache (little-endian):
//!
//! ```text
//! magic    8 bytes  "GRTDSET\0"
//! version  u32      currently 1
//! centered u8
//! rows     u64
//! cols     u64
//! names    u8 flag, then per column: u32 byte length + UTF-8 bytes
//! x        rows*cols f64, row-major
//! y        rows f64
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::types::Dataset;

pub const CACHE_MAGIC: &[u8; 8] = b"GRTDSET\0";
pub const CACHE_VERSION: u32 = 1;
pub const CSV_VERSION: u32 = 1;

fn column_names(data: &Dataset) -> Vec<String> {
    data.feature_names
        .clone()
        .unwrap_or_else(|| (0..data.n_features()).map(|i| format!("x{i}")).collect())
}

pub fn write_dataset_csv(data: &Dataset, path: &Path) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "#format=garrote-dataset-csv,version={CSV_VERSION},centered={}", data.centered)?;
    let mut wtr = csv::Writer::from_writer(file);
    let mut header = column_names(data);
    header.push("target".into());
    wtr.write_record(&header)?;
    let mut row = Vec::with_capacity(data.n_features() + 1);
    for mu in 0..data.n_samples() {
        row.clear();
        row.extend(data.x.row(mu).iter().map(|v| format_f64(*v)));
        row.push(format_f64(data.y[mu]));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Shortest representation that parses back to the same bits.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let centered = text
        .lines()
        .next()
        .filter(|l| l.starts_with('#'))
        .map(|l| l.contains("centered=true"))
        .unwrap_or(false);
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    if header.len() < 2 || header.get(header.len() - 1) != Some("target") {
        return Err(Error::Ingest { path: path.into(), message: "last column must be named 'target'".into() });
    }
    let n = header.len() - 1;
    let names: Vec<String> = header.iter().take(n).map(str::to_owned).collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != n + 1 {
            return Err(Error::Ingest { path: path.into(), message: format!("row {line} has {} fields", record.len()) });
        }
        for (k, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::Ingest {
                path: path.into(),
                message: format!("row {line}, column '{}': cannot parse '{field}'", header.get(k).unwrap_or("?")),
            })?;
            if k < n {
                xs.push(v);
            } else {
                ys.push(v);
            }
        }
    }
    let m = ys.len();
    let mut data = Dataset::new(DMatrix::from_row_slice(m, n, &xs), DVector::from_vec(ys), Some(names))?;
    data.centered = centered;
    Ok(data)
}

pub fn write_dataset_cache(data: &Dataset, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(CACHE_MAGIC)?;
    out.write_all(&CACHE_VERSION.to_le_bytes())?;
    out.write_all(&[u8::from(data.centered)])?;
    out.write_all(&(data.n_samples() as u64).to_le_bytes())?;
    out.write_all(&(data.n_features() as u64).to_le_bytes())?;
    match &data.feature_names {
        Some(names) => {
            out.write_all(&[1])?;
            for name in names {
                out.write_all(&(name.len() as u32).to_le_bytes())?;
                out.write_all(name.as_bytes())?;
            }
        }
        None => out.write_all(&[0])?,
    }
    for mu in 0..data.n_samples() {
        for v in data.x.row(mu).iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    for v in data.y.iter() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// True when the file starts with the cache magic bytes.
pub fn is_dataset_cache(path: &Path) -> bool {
    let mut magic = [0u8; 8];
    File::open(path).and_then(|mut f| f.read_exact(&mut magic)).is_ok() && &magic == CACHE_MAGIC
}

pub fn read_dataset_cache(path: &Path) -> Result<Dataset> {
    let mut inp = BufReader::new(File::open(path)?);
    let bad = |message: String| Error::Ingest { path: path.into(), message };
    let mut magic = [0u8; 8];
    inp.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(bad("not a dataset cache (bad magic)".into()));
    }
    let version = read_u32(&mut inp)?;
    if version != CACHE_VERSION {
        return Err(bad(format!("unsupported cache version {version}")));
    }
    let centered = read_u8(&mut inp)? != 0;
    let m = read_u64(&mut inp)? as usize;
    let n = read_u64(&mut inp)? as usize;
    let names = if read_u8(&mut inp)? == 1 {
        let mut names = Vec::with_capacity(n);
        for _ in 0..n {
            let len = read_u32(&mut inp)? as usize;
            let mut buf = vec![0u8; len];
            inp.read_exact(&mut buf)?;
            names.push(String::from_utf8(buf).map_err(|e| bad(e.to_string()))?);
        }
        Some(names)
    } else {
        None
    };
    let mut xs = vec![0.0; m * n];
    for v in xs.iter_mut() {
        *v = read_f64(&mut inp)?;
    }
    let mut ys = vec![0.0; m];
    for v in ys.iter_mut() {
        *v = read_f64(&mut inp)?;
    }
    let mut data = Dataset::new(DMatrix::from_row_slice(m, n, &xs), DVector::from_vec(ys), names)?;
    data.centered = centered;
    Ok(data)
}

fn read_u8(r: &mut impl Read) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
