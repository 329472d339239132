//! CSV ingestion and emission.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::{DMatrix, DVector};

/// Numeric table split into features and one response column.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub names: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

/// Reads a headed CSV. Every column other than `response` becomes a
/// feature. Rows are reported 1-based counting the header as row 1.
pub fn load(path: &Path, response: &str) -> Result<Loaded> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let headers = rdr.headers().with_context(|| format!("cannot read header of {}", path.display()))?.clone();
    if headers.is_empty() {
        bail!("{}: header row is empty", path.display());
    }
    let resp = headers
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| anyhow!("{}: no response column '{response}' in header", path.display()))?;
    let names: Vec<String> =
        headers.iter().enumerate().filter(|&(k, _)| k != resp).map(|(_, h)| h.to_string()).collect();
    if names.is_empty() {
        bail!("{}: no feature columns besides '{response}'", path.display());
    }

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| anyhow!("{}: row {row}: {e}", path.display()))?;
        if rec.len() != headers.len() {
            bail!("{}: row {row} has {} fields, header has {}", path.display(), rec.len(), headers.len());
        }
        for (k, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                anyhow!("{}: row {row}, column '{}': cannot parse '{field}' as a number", path.display(), &headers[k])
            })?;
            if !v.is_finite() {
                bail!("{}: row {row}, column '{}': value is not finite", path.display(), &headers[k]);
            }
            if k == resp {
                ys.push(v);
            } else {
                xs.push(v);
            }
        }
    }
    if ys.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    let n = ys.len();
    let x = DMatrix::from_row_slice(n, names.len(), &xs);
    Ok(Loaded { names, x, y: DVector::from_vec(ys) })
}

/// Writes a headed numeric table with shortest round-trip float text.
pub fn write_matrix(path: &Path, names: &[String], x: &DMatrix<f64>, response: &str, y: &DVector<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut header: Vec<&str> = names.iter().map(String::as_str).collect();
    header.push(response);
    w.write_record(&header)?;
    for i in 0..x.nrows() {
        let mut rec: Vec<String> = x.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(y[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}
