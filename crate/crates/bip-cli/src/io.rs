//! File formats: matrix CSV (header row of feature names, first column of
//! sample IDs), two-column group CSV, and atomic writes via temp + rename.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;

pub struct MatrixFile {
    pub feature_names: Vec<String>,
    pub sample_ids: Vec<String>,
    /// n x p, samples in rows.
    pub values: DMatrix<f64>,
}

pub fn read_matrix(path: &Path) -> Result<MatrixFile> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let headers = reader.headers()?.clone();
    if headers.len() < 2 {
        bail!("{}: need an id column plus at least one feature", path.display());
    }
    let feature_names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut sample_ids = Vec::new();
    let mut rows: Vec<f64> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            bail!(
                "{}: row {} has {} fields, header has {}",
                path.display(),
                i + 2,
                record.len(),
                headers.len()
            );
        }
        sample_ids.push(record[0].to_string());
        for field in record.iter().skip(1) {
            rows.push(field.trim().parse::<f64>().with_context(|| {
                format!("{}: row {}: bad numeric field '{field}'", path.display(), i + 2)
            })?);
        }
    }
    if sample_ids.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    let n = sample_ids.len();
    let p = feature_names.len();
    let values = DMatrix::from_row_slice(n, p, &rows);
    Ok(MatrixFile {
        feature_names,
        sample_ids,
        values,
    })
}

/// Write bytes atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, content: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)
            .with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(content)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn write_matrix(
    path: &Path,
    feature_names: &[String],
    sample_ids: &[String],
    values: &DMatrix<f64>,
) -> Result<()> {
    let mut out = String::new();
    out.push_str("id");
    for name in feature_names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (i, id) in sample_ids.iter().enumerate() {
        out.push_str(id);
        for j in 0..values.ncols() {
            out.push(',');
            out.push_str(&format!("{}", values[(i, j)]));
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Rows = entities named in the first column, columns = components.
pub fn write_component_table(path: &Path, row_names: &[String], values: &DMatrix<f64>) -> Result<()> {
    let mut out = String::from("id");
    for l in 1..=values.ncols() {
        out.push_str(&format!(",comp{l}"));
    }
    out.push('\n');
    for (i, name) in row_names.iter().enumerate() {
        out.push_str(name);
        for j in 0..values.ncols() {
            out.push(',');
            out.push_str(&format!("{}", values[(i, j)]));
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Two-column group CSV (feature,group); features may repeat for
/// multi-membership. Returns the membership matrix aligned to
/// `feature_names` plus group names in first-appearance order.
pub fn read_groups(path: &Path, feature_names: &[String]) -> Result<(DMatrix<u8>, Vec<String>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut group_names: Vec<String> = Vec::new();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let index: std::collections::HashMap<&str, usize> = feature_names
        .iter()
        .enumerate()
        .map(|(j, n)| (n.as_str(), j))
        .collect();
    for record in reader.records() {
        let record = record?;
        if record.len() != 2 {
            bail!("{}: group rows must be feature,group", path.display());
        }
        let feature = record[0].trim();
        let group = record[1].trim();
        let Some(&j) = index.get(feature) else {
            bail!("{}: unknown feature '{feature}'", path.display());
        };
        let k = match group_names.iter().position(|g| g == group) {
            Some(k) => k,
            None => {
                group_names.push(group.to_string());
                group_names.len() - 1
            }
        };
        pairs.push((j, k));
    }
    if group_names.is_empty() {
        bail!("{}: no group rows", path.display());
    }
    let mut membership = DMatrix::<u8>::zeros(feature_names.len(), group_names.len());
    for (j, k) in pairs {
        membership[(j, k)] = 1;
    }
    Ok((membership, group_names))
}

pub fn write_groups(path: &Path, feature_names: &[String], membership: &DMatrix<u8>, group_names: &[String]) -> Result<()> {
    let mut out = String::from("feature,group\n");
    for j in 0..membership.nrows() {
        for k in 0..membership.ncols() {
            if membership[(j, k)] == 1 {
                out.push_str(&format!("{},{}\n", feature_names[j], group_names[k]));
            }
        }
    }
    write_atomic(path, out.as_bytes())
}
