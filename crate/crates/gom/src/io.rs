//! File ingestion and serialization.
//!
//! Response matrices arrive as headerless integer CSV (one subject per row) or
//! MatrixMarket "coordinate integer general" files with 1-based indices, where
//! unstored entries are zeros (no response). Estimation results are written as
//! a versioned JSON document that round-trips every float exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{
    validate_response_matrix, EstimationResult, IngestedMatrix, ItemParams,
    MembershipMatrix, Method,
};
use crate::error::{GomError, Result};

/// Supported response-matrix file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    MatrixMarket,
}

impl MatrixFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(MatrixFormat::Csv),
            "matrix-market" | "mtx" => Ok(MatrixFormat::MatrixMarket),
            other => Err(GomError::InvalidArgument(format!(
                "unknown format '{other}' (expected csv or matrix-market)"
            ))),
        }
    }
}

/// Reads a response matrix, validating entries against `m_max`. When `m_max`
/// is `None` it is inferred as the largest entry observed. All-zero subjects
/// are dropped and reported.
pub fn read_matrix(
    path: &Path,
    format: MatrixFormat,
    m_max: Option<u32>,
) -> Result<IngestedMatrix> {
    let raw = match format {
        MatrixFormat::Csv => read_csv_grid(path)?,
        MatrixFormat::MatrixMarket => read_matrix_market_grid(path)?,
    };
    let m = match m_max {
        Some(m) => m,
        None => raw
            .iter()
            .flat_map(|row| row.iter())
            .cloned()
            .max()
            .unwrap_or(0)
            .try_into()
            .map_err(|_| GomError::InvalidArgument("entries exceed u32".into()))?,
    };
    let m = m.max(1);
    validate_response_matrix(&raw, m)
}

fn format_err(path: &Path, line: usize, message: impl Into<String>) -> GomError {
    GomError::Format {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn read_csv_grid(path: &Path) -> Result<Vec<Vec<i64>>> {
    let file = File::open(path)?;
    let mut rows = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for field in line.split(',') {
            let field = field.trim();
            let value: i64 = field
                .parse()
                .map_err(|_| format_err(path, lineno, format!("not an integer: '{field}'")))?;
            row.push(value);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(format_err(path, 1, "empty file"));
    }
    let width = rows[0].len();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(format_err(
                path,
                i + 1,
                format!("row has {} fields, expected {width}", row.len()),
            ));
        }
    }
    Ok(rows)
}

fn read_matrix_market_grid(path: &Path) -> Result<Vec<Vec<i64>>> {
    let file = File::open(path)?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| format_err(path, 1, "empty file"))?;
    let header = header?;
    let fields: Vec<String> = header.split_whitespace().map(str::to_lowercase).collect();
    let expected = ["%%matrixmarket", "matrix", "coordinate", "integer", "general"];
    if fields.len() != expected.len() || fields.iter().zip(expected).any(|(a, b)| a != b) {
        return Err(format_err(
            path,
            1,
            "expected header '%%MatrixMarket matrix coordinate integer general'",
        ));
    }

    let mut dims: Option<(usize, usize, usize)> = None;
    let mut grid: Vec<Vec<i64>> = Vec::new();
    let mut stored = 0usize;
    for (idx, line) in lines {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = trimmed.split_whitespace().collect();
        match dims {
            None => {
                if parts.len() != 3 {
                    return Err(format_err(path, lineno, "expected 'rows cols nnz'"));
                }
                let n: usize = parts[0]
                    .parse()
                    .map_err(|_| format_err(path, lineno, "bad row count"))?;
                let j: usize = parts[1]
                    .parse()
                    .map_err(|_| format_err(path, lineno, "bad column count"))?;
                let nnz: usize = parts[2]
                    .parse()
                    .map_err(|_| format_err(path, lineno, "bad entry count"))?;
                if n == 0 || j == 0 {
                    return Err(format_err(path, lineno, "zero-sized matrix"));
                }
                grid = vec![vec![0i64; j]; n];
                dims = Some((n, j, nnz));
            }
            Some((n, j, _nnz)) => {
                if parts.len() != 3 {
                    return Err(format_err(path, lineno, "expected 'row col value'"));
                }
                let i: usize = parts[0]
                    .parse()
                    .map_err(|_| format_err(path, lineno, "bad row index"))?;
                let c: usize = parts[1]
                    .parse()
                    .map_err(|_| format_err(path, lineno, "bad column index"))?;
                let v: i64 = parts[2]
                    .parse()
                    .map_err(|_| format_err(path, lineno, "bad integer value"))?;
                if i == 0 || i > n || c == 0 || c > j {
                    return Err(format_err(
                        path,
                        lineno,
                        format!("index ({i}, {c}) outside {n}x{j} (indices are 1-based)"),
                    ));
                }
                grid[i - 1][c - 1] = v;
                stored += 1;
            }
        }
    }
    match dims {
        None => Err(format_err(path, 1, "missing size line")),
        Some((_, _, nnz)) if stored != nnz => Err(format_err(
            path,
            1,
            format!("size line promised {nnz} entries, file stored {stored}"),
        )),
        Some(_) => Ok(grid),
    }
}

/// Serialized estimation result. Matrix rows are row-major; floats survive a
/// round trip exactly (serde_json writes shortest-round-trip decimals).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultDocument {
    pub schema_version: u32,
    pub method: String,
    pub n: usize,
    pub j: usize,
    pub k: usize,
    pub tau: Option<f64>,
    pub elapsed_s: f64,
    pub rho: f64,
    /// Estimated pure subjects, as row positions of `pi_hat`.
    pub index_set: Vec<usize>,
    pub singular_values: Vec<f64>,
    pub pi_hat: Vec<Vec<f64>>,
    pub theta_hat: Vec<Vec<f64>>,
    pub degenerate_rows: Vec<usize>,
    /// Original input rows removed at ingestion (all-zero subjects).
    #[serde(default)]
    pub dropped_rows: Vec<usize>,
    /// Original input index of every kept row, present when rows were dropped;
    /// `subject_ids[i]` is the source row behind `pi_hat` row `i`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject_ids: Option<Vec<usize>>,
}

pub const RESULT_SCHEMA_VERSION: u32 = 1;

impl ResultDocument {
    /// Builds the document, validating the result and refusing non-finite
    /// values. `dropped_rows` lists original indices removed at ingestion.
    pub fn from_result(result: &EstimationResult, dropped_rows: &[usize]) -> Result<Self> {
        result.validate()?;
        let pi = result.pi_hat.weights();
        let theta = result.theta_hat.theta();
        if pi.iter().any(|v| !v.is_finite()) || theta.iter().any(|v| !v.is_finite()) {
            return Err(GomError::InvalidArgument(
                "result contains non-finite values".into(),
            ));
        }
        let subject_ids = if dropped_rows.is_empty() {
            None
        } else {
            let n_total = result.pi_hat.n_subjects() + dropped_rows.len();
            let ids: Vec<usize> =
                (0..n_total).filter(|i| !dropped_rows.contains(i)).collect();
            Some(ids)
        };
        Ok(Self {
            schema_version: RESULT_SCHEMA_VERSION,
            method: result.method.name().to_string(),
            n: result.pi_hat.n_subjects(),
            j: result.theta_hat.n_items(),
            k: result.pi_hat.n_classes(),
            tau: result.tau,
            elapsed_s: result.elapsed,
            rho: result.theta_hat.rho(),
            index_set: result.index_set.clone(),
            singular_values: result.singular_values.clone(),
            pi_hat: to_rows(pi),
            theta_hat: to_rows(theta),
            degenerate_rows: result.degenerate_rows.clone(),
            dropped_rows: dropped_rows.to_vec(),
            subject_ids,
        })
    }

    pub fn to_result(&self) -> Result<EstimationResult> {
        let result = EstimationResult {
            pi_hat: MembershipMatrix::new(from_rows(&self.pi_hat)?)?,
            theta_hat: ItemParams::new(from_rows(&self.theta_hat)?)?,
            index_set: self.index_set.clone(),
            singular_values: self.singular_values.clone(),
            method: Method::parse(&self.method)?,
            tau: self.tau,
            elapsed: self.elapsed_s,
            degenerate_rows: self.degenerate_rows.clone(),
        };
        result.validate()?;
        Ok(result)
    }
}

fn to_rows(m: ndarray::ArrayView2<'_, f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_rows(rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    if rows.is_empty() {
        return Err(GomError::InvalidArgument("empty matrix in document".into()));
    }
    let width = rows[0].len();
    let mut out = Array2::<f64>::zeros((rows.len(), width));
    for (i, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(GomError::InvalidArgument(format!(
                "ragged matrix in document at row {i}"
            )));
        }
        for (j, &v) in row.iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok(out)
}

/// Writes the result document for a fit with no ingestion drops.
pub fn write_result(result: &EstimationResult, path: &Path) -> Result<()> {
    write_result_with_drops(result, &[], path)
}

pub fn write_result_with_drops(
    result: &EstimationResult,
    dropped_rows: &[usize],
    path: &Path,
) -> Result<()> {
    let doc = ResultDocument::from_result(result, dropped_rows)?;
    let mut file = File::create(path)?;
    serde_json::to_writer_pretty(&mut file, &doc)
        .map_err(|e| GomError::InvalidArgument(format!("serialization failed: {e}")))?;
    file.write_all(b"\n")?;
    Ok(())
}

pub fn read_result(path: &Path) -> Result<ResultDocument> {
    let file = File::open(path)?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| format_err(path, e.line(), e.to_string()))
}

/// Reads a headerless CSV of floats (memberships or item parameters).
pub fn read_f64_csv(path: &Path) -> Result<Array2<f64>> {
    let file = File::open(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for field in line.split(',') {
            let field = field.trim();
            let value: f64 = field
                .parse()
                .map_err(|_| format_err(path, lineno, format!("not a number: '{field}'")))?;
            row.push(value);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(format_err(path, 1, "empty file"));
    }
    from_rows(&rows)
}

/// Writes a dense matrix as headerless CSV with shortest-round-trip floats.
pub fn write_f64_csv<W: Write>(m: ndarray::ArrayView2<'_, f64>, mut w: W) -> Result<()> {
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}
