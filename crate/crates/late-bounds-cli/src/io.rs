//! Input/output plumbing: trial CSV ingestion, input digests, and output
//! destination handling.

use std::fs;
use std::path::Path;

use late_bounds::RawRow;
use sha2::{Digest, Sha256};

use crate::CliError;

/// A trial CSV parsed into candidate rows plus provenance for the report.
pub struct LoadedCsv {
    pub rows: Vec<RawRow>,
    pub covariate_names: Vec<String>,
    pub path: String,
    pub sha256: String,
}

/// Read a trial dataset CSV.
///
/// Schema: a header row naming at least `z`, `a`, and `y`; every other
/// column is a covariate, keyed by its header. `z` takes 0/1 (or
/// true/false), `y` and covariates must be numeric and present; `a` may be
/// empty only on control rows (structural zero).
pub fn read_trial_csv(path: &Path) -> Result<LoadedCsv, CliError> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let sha256 = sha256_hex(&bytes);

    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes.as_slice());
    let headers = reader
        .headers()
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
        .clone();

    let mut z_col = None;
    let mut a_col = None;
    let mut y_col = None;
    let mut covariate_cols: Vec<(usize, String)> = Vec::new();
    for (i, name) in headers.iter().enumerate() {
        match name {
            "z" => z_col = Some(i),
            "a" => a_col = Some(i),
            "y" => y_col = Some(i),
            other => covariate_cols.push((i, other.to_string())),
        }
    }
    let (z_col, a_col, y_col) = match (z_col, a_col, y_col) {
        (Some(z), Some(a), Some(y)) => (z, a, y),
        _ => {
            return Err(CliError::Validation(format!(
                "{}: header must include columns `z`, `a`, and `y` (found: {})",
                path.display(),
                headers.iter().collect::<Vec<_>>().join(", ")
            )))
        }
    };

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // Data row i sits on file line i + 2 (header is line 1).
        let line = i + 2;
        let record =
            record.map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let field = |col: usize| record.get(col).unwrap_or("");

        let z = match field(z_col) {
            "0" | "false" => false,
            "1" | "true" => true,
            other => {
                return Err(CliError::Validation(format!(
                    "{} line {line}: column `z` must be 0/1, got `{other}`",
                    path.display()
                )))
            }
        };
        let a = match field(a_col) {
            "" => None, // allowed only for control rows; validation enforces
            other => Some(parse_cell(other, "a", path, line)?),
        };
        let y_raw = field(y_col);
        if y_raw.is_empty() {
            return Err(CliError::Validation(format!(
                "{} line {line}: column `y` is empty",
                path.display()
            )));
        }
        let y = parse_cell(y_raw, "y", path, line)?;

        let mut covariates = Vec::with_capacity(covariate_cols.len());
        for (col, name) in &covariate_cols {
            let raw = field(*col);
            if raw.is_empty() {
                return Err(CliError::Validation(format!(
                    "{} line {line}: column `{name}` is empty (only `a` may be empty, and only \
                     on control rows)",
                    path.display()
                )));
            }
            covariates.push(parse_cell(raw, name, path, line)?);
        }
        rows.push(RawRow { z, a, y, covariates });
    }

    Ok(LoadedCsv {
        rows,
        covariate_names: covariate_cols.into_iter().map(|(_, n)| n).collect(),
        path: path.display().to_string(),
        sha256,
    })
}

fn parse_cell(raw: &str, column: &str, path: &Path, line: usize) -> Result<f64, CliError> {
    raw.parse::<f64>().map_err(|_| {
        CliError::Validation(format!(
            "{} line {line}: column `{column}` value `{raw}` is not a number",
            path.display()
        ))
    })
}

/// Read a transform table CSV: header `a,h`, one point per row.
pub fn read_transform_table(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes.as_slice());
    let headers = reader
        .headers()
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
        .clone();
    let a_col = headers.iter().position(|h| h == "a");
    let h_col = headers.iter().position(|h| h == "h");
    let (Some(a_col), Some(h_col)) = (a_col, h_col) else {
        return Err(CliError::Validation(format!(
            "{}: transform table header must include columns `a` and `h`",
            path.display()
        )));
    };
    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record =
            record.map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let a = parse_cell(record.get(a_col).unwrap_or(""), "a", path, line)?;
        let h = parse_cell(record.get(h_col).unwrap_or(""), "h", path, line)?;
        points.push((a, h));
    }
    Ok(points)
}

/// Hex-encoded SHA-256 digest.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Write the primary output to `--out` or stdout.
pub fn write_output(out: Option<&Path>, content: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, content)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}
