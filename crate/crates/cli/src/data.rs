use std::path::Path;

use nalgebra::DMatrix;

use crate::error::CliError;

/// A numeric CSV with a header row.
#[derive(Debug, Clone)]
pub struct Table {
    pub headers: Vec<String>,
    pub values: DMatrix<f64>,
}

pub fn read_numeric(path: &Path) -> Result<Table, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Csv(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Csv(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() {
        return Err(CliError::Csv(format!("{}: no header row", path.display())));
    }
    let mut flat = Vec::new();
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Csv(format!("{}: {e}", path.display())))?;
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                CliError::Csv(format!("{}: row {}, column '{}': '{field}' is not a number", path.display(), i + 2, headers[j]))
            })?;
            flat.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(CliError::Csv(format!("{}: no data rows", path.display())));
    }
    Ok(Table { values: DMatrix::from_row_slice(rows, headers.len(), &flat), headers })
}

/// Coefficient file: a `variable` label column followed by one column per direction.
#[derive(Debug, Clone)]
pub struct Coefficients {
    pub variables: Vec<String>,
    pub basis: DMatrix<f64>,
}

pub fn read_coefficients(path: &Path) -> Result<Coefficients, CliError> {
    let err = |e: String| CliError::Csv(format!("{}: {e}", path.display()));
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| err(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| err(e.to_string()))?.clone();
    let labelled = headers.get(0) == Some("variable");
    let skip = usize::from(labelled);
    let d = headers.len().saturating_sub(skip);
    if d == 0 {
        return Err(err("no coefficient columns".into()));
    }
    let mut variables = Vec::new();
    let mut flat = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        variables.push(if labelled { rec[0].to_string() } else { format!("x{}", i + 1) });
        for field in rec.iter().skip(skip) {
            flat.push(field.parse::<f64>().map_err(|_| err(format!("row {}: '{field}' is not a number", i + 2)))?);
        }
    }
    if variables.is_empty() {
        return Err(err("no rows".into()));
    }
    Ok(Coefficients { basis: DMatrix::from_row_slice(variables.len(), d, &flat), variables })
}

/// Shortest round-trip decimal; zeros (including `-0.0`) print as `0`.
pub fn format_coef(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v}")
    }
}

pub fn write_coefficients(path: &Path, variables: &[String], basis: &DMatrix<f64>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Other(e.to_string()))?;
    let mut header = vec!["variable".to_string()];
    header.extend((1..=basis.ncols()).map(|j| format!("dir{j}")));
    w.write_record(&header).map_err(|e| CliError::Other(e.to_string()))?;
    for (k, name) in variables.iter().enumerate() {
        let mut row = vec![name.clone()];
        row.extend(basis.row(k).iter().map(|v| format_coef(*v)));
        w.write_record(&row).map_err(|e| CliError::Other(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
