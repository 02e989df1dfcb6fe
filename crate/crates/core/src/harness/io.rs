use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::report::Report;
use crate::error::{Error, Result};
use crate::linalg::{DesignData, Matrix, Vector};

/// Layout of a design CSV.
#[derive(Debug, Clone, Default)]
pub struct CsvOptions {
    pub header: bool,
    /// Response column name; the last column when absent.
    pub response: Option<String>,
}

fn parse_error(line: u64, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

/// Reads a rectangular table of reals and the header row, if any.
pub fn read_table(path: &Path, header: bool) -> Result<(Option<Vec<String>>, Matrix)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_path(path).map_err(csv_error)?;
    let mut names = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        if header && names.is_none() {
            names = Some(record.iter().map(|s| s.trim().to_owned()).collect());
            continue;
        }
        let width = names.as_ref().map(Vec::len).or_else(|| rows.first().map(Vec::len));
        if let Some(w) = width {
            if record.len() != w {
                return Err(parse_error(line, format!("expected {w} fields, found {}", record.len())));
            }
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(k, cell)| {
                let v: f64 = cell.trim().parse().map_err(|_| parse_error(line, format!("field {} is not a number: {cell:?}", k + 1)))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(parse_error(line, format!("field {} is not finite", k + 1)))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let ncols = names.as_ref().map(Vec::len).or_else(|| rows.first().map(Vec::len)).unwrap_or(0);
    Ok((names, Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j])))
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => parse_error(line, format!("{other:?}")),
    }
}

/// Loads `X` and `Y` from a CSV file.
pub fn load_csv(path: &Path, options: &CsvOptions) -> Result<DesignData> {
    let (names, table) = read_table(path, options.header)?;
    if table.ncols() < 2 {
        return Err(Error::domain("a design CSV needs at least one predictor and the response"));
    }
    let response = match (&options.response, &names) {
        (Some(name), Some(names)) => names
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::domain(format!("no column named {name:?}")))?,
        (Some(_), None) => return Err(Error::domain("a named response column needs a header row")),
        (None, _) => table.ncols() - 1,
    };
    let predictors: Vec<usize> = (0..table.ncols()).filter(|&j| j != response).collect();
    let x = table.select_columns(&predictors);
    let y = Vector::from_iterator(table.nrows(), table.column(response).iter().copied());
    DesignData::new(x, y)
}

/// Writes a matrix with 17 significant digits, so reading it back is exact.
pub fn write_matrix_csv(m: &Matrix, path: &Path, header: Option<&[String]>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    if let Some(h) = header {
        if h.len() != m.ncols() {
            return Err(Error::dim("header and matrix disagree on the column count"));
        }
        writeln!(out, "{}", h.join(","))?;
    }
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `[X | Y]` in the layout `load_csv` reads by default.
pub fn write_design_csv(data: &DesignData, path: &Path) -> Result<()> {
    let mut m = data.x().clone().insert_column(data.p(), 0.0);
    m.set_column(data.p(), data.y());
    write_matrix_csv(&m, path, None)
}

pub fn report_json(report: &Report) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn write_report(report: &Report, path: &Path) -> Result<()> {
    std::fs::write(path, report_json(report)?)?;
    Ok(())
}

/// Flattens the scalar values of the per-rep records into a table with one
/// row per record and one column per value key.
pub fn write_records_csv(report: &Report, path: &Path) -> Result<()> {
    let keys: std::collections::BTreeSet<&String> = report.records.iter().flat_map(|r| r.values.keys()).collect();
    let mut out = BufWriter::new(File::create(path)?);
    let header: Vec<&str> = std::iter::once("rep").chain(keys.iter().map(|k| k.as_str())).collect();
    writeln!(out, "{}", header.join(","))?;
    for r in &report.records {
        let cells: Vec<String> = std::iter::once(r.rep.to_string())
            .chain(keys.iter().map(|k| r.values.get(*k).map(|v| format!("{v:.16e}")).unwrap_or_default()))
            .collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}
