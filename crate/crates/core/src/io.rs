//! CSV tables: header row, LF endings, 17 significant digits per number.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::analysis::FieldSpectrum;
use crate::dynamics::{ControlField, TimeGrid, Trajectory};
use crate::error::{QslError, Result};
use crate::model::{eigen_spectrum, SystemSpec};

/// `x` with 17 significant digits; reads back to the identical `f64`.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> QslError {
    QslError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Writes pre-formatted cells.
pub fn write_csv<W: Write>(out: W, header: &[&str], rows: &[Vec<String>]) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()
}

pub fn write_csv_file(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    write_csv(f, header, rows).map_err(|e| io_err(path, e))
}

pub fn write_table_file(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| r.iter().map(|&x| fmt_num(x)).collect())
        .collect();
    write_csv_file(path, header, &cells)
}

/// Parses an all-numeric table; `label` names the source in errors.
pub fn read_table<R: Read>(input: R, label: &str) -> Result<Table> {
    let parse_err = |line: u64, message: String| QslError::Parse {
        path: label.to_string(),
        line,
        message,
    };
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = r
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = rec
            .iter()
            .enumerate()
            .map(|(col, cell)| {
                cell.parse::<f64>().map_err(|_| {
                    parse_err(line, format!("column {}: not a number: {cell:?}", col + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Table { header, rows })
}

pub fn read_table_file(path: &Path) -> Result<Table> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    read_table(f, &path.display().to_string())
}

/// `t,lambda` with `t` the interval midpoint.
pub fn write_field(path: &Path, field: &ControlField) -> Result<()> {
    let rows: Vec<Vec<f64>> = field
        .grid
        .midpoints()
        .into_iter()
        .zip(&field.values)
        .map(|(t, &v)| vec![t, v])
        .collect();
    write_table_file(path, &["t", "lambda"], &rows)
}

/// Inverse of [`write_field`]. Midpoints must be uniformly spaced.
pub fn read_field(path: &Path) -> Result<ControlField> {
    let table = read_table_file(path)?;
    field_from_table(&table, &path.display().to_string())
}

pub fn field_from_table(table: &Table, label: &str) -> Result<ControlField> {
    let err = |line: u64, message: String| QslError::Parse {
        path: label.to_string(),
        line,
        message,
    };
    if table.header.len() != 2 {
        return Err(err(1, format!("expected 2 columns (t, lambda), found {}", table.header.len())));
    }
    let n = table.rows.len();
    if n == 0 {
        return Err(err(1, "no samples".into()));
    }
    let dt = 2.0 * table.rows[0][0];
    if !(dt > 0.0) {
        return Err(err(2, format!("first midpoint must be positive, got {}", table.rows[0][0])));
    }
    for (j, row) in table.rows.iter().enumerate() {
        let expect = (j as f64 + 0.5) * dt;
        if (row[0] - expect).abs() > 1e-9 * dt.max(expect) {
            return Err(err(
                j as u64 + 2,
                format!("non-uniform sampling: t = {} where {expect} expected", row[0]),
            ));
        }
    }
    let grid = TimeGrid::new(n as f64 * dt, n)?;
    ControlField::new(grid, table.rows.iter().map(|r| r[1]).collect())
}

/// `t,P_0,...,P_{N-1}` at every grid point.
pub fn write_populations(path: &Path, traj: &Trajectory) -> Result<()> {
    let n = traj.states.first().map_or(0, |s| s.dim());
    let names: Vec<String> = std::iter::once("t".to_string())
        .chain((0..n).map(|k| format!("P_{k}")))
        .collect();
    let header: Vec<&str> = names.iter().map(String::as_str).collect();
    let rows: Vec<Vec<f64>> = traj
        .grid
        .times()
        .into_iter()
        .zip(&traj.states)
        .map(|(t, s)| std::iter::once(t).chain(s.populations()).collect())
        .collect();
    write_table_file(path, &header, &rows)
}

/// `lambda,E_0,...,E_{N-1}` over `lambdas`.
pub fn write_eigen_spectrum(path: &Path, spec: &SystemSpec, lambdas: &[f64]) -> Result<()> {
    let names: Vec<String> = std::iter::once("lambda".to_string())
        .chain((0..spec.n_levels).map(|k| format!("E_{k}")))
        .collect();
    let header: Vec<&str> = names.iter().map(String::as_str).collect();
    let rows = lambdas
        .iter()
        .map(|&l| Ok(std::iter::once(l).chain(eigen_spectrum(spec, l)?).collect()))
        .collect::<Result<Vec<Vec<f64>>>>()?;
    write_table_file(path, &header, &rows)
}

/// `frequency,amplitude`.
pub fn write_field_spectrum(path: &Path, sp: &FieldSpectrum) -> Result<()> {
    let rows: Vec<Vec<f64>> = sp
        .frequencies
        .iter()
        .zip(&sp.amplitudes)
        .map(|(&f, &a)| vec![f, a])
        .collect();
    write_table_file(path, &["frequency", "amplitude"], &rows)
}
