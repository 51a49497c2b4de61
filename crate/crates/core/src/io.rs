//! CSV and dense-matrix output.
//!
//! Every file starts with `#` comment lines carrying the artifact version and
//! the normalized run config as one line of JSON, followed by RFC-4180 CSV
//! with a header row. Floats are written with 17 significant digits;
//! non-finite values become empty fields.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::operator::DENSE_LIMIT;
use crate::spectral::EigenPair;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Field {
    fn render(&self) -> String {
        match self {
            Field::Num(x) => format_float(*x),
            Field::Int(i) => i.to_string(),
            Field::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Field {
    fn from(x: f64) -> Self {
        Field::Num(x)
    }
}

impl From<usize> for Field {
    fn from(i: usize) -> Self {
        Field::Int(i as i64)
    }
}

impl From<&str> for Field {
    fn from(s: &str) -> Self {
        Field::Text(s.to_string())
    }
}

impl From<String> for Field {
    fn from(s: String) -> Self {
        Field::Text(s)
    }
}

/// `{:.16e}` for finite values, empty otherwise.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        String::new()
    }
}

/// The comment block written at the top of every output file.
pub fn header(config_json: &str, extra: &[String]) -> String {
    let mut out = format!("# gfv {VERSION}\n# config: {config_json}\n");
    for line in extra {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out
}

/// Writes a CSV table with the comment header.
pub fn write_csv(
    path: &Path,
    config_json: &str,
    extra_header: &[String],
    columns: &[String],
    rows: impl IntoIterator<Item = Vec<Field>>,
) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    file.write_all(header(config_json, extra_header).as_bytes())?;
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(file);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    writer.write_record(columns).map_err(csv_err)?;
    for row in rows {
        if row.len() != columns.len() {
            return Err(Error::Length {
                got: row.len(),
                expected: columns.len(),
            });
        }
        writer
            .write_record(row.iter().map(Field::render))
            .map_err(csv_err)?;
    }
    writer.flush()?;
    Ok(())
}

/// Column names of the diagnostics table for `features` traits.
pub fn diagnostics_columns(features: usize) -> Vec<String> {
    let mut cols: Vec<String> = [
        "t",
        "log_mass",
        "lambda_n",
        "lambda_tau",
        "lambda_gamma",
        "entropy_sq",
        "dissipation_sq",
        "l1_phi",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    cols.extend((0..features).map(|i| format!("slice_f{i}_x1")));
    cols
}

/// One row of the diagnostics table.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticRow {
    pub t: f64,
    pub log_mass: f64,
    pub lambda_n: f64,
    pub lambda_tau: f64,
    pub lambda_gamma: f64,
    pub entropy_sq: f64,
    pub dissipation_sq: f64,
    pub l1_phi: f64,
    pub slices: Vec<f64>,
}

impl DiagnosticRow {
    fn fields(&self) -> Vec<Field> {
        let mut out: Vec<Field> = [
            self.t,
            self.log_mass,
            self.lambda_n,
            self.lambda_tau,
            self.lambda_gamma,
            self.entropy_sq,
            self.dissipation_sq,
            self.l1_phi,
        ]
        .into_iter()
        .map(Field::Num)
        .collect();
        out.extend(self.slices.iter().map(|&s| Field::Num(s)));
        out
    }
}

pub fn write_diagnostics(path: &Path, config_json: &str, rows: &[DiagnosticRow]) -> Result<()> {
    let features = rows.first().map_or(0, |r| r.slices.len());
    write_csv(
        path,
        config_json,
        &[],
        &diagnostics_columns(features),
        rows.iter().map(DiagnosticRow::fields),
    )
}

/// Density of every trait at one time. `values` is feature-major.
pub fn write_snapshot(
    path: &Path,
    config_json: &str,
    t: f64,
    nodes: &[f64],
    values: &[f64],
    log_scale: f64,
) -> Result<()> {
    let l = nodes.len();
    let columns = ["feature", "x", "density", "log_scale"].map(String::from);
    write_csv(
        path,
        config_json,
        &[format!("t = {}", format_float(t))],
        &columns,
        values.iter().enumerate().map(|(idx, &v)| {
            vec![
                Field::from(idx / l),
                Field::Num(nodes[idx % l]),
                Field::Num(v),
                Field::Num(log_scale),
            ]
        }),
    )
}

pub fn write_eigenpair(
    path: &Path,
    config_json: &str,
    nodes: &[f64],
    pair: &EigenPair,
) -> Result<()> {
    let l = nodes.len();
    let columns = ["feature", "x", "N", "phi"].map(String::from);
    write_csv(
        path,
        config_json,
        &[format!("lambda = {}", format_float(pair.lambda))],
        &columns,
        (0..pair.n.len()).map(|idx| {
            vec![
                Field::from(idx / l),
                Field::Num(nodes[idx % l]),
                Field::Num(pair.n[idx]),
                Field::Num(pair.phi[idx]),
            ]
        }),
    )
}

/// Row-major dense matrix, one row per line, entries separated by spaces.
pub fn write_dense(path: &Path, config_json: &str, dim: usize, entries: &[f64]) -> Result<()> {
    if dim > DENSE_LIMIT {
        return Err(Error::Config(format!(
            "dense export is limited to {DENSE_LIMIT} unknowns, got {dim}"
        )));
    }
    if entries.len() != dim * dim {
        return Err(Error::Length {
            got: entries.len(),
            expected: dim * dim,
        });
    }
    let mut file = BufWriter::new(File::create(path)?);
    file.write_all(header(config_json, &[format!("dim = {dim}")]).as_bytes())?;
    for row in entries.chunks(dim) {
        let line: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
        writeln!(file, "{}", line.join(" "))?;
    }
    file.flush()?;
    Ok(())
}

/// Strips the comment header and parses the CSV body. Returns the column
/// names and the raw records.
pub fn read_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let body: String = text
        .split_inclusive('\n')
        .skip_while(|line| line.starts_with('#'))
        .collect();
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let csv_err = |e: csv::Error| Error::Config(format!("malformed CSV: {e}"));
    let columns = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(String::from)
        .collect();
    let rows = reader
        .records()
        .map(|r| r.map(|r| r.iter().map(String::from).collect()))
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_err)?;
    Ok((columns, rows))
}
