//! Reading data and models, writing reports.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use mtvar_core::{SeriesMatrix, VarModel};

use crate::CliError;

pub const SCHEMA: &str = "mtvar-report/1";

#[derive(Debug, Clone, Copy)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub diff: bool,
    pub demean: bool,
}

fn is_number(s: &str) -> bool {
    s.trim().parse::<f64>().is_ok()
}

/// Reads a numeric table. A first row with any non-numeric cell is taken
/// as a header. Row numbers in errors count data rows from 1.
pub fn ingest_csv(path: &Path, opts: CsvOptions) -> Result<SeriesMatrix, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    let mut header_seen = false;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        if i == 0 && rec.iter().any(|c| !is_number(c)) {
            header_seen = true;
            width = Some(rec.len());
            continue;
        }
        let row_no = rows.len() + 1;
        if let Some(w) = width {
            if rec.len() != w {
                return Err(CliError::Input(format!(
                    "{}: row {row_no} has {} columns, expected {w}",
                    path.display(),
                    rec.len()
                )));
            }
        }
        width = Some(rec.len());
        let mut row = Vec::with_capacity(rec.len());
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                CliError::Input(format!("{}: row {row_no}, column {}: cannot parse '{cell}'", path.display(), j + 1))
            })?;
            if !v.is_finite() {
                return Err(CliError::Input(format!(
                    "{}: row {row_no}, column {}: non-finite value '{cell}'",
                    path.display(),
                    j + 1
                )));
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        let what = if header_seen { "only a header" } else { "no data rows" };
        return Err(CliError::Input(format!("{}: file has {what}", path.display())));
    }
    let mut x = SeriesMatrix::from_rows(&rows)?;
    if opts.diff {
        x = x.differenced();
    }
    if opts.demean {
        x = x.demeaned();
    }
    Ok(x)
}

pub fn write_csv_rows(out: Option<&PathBuf>, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(fs::File::create(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let io = |e: csv::Error| CliError::Input(format!("writing CSV: {e}"));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Input(format!("writing CSV: {e}")))?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum MatrixRepr {
    Nested(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

/// A VAR model file: `{"d": 2, "p": 1, "A": [[[a11, a12], [a21, a22]]]}`.
/// Each matrix may also be given as a flat row-major list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub d: usize,
    pub p: usize,
    #[serde(rename = "A")]
    a: Vec<MatrixRepr>,
}

impl ModelFile {
    pub fn from_model(m: &VarModel) -> Self {
        let a = (1..=m.p0)
            .map(|i| {
                let c = m.coefficient(i);
                MatrixRepr::Nested((0..m.d).map(|r| (0..m.d).map(|k| c[(r, k)]).collect()).collect())
            })
            .collect();
        Self { d: m.d, p: m.p0, a }
    }

    pub fn to_model(&self, p1: usize) -> Result<VarModel, CliError> {
        let d = self.d;
        if self.a.len() != self.p {
            return Err(CliError::Input(format!("model lists {} matrices but p = {}", self.a.len(), self.p)));
        }
        if self.p == 0 {
            return Ok(VarModel::white_noise(d, p1.max(1))?);
        }
        let mut coefs = Vec::with_capacity(self.p);
        for (i, m) in self.a.iter().enumerate() {
            let bad = || CliError::Input(format!("matrix A{} is not {d}×{d}", i + 1));
            let mat = match m {
                MatrixRepr::Nested(rows) => {
                    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                        return Err(bad());
                    }
                    DMatrix::from_fn(d, d, |r, c| rows[r][c])
                }
                MatrixRepr::Flat(v) => {
                    if v.len() != d * d {
                        return Err(bad());
                    }
                    DMatrix::from_row_slice(d, d, v)
                }
            };
            coefs.push(mat);
        }
        if p1 < self.p {
            return Err(CliError::Input(format!("p1 = {p1} is below the model order {}", self.p)));
        }
        Ok(VarModel::from_coefficients(&coefs, p1)?)
    }
}

pub fn read_model(path: &Path) -> Result<ModelFile, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Self-describing output envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub schema: String,
    pub command: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub result: T,
}

pub fn emit_json<T: Serialize>(value: &T, out: Option<&PathBuf>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Input(format!("serializing report: {e}")))?;
    match out {
        Some(p) => fs::write(p, text + "\n").map_err(|e| CliError::Input(format!("{}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}
