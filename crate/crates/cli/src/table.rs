//! Columnar text input.
//!
//! One header row, then one numeric row per observation. The delimiter is a
//! tab if the header contains one, otherwise a comma. A functional covariate
//! `w` observed on `T` grid points is stored as the columns `w[1]` .. `w[T]`.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub path: PathBuf,
    pub headers: Vec<String>,
    /// Column-major values, `columns[j][i]` is row `i` of column `j`.
    pub columns: Vec<Vec<f64>>,
}

fn delimiter_of(text: &str) -> u8 {
    let header = text.lines().next().unwrap_or("");
    if header.contains('\t') {
        b'\t'
    } else {
        b','
    }
}

impl Table {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> CliResult<Self> {
        let parse_err = |line: u64, column: usize, message: String| CliError::Parse {
            path: path.to_path_buf(),
            line,
            column,
            message,
        };
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(delimiter_of(text))
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| parse_err(1, 1, e.to_string()))?
            .iter()
            .map(str::to_owned)
            .collect();
        if headers.is_empty() || headers.iter().all(String::is_empty) {
            return Err(parse_err(1, 1, "missing header row".into()));
        }
        for (j, h) in headers.iter().enumerate() {
            if h.is_empty() {
                return Err(parse_err(1, j + 1, "empty column name".into()));
            }
            if headers[..j].contains(h) {
                return Err(parse_err(1, j + 1, format!("duplicate column `{h}`")));
            }
        }
        let mut columns = vec![Vec::new(); headers.len()];
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                let message = match e.kind() {
                    csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
                        format!("row has {len} fields, header has {expected_len}")
                    }
                    _ => e.to_string(),
                };
                parse_err(line, 1, message)
            })?;
            let line = record.position().map_or(0, |p| p.line());
            for (j, field) in record.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    parse_err(line, j + 1, format!("`{field}` in column `{}` is not a number", headers[j]))
                })?;
                if !v.is_finite() {
                    return Err(parse_err(line, j + 1, format!("non-finite value in column `{}`", headers[j])));
                }
                columns[j].push(v);
            }
        }
        if columns[0].is_empty() {
            return Err(parse_err(2, 1, "no data rows".into()));
        }
        Ok(Self { path: path.to_path_buf(), headers, columns })
    }

    pub fn nrows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> CliResult<&[f64]> {
        self.headers
            .iter()
            .position(|h| h == name)
            .map(|j| self.columns[j].as_slice())
            .ok_or_else(|| CliError::Usage(format!("{}: no column named `{name}`", self.path.display())))
    }

    /// `n x T` block of the columns `name[1]` .. `name[T]`.
    pub fn functional(&self, name: &str) -> CliResult<DMatrix<f64>> {
        let mut cols = Vec::new();
        loop {
            let key = format!("{name}[{}]", cols.len() + 1);
            match self.headers.iter().position(|h| *h == key) {
                Some(j) => cols.push(j),
                None => break,
            }
        }
        if cols.is_empty() {
            return Err(CliError::Usage(format!(
                "{}: functional term `{name}` needs columns `{name}[1]`, `{name}[2]`, ...",
                self.path.display()
            )));
        }
        let stray = format!("{name}[{}]", cols.len() + 2);
        if self.headers.contains(&stray) {
            return Err(CliError::Usage(format!(
                "{}: column `{name}[{}]` is missing",
                self.path.display(),
                cols.len() + 1
            )));
        }
        Ok(DMatrix::from_fn(self.nrows(), cols.len(), |i, j| self.columns[cols[j]][i]))
    }
}
